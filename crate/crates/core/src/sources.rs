//! The eight bibliographic sources behind a uniform lookup interface. The
//! fixture implementation reads a local per-source table keyed by the
//! canonical 13-digit ISBN; live HTTP adapters are pluggable behind the
//! same contract and are configuration-driven.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::isbn::Isbn;
use crate::record::RecordError;
use crate::textnorm::normalize;

/// The eight sources, in frozen order: the enum order defines feature
/// indices 0-7 in the ranker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceId {
    OpenLibrary,
    Isbndb,
    Goodreads,
    GoogleBooks,
    Oclc,
    Bnf,
    Sudoc,
    Babelio,
}

impl SourceId {
    pub const ALL: [SourceId; 8] = [
        SourceId::OpenLibrary,
        SourceId::Isbndb,
        SourceId::Goodreads,
        SourceId::GoogleBooks,
        SourceId::Oclc,
        SourceId::Bnf,
        SourceId::Sudoc,
        SourceId::Babelio,
    ];

    /// The ranker feature index of this source (0-7).
    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&s| s == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            SourceId::OpenLibrary => "open-library",
            SourceId::Isbndb => "isbndb",
            SourceId::Goodreads => "goodreads",
            SourceId::GoogleBooks => "google-books",
            SourceId::Oclc => "oclc",
            SourceId::Bnf => "bnf",
            SourceId::Sudoc => "sudoc",
            SourceId::Babelio => "babelio",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceStatus {
    Found,
    NotFound,
    Unavailable,
}

/// One source's answer for one ISBN. `found` implies non-empty names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceAnswer {
    pub source: SourceId,
    pub author_names: Vec<String>,
    pub status: SourceStatus,
}

impl SourceAnswer {
    pub fn found(&self) -> bool {
        self.status == SourceStatus::Found
    }
}

/// The lookup contract shared by the fixture implementation and live
/// adapters: pure per (source, ISBN), errors surface as `Unavailable`.
pub trait SourceLookup {
    fn lookup(&self, source: SourceId, isbn: &Isbn) -> SourceAnswer;
}

/// Query all 8 sources; the result always has exactly 8 entries in frozen
/// [`SourceId::ALL`] order.
pub fn aggregate(sources: &impl SourceLookup, isbn: &Isbn) -> [SourceAnswer; 8] {
    SourceId::ALL.map(|s| sources.lookup(s, isbn))
}

/// One line of the fixture table file.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FixtureLine {
    source: SourceId,
    isbn: String,
    #[serde(default)]
    authors: Vec<String>,
    /// simulated transport failure
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    unavailable: bool,
}

#[derive(Debug, Clone, Default)]
struct FixtureEntry {
    authors: Vec<String>,
    unavailable: bool,
}

/// Deterministic fixture-backed implementation of all eight sources.
#[derive(Debug, Clone, Default)]
pub struct FixtureSources {
    tables: HashMap<(SourceId, String), FixtureEntry>,
}

impl FixtureSources {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register authors for (source, canonical13). Names are normalized on
    /// insertion.
    pub fn insert(&mut self, source: SourceId, canonical13: &str, authors: &[&str]) {
        self.tables.insert(
            (source, canonical13.to_string()),
            FixtureEntry {
                authors: authors.iter().map(|a| normalize(a).text().to_string()).collect(),
                unavailable: false,
            },
        );
    }

    /// Mark (source, canonical13) as failing with a transport error.
    pub fn insert_unavailable(&mut self, source: SourceId, canonical13: &str) {
        self.tables.insert(
            (source, canonical13.to_string()),
            FixtureEntry { authors: vec![], unavailable: true },
        );
    }

    pub fn load(path: &Path) -> Result<Self, RecordError> {
        let lines: Vec<FixtureLine> = load_fixture_lines(path)?;
        let mut out = FixtureSources::new();
        for line in lines {
            if line.unavailable {
                out.insert_unavailable(line.source, &line.isbn);
            } else {
                let refs: Vec<&str> = line.authors.iter().map(String::as_str).collect();
                out.insert(line.source, &line.isbn, &refs);
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<(), RecordError> {
        let mut lines: Vec<FixtureLine> = self
            .tables
            .iter()
            .map(|((source, isbn), entry)| FixtureLine {
                source: *source,
                isbn: isbn.clone(),
                authors: entry.authors.clone(),
                unavailable: entry.unavailable,
            })
            .collect();
        lines.sort_by(|a, b| (a.source, &a.isbn).cmp(&(b.source, &b.isbn)));
        let file = std::fs::File::create(path).map_err(|source| RecordError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut w = std::io::BufWriter::new(file);
        use std::io::Write;
        for line in &lines {
            let json = serde_json::to_string(line).map_err(|e| RecordError::Schema {
                line: 0,
                detail: e.to_string(),
            })?;
            writeln!(w, "{json}").map_err(|source| RecordError::Io {
                path: path.display().to_string(),
                source,
            })?;
        }
        Ok(())
    }
}

fn load_fixture_lines(path: &Path) -> Result<Vec<FixtureLine>, RecordError> {
    use std::io::BufRead;
    let file = std::fs::File::open(path).map_err(|source| RecordError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| RecordError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| RecordError::Schema {
            line: idx + 1,
            detail: e.to_string(),
        })?);
    }
    Ok(out)
}

impl SourceLookup for FixtureSources {
    fn lookup(&self, source: SourceId, isbn: &Isbn) -> SourceAnswer {
        match self.tables.get(&(source, isbn.canonical13().to_string())) {
            Some(entry) if entry.unavailable => SourceAnswer {
                source,
                author_names: vec![],
                status: SourceStatus::Unavailable,
            },
            Some(entry) if !entry.authors.is_empty() => SourceAnswer {
                source,
                author_names: entry.authors.clone(),
                status: SourceStatus::Found,
            },
            _ => SourceAnswer { source, author_names: vec![], status: SourceStatus::NotFound },
        }
    }
}

/// Configuration for a live HTTP adapter. This is the reference interface
/// for real clients; none is shipped, and the fixture path ignores rate
/// limits entirely.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LiveAdapterConfig {
    pub source: SourceId,
    pub endpoint: String,
    pub requests_per_second: f64,
    pub max_retries: u32,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isbn;

    fn sample_isbn() -> Isbn {
        isbn::parse("9780306406157").unwrap()
    }

    #[test]
    fn fixture_hit_miss_and_unavailable() {
        let mut fx = FixtureSources::new();
        fx.insert(SourceId::Goodreads, "9780306406157", &["F. Scott Fitzgerald"]);
        fx.insert_unavailable(SourceId::Oclc, "9780306406157");
        let isbn = sample_isbn();

        let hit = fx.lookup(SourceId::Goodreads, &isbn);
        assert_eq!(hit.status, SourceStatus::Found);
        assert_eq!(hit.author_names, vec!["f. scott fitzgerald"]);

        let miss = fx.lookup(SourceId::Bnf, &isbn);
        assert_eq!(miss.status, SourceStatus::NotFound);
        assert!(miss.author_names.is_empty());

        let down = fx.lookup(SourceId::Oclc, &isbn);
        assert_eq!(down.status, SourceStatus::Unavailable);
    }

    #[test]
    fn aggregate_returns_all_eight_in_frozen_order() {
        let mut fx = FixtureSources::new();
        fx.insert(SourceId::OpenLibrary, "9780306406157", &["a b"]);
        fx.insert(SourceId::Sudoc, "9780306406157", &["a b"]);
        fx.insert(SourceId::Babelio, "9780306406157", &["c d"]);
        let answers = aggregate(&fx, &sample_isbn());
        assert_eq!(answers.len(), 8);
        for (i, a) in answers.iter().enumerate() {
            assert_eq!(a.source, SourceId::ALL[i]);
        }
        assert_eq!(answers.iter().filter(|a| a.found()).count(), 3);
        // determinism
        assert_eq!(answers, aggregate(&fx, &sample_isbn()));
    }

    #[test]
    fn all_empty_fixtures_give_eight_not_found() {
        let fx = FixtureSources::new();
        let answers = aggregate(&fx, &sample_isbn());
        assert!(answers.iter().all(|a| a.status == SourceStatus::NotFound));
    }

    #[test]
    fn source_index_matches_frozen_order() {
        assert_eq!(SourceId::OpenLibrary.index(), 0);
        assert_eq!(SourceId::Goodreads.index(), 2);
        assert_eq!(SourceId::Babelio.index(), 7);
    }

    #[test]
    fn fixture_file_roundtrip() {
        let mut fx = FixtureSources::new();
        fx.insert(SourceId::Goodreads, "9780306406157", &["Émile Zola"]);
        fx.insert_unavailable(SourceId::Bnf, "9780306406157");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sources.jsonl");
        fx.save(&path).unwrap();
        let loaded = FixtureSources::load(&path).unwrap();
        let isbn = sample_isbn();
        assert_eq!(
            fx.lookup(SourceId::Goodreads, &isbn),
            loaded.lookup(SourceId::Goodreads, &isbn)
        );
        assert_eq!(loaded.lookup(SourceId::Bnf, &isbn).status, SourceStatus::Unavailable);
    }
}
