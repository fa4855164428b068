//! Shared domain types and the line-delimited record formats every other
//! module consumes. One JSON document per line, UTF-8, order-preserving.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ranker::FeatureVector;
use crate::textnorm::normalize;

/// Author placeholder used by catalogs for a missing author field. It is
/// preserved verbatim at load time; downstream stages treat it as empty.
pub const UNKNOWN_AUTHOR: &str = "Unknown";

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {detail}")]
    Schema { line: usize, detail: String },
}

/// One catalog row: optional ISBN, product title, raw author string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isbn: Option<String>,
    pub title: String,
    pub author_raw: String,
}

impl BookRecord {
    pub fn new(
        isbn: Option<&str>,
        title: &str,
        author_raw: &str,
    ) -> Result<Self, RecordError> {
        let rec = BookRecord {
            isbn: isbn.map(str::to_string),
            title: title.to_string(),
            author_raw: author_raw.to_string(),
        };
        rec.validate(0)?;
        Ok(rec)
    }

    fn validate(&self, line: usize) -> Result<(), RecordError> {
        if self.title.trim().is_empty() {
            return Err(RecordError::Schema {
                line,
                detail: "field \"title\" must be non-empty".into(),
            });
        }
        Ok(())
    }

    /// True iff the author field is empty or the catalog placeholder.
    pub fn author_missing(&self) -> bool {
        self.author_raw.trim().is_empty() || self.author_raw.trim() == UNKNOWN_AUTHOR
    }
}

/// Provenance of a name variant inside an entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    IsbnMatch,
    FuzzyMatch,
    NameVariantList,
    Synthetic,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Provenance::IsbnMatch => "isbn-match",
            Provenance::FuzzyMatch => "fuzzy-match",
            Provenance::NameVariantList => "name-variant-list",
            Provenance::Synthetic => "synthetic",
        };
        f.write_str(s)
    }
}

/// Audit trail for a synthetic variant: the rule that produced it and the
/// variant it was derived from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantAudit {
    pub rule: String,
    pub from: String,
}

/// One surface form of an entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variant {
    pub name: String,
    pub provenance: Provenance,
    pub audit: Option<VariantAudit>,
}

/// A canonical name plus its set of surface-form variants with provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "EntityWire", into = "EntityWire")]
pub struct NameEntity {
    canonical: String,
    variants: Vec<Variant>,
}

impl NameEntity {
    /// Build an entity, normalizing and deduplicating all names. The
    /// canonical name is always a member of the variant set.
    pub fn new(
        canonical: &str,
        canonical_provenance: Provenance,
        variants: impl IntoIterator<Item = Variant>,
    ) -> Self {
        let canonical = normalize(canonical).text().to_string();
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        seen.insert(canonical.clone());
        out.push(Variant {
            name: canonical.clone(),
            provenance: canonical_provenance,
            audit: None,
        });
        for v in variants {
            let name = normalize(&v.name).text().to_string();
            if !name.is_empty() && seen.insert(name.clone()) {
                out.push(Variant { name, ..v });
            }
        }
        NameEntity { canonical, variants: out }
    }

    pub fn canonical(&self) -> &str {
        &self.canonical
    }

    pub fn variants(&self) -> &[Variant] {
        &self.variants
    }

    /// Merge another entity with the same canonical name (variant union).
    pub fn merge(&mut self, other: NameEntity) {
        debug_assert_eq!(self.canonical, other.canonical);
        let seen: BTreeSet<String> =
            self.variants.iter().map(|v| v.name.clone()).collect();
        for v in other.variants {
            if !seen.contains(&v.name) {
                self.variants.push(v);
            }
        }
        self.variants.sort_by(|a, b| a.name.cmp(&b.name));
    }

    /// Append extra variants (used by augmentation), deduplicating by name.
    pub fn push_variants(&mut self, extra: impl IntoIterator<Item = Variant>) {
        let mut seen: BTreeSet<String> =
            self.variants.iter().map(|v| v.name.clone()).collect();
        for v in extra {
            let name = normalize(&v.name).text().to_string();
            if !name.is_empty() && seen.insert(name.clone()) {
                self.variants.push(Variant { name, ..v });
            }
        }
    }
}

/// Wire form: parallel `variants` / `provenance` arrays plus an optional
/// `audit` array aligned with them.
#[derive(Debug, Serialize, Deserialize)]
struct EntityWire {
    canonical: String,
    variants: Vec<String>,
    provenance: Vec<Provenance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    audit: Option<Vec<Option<VariantAudit>>>,
}

impl From<NameEntity> for EntityWire {
    fn from(e: NameEntity) -> Self {
        let any_audit = e.variants.iter().any(|v| v.audit.is_some());
        EntityWire {
            canonical: e.canonical,
            variants: e.variants.iter().map(|v| v.name.clone()).collect(),
            provenance: e.variants.iter().map(|v| v.provenance).collect(),
            audit: any_audit
                .then(|| e.variants.iter().map(|v| v.audit.clone()).collect()),
        }
    }
}

impl TryFrom<EntityWire> for NameEntity {
    type Error = String;

    fn try_from(w: EntityWire) -> Result<Self, Self::Error> {
        if w.variants.len() != w.provenance.len() {
            return Err(format!(
                "field \"provenance\" has {} entries for {} variants",
                w.provenance.len(),
                w.variants.len()
            ));
        }
        if let Some(a) = &w.audit {
            if a.len() != w.variants.len() {
                return Err("field \"audit\" length mismatch".into());
            }
        }
        if w.variants.is_empty() {
            return Err("field \"variants\" must be non-empty".into());
        }
        if !w.variants.contains(&w.canonical) {
            return Err("field \"canonical\" must appear among variants".into());
        }
        let audits = w
            .audit
            .unwrap_or_else(|| vec![None; w.variants.len()]);
        let mut variants = Vec::with_capacity(w.variants.len());
        let mut seen = BTreeSet::new();
        for ((name, provenance), audit) in
            w.variants.into_iter().zip(w.provenance).zip(audits)
        {
            if seen.insert(name.clone()) {
                variants.push(Variant { name, provenance, audit });
            }
        }
        Ok(NameEntity { canonical: w.canonical, variants })
    }
}

/// A catalog record with its hand-annotated canonical author name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedBook {
    #[serde(flatten)]
    pub record: BookRecord,
    pub ground_truth: String,
}

impl AnnotatedBook {
    fn validate(&self, line: usize) -> Result<(), RecordError> {
        self.record.validate(line)?;
        if self.ground_truth.trim().is_empty() {
            return Err(RecordError::Schema {
                line,
                detail: "field \"ground_truth\" must be non-empty".into(),
            });
        }
        Ok(())
    }
}

/// Which generators produced a candidate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OriginFlags {
    pub isbn_sources: bool,
    pub siamese: bool,
    pub seq2seq: bool,
    pub input: bool,
}

/// A candidate canonical name for a book.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub candidate: String,
    pub origin: OriginFlags,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

fn load_lines<T, F>(path: &Path, mut validate: F) -> Result<Vec<T>, RecordError>
where
    T: serde::de::DeserializeOwned,
    F: FnMut(&T, usize) -> Result<(), RecordError>,
{
    let file = File::open(path).map_err(|source| RecordError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| RecordError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: T = serde_json::from_str(&line).map_err(|e| RecordError::Schema {
            line: line_no,
            detail: e.to_string(),
        })?;
        validate(&rec, line_no)?;
        out.push(rec);
    }
    Ok(out)
}

fn write_lines<T: Serialize>(path: &Path, records: &[T]) -> Result<(), RecordError> {
    let io_err = |source| RecordError::Io { path: path.display().to_string(), source };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    for rec in records {
        let json = serde_json::to_string(rec).map_err(|e| RecordError::Schema {
            line: 0,
            detail: e.to_string(),
        })?;
        writeln!(w, "{json}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn load_books(path: &Path) -> Result<Vec<BookRecord>, RecordError> {
    load_lines(path, BookRecord::validate)
}

pub fn write_books(path: &Path, records: &[BookRecord]) -> Result<(), RecordError> {
    write_lines(path, records)
}

pub fn load_entities(path: &Path) -> Result<Vec<NameEntity>, RecordError> {
    load_lines(path, |_: &NameEntity, _| Ok(()))
}

pub fn write_entities(path: &Path, records: &[NameEntity]) -> Result<(), RecordError> {
    write_lines(path, records)
}

pub fn load_annotated(path: &Path) -> Result<Vec<AnnotatedBook>, RecordError> {
    load_lines(path, AnnotatedBook::validate)
}

pub fn write_annotated(path: &Path, records: &[AnnotatedBook]) -> Result<(), RecordError> {
    write_lines(path, records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn empty_file_loads_empty() {
        let dir = tmp();
        let path = dir.path().join("books.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(load_books(&path).unwrap().is_empty());
    }

    #[test]
    fn single_line_maps_fields() {
        let dir = tmp();
        let path = dir.path().join("books.jsonl");
        std::fs::write(&path, r#"{"title":"Gatsby","author_raw":"F. Scott Fitzgerald"}"#)
            .unwrap();
        let recs = load_books(&path).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].isbn, None);
        assert_eq!(recs[0].title, "Gatsby");
    }

    #[test]
    fn missing_title_names_line_and_field() {
        let dir = tmp();
        let path = dir.path().join("books.jsonl");
        std::fs::write(&path, r#"{"author_raw":"x"}"#).unwrap();
        let err = load_books(&path).unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
        assert!(err.contains("title"), "{err}");
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let err = write_books(Path::new("/nonexistent-dir/books.jsonl"), &[]).unwrap_err();
        assert!(matches!(err, RecordError::Io { .. }));
    }

    #[test]
    fn unknown_author_is_preserved_verbatim_but_flagged() {
        let rec = BookRecord::new(None, "t", UNKNOWN_AUTHOR).unwrap();
        assert_eq!(rec.author_raw, "Unknown");
        assert!(rec.author_missing());
        assert!(BookRecord::new(None, "t", "  ").unwrap().author_missing());
        assert!(!BookRecord::new(None, "t", "Zola").unwrap().author_missing());
    }

    #[test]
    fn entity_invariants_hold() {
        let e = NameEntity::new(
            "Émile Zola",
            Provenance::NameVariantList,
            [
                Variant {
                    name: "zola, emile".into(),
                    provenance: Provenance::IsbnMatch,
                    audit: None,
                },
                Variant {
                    name: "EMILE ZOLA".into(), // dup of canonical after normalization
                    provenance: Provenance::IsbnMatch,
                    audit: None,
                },
            ],
        );
        assert_eq!(e.canonical(), "emile zola");
        assert_eq!(e.variants().len(), 2);
        assert!(e.variants().iter().any(|v| v.name == e.canonical()));
    }

    fn arb_book() -> impl Strategy<Value = BookRecord> {
        (
            proptest::option::of("[0-9]{13}"),
            "[a-zA-Z ]{1,12}",
            "[a-zA-Z .]{0,16}",
        )
            .prop_map(|(isbn, mut title, author)| {
                title.push('t'); // keep non-empty after trim
                BookRecord { isbn, title, author_raw: author }
            })
    }

    fn arb_entity() -> impl Strategy<Value = NameEntity> {
        (
            "[a-z]{1,8} [a-z]{1,8}",
            proptest::collection::vec("[a-z. ]{1,12}", 0..5),
        )
            .prop_map(|(canonical, names)| {
                NameEntity::new(
                    &canonical,
                    Provenance::NameVariantList,
                    names.into_iter().map(|name| Variant {
                        name,
                        provenance: Provenance::Synthetic,
                        audit: Some(VariantAudit {
                            rule: "single-typo".into(),
                            from: canonical.clone(),
                        }),
                    }),
                )
            })
    }

    proptest! {
        #[test]
        fn books_roundtrip_identically(records in proptest::collection::vec(arb_book(), 0..8)) {
            let dir = tmp();
            let path = dir.path().join("books.jsonl");
            write_books(&path, &records).unwrap();
            prop_assert_eq!(load_books(&path).unwrap(), records);
        }

        #[test]
        fn entities_roundtrip_identically(records in proptest::collection::vec(arb_entity(), 0..6)) {
            let dir = tmp();
            let path = dir.path().join("entities.jsonl");
            write_entities(&path, &records).unwrap();
            prop_assert_eq!(load_entities(&path).unwrap(), records);
        }
    }
}
