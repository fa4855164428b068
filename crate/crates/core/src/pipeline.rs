//! End-to-end orchestration: candidate generation from all channels,
//! feature extraction, scoring, ranking, and top-k evaluation.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ann::RpForestIndex;
use crate::ranker::{self, extract_features, LogisticModel, Sample};
use crate::record::{AnnotatedBook, BookRecord, OriginFlags, Proposal};
use crate::seq2seq::{correct_name, Seq2SeqModel};
use crate::siamese::{match_name, SiameseModel};
use crate::sources::{aggregate, SourceAnswer, SourceLookup};
use crate::textnorm::normalize;
use crate::isbn;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("annotated set is empty")]
    EmptyAnnotated,
}

/// The three trained models the pipeline needs.
pub struct Models {
    pub siamese: SiameseModel,
    pub seq2seq: Seq2SeqModel,
    pub ranker: LogisticModel,
}

/// Candidate channels that can be toggled (the input-name channel is always
/// on). Used for the ISBN-only ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Channels {
    pub isbn: bool,
    pub siamese: bool,
    pub seq2seq: bool,
}

impl Default for Channels {
    fn default() -> Self {
        Channels { isbn: true, siamese: true, seq2seq: true }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Siamese match_name candidates per book.
    pub siamese_k: usize,
    /// ANN candidate budget before the exact re-rank.
    pub search_budget: usize,
    /// learned-distance cutoff for Siamese matches
    pub match_threshold: f64,
    pub channels: Channels,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            siamese_k: 3,
            search_budget: 32 * 3 * crate::ann::DEFAULT_N_TREES,
            match_threshold: f64::INFINITY,
            channels: Channels::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub channels_run: Vec<String>,
    pub elapsed_micros: u128,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalizationResult {
    pub book: BookRecord,
    /// ranked best-first; every proposal carries features and a score
    pub proposals: Vec<Proposal>,
    pub diagnostics: Diagnostics,
}

impl NormalizationResult {
    pub fn top(&self) -> Option<&Proposal> {
        self.proposals.first()
    }
}

/// Everything the feature extractor needs about one book's candidates.
struct CandidateSet {
    candidates: BTreeMap<String, OriginFlags>,
    answers: Vec<SourceAnswer>,
    seq2seq_top10: Vec<String>,
    siamese_matches: Vec<String>,
    channels_run: Vec<String>,
}

fn generate_candidates(
    book: &BookRecord,
    siamese: &SiameseModel,
    seq2seq: &Seq2SeqModel,
    index: &RpForestIndex,
    sources: &impl SourceLookup,
    cfg: &PipelineConfig,
) -> CandidateSet {
    let input = normalize(&book.author_raw).text().to_string();
    let mut candidates: BTreeMap<String, OriginFlags> = BTreeMap::new();
    let mut channels_run = Vec::new();

    let mut answers = Vec::new();
    if cfg.channels.isbn {
        if let Some(parsed) = isbn::of_record(book) {
            channels_run.push("isbn-sources".to_string());
            answers = aggregate(sources, &parsed).to_vec();
            for answer in &answers {
                for name in &answer.author_names {
                    let n = normalize(name).text().to_string();
                    if !n.is_empty() {
                        candidates.entry(n).or_default().isbn_sources = true;
                    }
                }
            }
        }
    }

    let mut siamese_matches = Vec::new();
    if cfg.channels.siamese && !input.is_empty() {
        channels_run.push("siamese".to_string());
        let hits = match_name(
            siamese,
            index,
            &input,
            cfg.siamese_k,
            cfg.search_budget,
            cfg.match_threshold,
        )
        .expect("non-empty index");
        for hit in hits {
            candidates.entry(hit.canonical.clone()).or_default().siamese = true;
            siamese_matches.push(hit.canonical);
        }
    }

    let mut seq2seq_top10 = Vec::new();
    if cfg.channels.seq2seq {
        channels_run.push("seq2seq".to_string());
        for cand in correct_name(seq2seq, &input) {
            if !cand.is_empty() {
                candidates.entry(cand.clone()).or_default().seq2seq = true;
            }
            seq2seq_top10.push(cand);
        }
    }

    if !input.is_empty() {
        candidates.entry(input).or_default().input = true;
    }

    CandidateSet { candidates, answers, seq2seq_top10, siamese_matches, channels_run }
}

/// Run the full pipeline on one book: generate candidates from all enabled
/// channels, featurize, score, and rank.
pub fn normalize_book(
    book: &BookRecord,
    models: &Models,
    index: &RpForestIndex,
    sources: &impl SourceLookup,
    cfg: &PipelineConfig,
) -> NormalizationResult {
    let start = Instant::now();
    let set = generate_candidates(book, &models.siamese, &models.seq2seq, index, sources, cfg);
    let mut proposals: Vec<Proposal> = set
        .candidates
        .into_iter()
        .map(|(candidate, origin)| {
            let features = extract_features(
                &book.author_raw,
                &candidate,
                &set.answers,
                &set.seq2seq_top10,
                &set.siamese_matches,
                &models.siamese,
            );
            let score = ranker::score(&models.ranker, &features);
            Proposal { candidate, origin, features: Some(features), score: Some(score) }
        })
        .collect();
    ranker::rank(&mut proposals);
    NormalizationResult {
        book: book.clone(),
        proposals,
        diagnostics: Diagnostics {
            channels_run: set.channels_run,
            elapsed_micros: start.elapsed().as_micros(),
        },
    }
}

/// Labelled feature vectors for ranker training: every candidate of every
/// annotated book, labelled by ground-truth equality on normalized strings.
pub fn ranker_samples(
    annotated: &[AnnotatedBook],
    siamese: &SiameseModel,
    seq2seq: &Seq2SeqModel,
    index: &RpForestIndex,
    sources: &impl SourceLookup,
    cfg: &PipelineConfig,
) -> Vec<Sample> {
    let mut out = Vec::new();
    for book in annotated {
        let truth = normalize(&book.ground_truth).text().to_string();
        let set = generate_candidates(&book.record, siamese, seq2seq, index, sources, cfg);
        for (candidate, _) in set.candidates {
            let features = extract_features(
                &book.record.author_raw,
                &candidate,
                &set.answers,
                &set.seq2seq_top10,
                &set.siamese_matches,
                siamese,
            );
            out.push(Sample { features, label: candidate == truth });
        }
    }
    out
}

/// One evaluation stratum: top-k accuracies over its books.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StratumRow {
    pub stratum: String,
    pub books: usize,
    /// (k, accuracy) pairs in ascending k
    pub accuracy: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<StratumRow>,
}

impl EvalReport {
    pub fn row(&self, stratum: &str) -> Option<&StratumRow> {
        self.rows.iter().find(|r| r.stratum == stratum)
    }

    pub fn accuracy(&self, stratum: &str, k: usize) -> Option<f64> {
        self.row(stratum)?.accuracy.iter().find(|(kk, _)| *kk == k).map(|(_, a)| *a)
    }

    /// Plain-text table, one stratum per row.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let ks: Vec<usize> = self
            .rows
            .first()
            .map(|r| r.accuracy.iter().map(|(k, _)| *k).collect())
            .unwrap_or_default();
        out.push_str(&format!("{:<28} {:>7}", "stratum", "books"));
        for k in &ks {
            out.push_str(&format!(" {:>8}", format!("acc@{k}")));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{:<28} {:>7}", row.stratum, row.books));
            for (_, acc) in &row.accuracy {
                out.push_str(&format!(" {:>8.4}", acc));
            }
            out.push('\n');
        }
        out
    }
}

pub const STRATA: [&str; 4] = ["all", "unnormalized", "no-isbn-match", "unnormalized-no-isbn"];

/// Evaluate top-k accuracy per stratum. A book is correct at k iff its
/// normalized ground truth appears among the top-k ranked candidates.
/// Strata: all books; books whose input author differs from the ground
/// truth; books without an ISBN match in any source; the intersection.
pub fn evaluate(
    annotated: &[AnnotatedBook],
    models: &Models,
    index: &RpForestIndex,
    sources: &impl SourceLookup,
    cfg: &PipelineConfig,
    ks: &[usize],
) -> Result<EvalReport, PipelineError> {
    if annotated.is_empty() {
        return Err(PipelineError::EmptyAnnotated);
    }
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    // per book: (correct-at-k flags, unnormalized?, no-isbn-match?)
    let mut per_book = Vec::with_capacity(annotated.len());
    for book in annotated {
        let truth = normalize(&book.ground_truth).text().to_string();
        let result = normalize_book(&book.record, models, index, sources, cfg);
        let correct: Vec<bool> = ks
            .iter()
            .map(|&k| result.proposals.iter().take(k).any(|p| p.candidate == truth))
            .collect();
        let unnormalized = normalize(&book.record.author_raw).text() != truth;
        let isbn_matched = isbn::of_record(&book.record)
            .map(|parsed| aggregate(sources, &parsed).iter().any(|a| a.found()))
            .unwrap_or(false);
        per_book.push((correct, unnormalized, !isbn_matched));
    }
    let mut rows = Vec::new();
    for stratum in STRATA {
        let member = |b: &(Vec<bool>, bool, bool)| match stratum {
            "all" => true,
            "unnormalized" => b.1,
            "no-isbn-match" => b.2,
            _ => b.1 && b.2,
        };
        let books: Vec<&(Vec<bool>, bool, bool)> =
            per_book.iter().filter(|b| member(b)).collect();
        let accuracy = ks
            .iter()
            .enumerate()
            .map(|(ki, &k)| {
                let acc = if books.is_empty() {
                    0.0
                } else {
                    books.iter().filter(|b| b.0[ki]).count() as f64 / books.len() as f64
                };
                (k, acc)
            })
            .collect();
        rows.push(StratumRow { stratum: stratum.to_string(), books: books.len(), accuracy });
    }
    Ok(EvalReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranker::{train_logreg, LogregConfig, N_FEATURES};
    use crate::record::{NameEntity, Provenance, Variant};
    use crate::seq2seq::{self, TrainPair};
    use crate::siamese::{self, build_match_index, SiameseConfig};
    use crate::sources::{FixtureSources, SourceId};
    use once_cell::sync::Lazy;

    struct Fixture {
        models: Models,
        index: RpForestIndex,
        sources: FixtureSources,
    }

    fn entity(canonical: &str, variants: &[&str]) -> NameEntity {
        NameEntity::new(
            canonical,
            Provenance::NameVariantList,
            variants.iter().map(|v| Variant {
                name: v.to_string(),
                provenance: Provenance::NameVariantList,
                audit: None,
            }),
        )
    }

    static FIXTURE: Lazy<Fixture> = Lazy::new(|| {
        let entities = vec![
            entity("emile zola", &["e. zola", "zola, emile"]),
            entity("jane austen", &["j. austen", "austen, jane"]),
            entity("franz kafka", &["f. kafka", "kafka, franz"]),
        ];
        let s_cfg = SiameseConfig {
            embed_dim: 16,
            hidden: 12,
            epochs: 25,
            batch_size: 32,
            seed: 5,
            ..Default::default()
        };
        let (siamese, _) = siamese::train(&entities, &s_cfg).unwrap();
        let pairs: Vec<TrainPair> = entities
            .iter()
            .flat_map(|e| {
                e.variants()
                    .iter()
                    .map(|v| TrainPair::from_strings(&v.name, e.canonical()))
                    .collect::<Vec<_>>()
            })
            .collect();
        let q_cfg = seq2seq::Seq2SeqConfig {
            embed_dim: 16,
            enc_hidden: 12,
            epochs: 120,
            batch_size: 16,
            lr: 5e-3,
            seed: 6,
            ..Default::default()
        };
        let (seq2seq_model, _) = seq2seq::train(&pairs, &q_cfg).unwrap();
        let index = build_match_index(&siamese, &entities, 4, 4, 7).unwrap();
        let mut sources = FixtureSources::new();
        sources.insert(SourceId::Goodreads, "9780306406157", &["Émile Zola"]);
        sources.insert(SourceId::Bnf, "9780306406157", &["Zola, Emile"]);
        // a hand-set ranker: prefers source-confirmed, input-equal, nearby names
        let mut w = [1.5; N_FEATURES];
        w[8] = 2.0;
        w[11] = -2.0;
        let ranker = LogisticModel { w, b: -1.0 };
        Fixture { models: Models { siamese, seq2seq: seq2seq_model, ranker }, index, sources }
    });

    fn book(isbn: Option<&str>, author: &str) -> BookRecord {
        BookRecord::new(isbn, "a title", author).unwrap()
    }

    #[test]
    fn source_confirmed_input_ranks_first() {
        let f = &*FIXTURE;
        let b = book(Some("9780306406157"), "Émile Zola");
        let r = normalize_book(&b, &f.models, &f.index, &f.sources, &PipelineConfig::default());
        assert_eq!(r.top().unwrap().candidate, "emile zola");
        let top = r.top().unwrap();
        let fv = top.features.as_ref().unwrap();
        assert_eq!(fv.0[8], 1.0);
        assert_eq!(fv.0[SourceId::Goodreads.index()], 1.0);
    }

    #[test]
    fn duplicate_candidates_merge_origin_flags() {
        let f = &*FIXTURE;
        let b = book(Some("9780306406157"), "Émile Zola");
        let r = normalize_book(&b, &f.models, &f.index, &f.sources, &PipelineConfig::default());
        let zola = r.proposals.iter().find(|p| p.candidate == "emile zola").unwrap();
        assert!(zola.origin.isbn_sources);
        assert!(zola.origin.input);
        // present exactly once
        assert_eq!(r.proposals.iter().filter(|p| p.candidate == "emile zola").count(), 1);
    }

    #[test]
    fn no_isbn_book_has_zero_source_flags() {
        let f = &*FIXTURE;
        let b = book(None, "zola, emile");
        let r = normalize_book(&b, &f.models, &f.index, &f.sources, &PipelineConfig::default());
        assert!(!r.proposals.is_empty());
        for p in &r.proposals {
            let fv = p.features.as_ref().unwrap();
            assert!(fv.0[..8].iter().all(|&x| x == 0.0));
        }
        // the input name is always a candidate
        assert!(r.proposals.iter().any(|p| p.origin.input));
    }

    #[test]
    fn empty_author_without_isbn_is_legal() {
        let f = &*FIXTURE;
        let b = book(None, "");
        let r = normalize_book(&b, &f.models, &f.index, &f.sources, &PipelineConfig::default());
        // only the seq2seq channel ran; candidates may be empty
        assert_eq!(r.diagnostics.channels_run, ["seq2seq"]);
        for p in &r.proposals {
            assert!(p.origin.seq2seq);
        }
    }

    #[test]
    fn ranker_samples_label_ground_truth() {
        let f = &*FIXTURE;
        let annotated = vec![AnnotatedBook {
            record: book(Some("9780306406157"), "E. Zola"),
            ground_truth: "Émile Zola".to_string(),
        }];
        let samples = ranker_samples(
            &annotated,
            &f.models.siamese,
            &f.models.seq2seq,
            &f.index,
            &f.sources,
            &PipelineConfig::default(),
        );
        assert!(samples.iter().any(|s| s.label));
        assert!(samples.iter().any(|s| !s.label));
        // trains end to end
        let (_m, loss) = train_logreg(&samples, &LogregConfig { epochs: 50, ..Default::default() }).unwrap();
        assert!(loss.is_finite());
    }

    fn annotated_set() -> Vec<AnnotatedBook> {
        vec![
            AnnotatedBook {
                record: book(Some("9780306406157"), "Émile Zola"),
                ground_truth: "Émile Zola".into(),
            },
            AnnotatedBook {
                record: book(Some("9780306406157"), "zola, e."),
                ground_truth: "Émile Zola".into(),
            },
            AnnotatedBook {
                record: book(None, "j. austen"),
                ground_truth: "Jane Austen".into(),
            },
            AnnotatedBook {
                record: book(None, "Franz Kafka"),
                ground_truth: "Franz Kafka".into(),
            },
        ]
    }

    #[test]
    fn evaluate_emits_all_strata_with_consistent_counts() {
        let f = &*FIXTURE;
        let report = evaluate(
            &annotated_set(),
            &f.models,
            &f.index,
            &f.sources,
            &PipelineConfig::default(),
            &[1, 3],
        )
        .unwrap();
        assert_eq!(report.rows.len(), 4);
        let all = report.row("all").unwrap();
        assert_eq!(all.books, 4);
        let unnorm = report.row("unnormalized").unwrap();
        let no_isbn = report.row("no-isbn-match").unwrap();
        let both = report.row("unnormalized-no-isbn").unwrap();
        assert!(both.books <= unnorm.books.min(no_isbn.books));
        // acc@k non-decreasing in k, in every stratum
        for row in &report.rows {
            assert!(row.accuracy[1].1 >= row.accuracy[0].1, "{row:?}");
        }
        // table renders one line per stratum plus header
        assert_eq!(report.table().lines().count(), 5);
    }

    #[test]
    fn evaluate_is_deterministic_and_rejects_empty() {
        let f = &*FIXTURE;
        let cfg = PipelineConfig::default();
        let a = evaluate(&annotated_set(), &f.models, &f.index, &f.sources, &cfg, &[1, 3]).unwrap();
        let b = evaluate(&annotated_set(), &f.models, &f.index, &f.sources, &cfg, &[1, 3]).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        assert!(matches!(
            evaluate(&[], &f.models, &f.index, &f.sources, &cfg, &[1]),
            Err(PipelineError::EmptyAnnotated)
        ));
    }

    #[test]
    fn ablation_toggles_channels() {
        let f = &*FIXTURE;
        let cfg = PipelineConfig {
            channels: Channels { isbn: true, siamese: false, seq2seq: false },
            ..Default::default()
        };
        let b = book(Some("9780306406157"), "someone unrelated");
        let r = normalize_book(&b, &f.models, &f.index, &f.sources, &cfg);
        assert_eq!(r.diagnostics.channels_run, ["isbn-sources"]);
        for p in &r.proposals {
            assert!(!p.origin.siamese && !p.origin.seq2seq);
        }
    }
}
