//! Candidate ranking: a logistic regression over 12 provenance/similarity
//! features, trained with class-balancing oversampling and full-batch
//! gradient descent.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::container::{Container, ContainerError, NamedTensor};
use crate::neural::layers::cosine_similarity;
use crate::neural::Vec1;
use crate::record::Proposal;
use crate::seed;
use crate::siamese::SiameseModel;
use crate::sources::SourceAnswer;
use crate::textnorm::normalize;

pub const MODEL_KIND: &str = "ranker";
pub const N_FEATURES: usize = 12;

/// 12 features per candidate: f0-f7 per-source found flags in frozen
/// [`crate::sources::SourceId::ALL`] order, f8 equals-input, f9 in the
/// seq2seq top-10, f10 returned by the Siamese match, f11 cosine distance
/// between the candidate and input representations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl FeatureVector {
    /// Number of source-found flags set (the ranking tie-break).
    pub fn source_flags(&self) -> usize {
        self.0[..8].iter().filter(|&&f| f == 1.0).count()
    }
}

#[derive(Debug, Error)]
pub enum RankerError {
    #[error("training data must contain both classes")]
    SingleClass,
    #[error("training needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("non-finite loss {0} during training")]
    NonFiniteLoss(f64),
}

/// Build the feature vector for one candidate. All name comparisons happen
/// on normalized strings; `answers` is the 8-source aggregate for the
/// book's ISBN (empty slice when the book has none).
pub fn extract_features(
    input_author: &str,
    candidate: &str,
    answers: &[SourceAnswer],
    seq2seq_top10: &[String],
    siamese_matches: &[String],
    encoder: &SiameseModel,
) -> FeatureVector {
    let cand = normalize(candidate).text().to_string();
    let input = normalize(input_author).text().to_string();
    let mut f = [0.0; N_FEATURES];
    for answer in answers {
        if answer
            .author_names
            .iter()
            .any(|n| normalize(n).text() == cand)
        {
            f[answer.source.index()] = 1.0;
        }
    }
    f[8] = f64::from(u8::from(cand == input));
    f[9] = f64::from(u8::from(seq2seq_top10.iter().any(|s| normalize(s).text() == cand)));
    f[10] = f64::from(u8::from(siamese_matches.iter().any(|s| normalize(s).text() == cand)));
    let rc = Vec1::from_vec(encoder.encode_name(&cand).expect("encode"));
    let ri = Vec1::from_vec(encoder.encode_name(&input).expect("encode"));
    f[11] = (1.0 - cosine_similarity(&rc, &ri).expect("cosine")).max(0.0);
    FeatureVector(f)
}

/// One labelled training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: FeatureVector,
    pub label: bool,
}

/// Random oversampling: duplicate minority-class samples (uniformly, with
/// replacement) until the classes balance.
pub fn oversample(samples: &[Sample], seed_val: u64) -> Result<Vec<Sample>, RankerError> {
    let pos: Vec<&Sample> = samples.iter().filter(|s| s.label).collect();
    let neg: Vec<&Sample> = samples.iter().filter(|s| !s.label).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(RankerError::SingleClass);
    }
    let mut out: Vec<Sample> = samples.to_vec();
    let (minority, deficit) = if pos.len() < neg.len() {
        (&pos, neg.len() - pos.len())
    } else {
        (&neg, pos.len() - neg.len())
    };
    let mut rng = seed::rng(seed::derive(seed_val, "ranker-oversample"));
    for _ in 0..deficit {
        out.push(minority[rng.random_range(0..minority.len())].clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub w: [f64; N_FEATURES],
    pub b: f64,
}

impl LogisticModel {
    pub fn save(&self, path: &std::path::Path) -> Result<(), ContainerError> {
        let c = Container {
            kind: MODEL_KIND.to_string(),
            vocab: Vec::new(),
            hyper: serde_json::Map::new(),
            tensors: vec![
                NamedTensor {
                    name: "w".into(),
                    shape: vec![N_FEATURES],
                    data: self.w.to_vec(),
                },
                NamedTensor { name: "b".into(), shape: vec![1], data: vec![self.b] },
            ],
        };
        c.save(path)
    }

    pub fn load(path: &std::path::Path) -> Result<LogisticModel, ContainerError> {
        let c = Container::load(path)?;
        let bad = |what: &str| ContainerError::Header(format!("ranker model: {what}"));
        if c.kind != MODEL_KIND {
            return Err(bad(&format!("kind {:?}", c.kind)));
        }
        let wt = c.tensor("w").ok_or_else(|| bad("missing tensor w"))?;
        let bt = c.tensor("b").ok_or_else(|| bad("missing tensor b"))?;
        if wt.data.len() != N_FEATURES || bt.data.len() != 1 {
            return Err(bad("bad tensor sizes"));
        }
        let mut w = [0.0; N_FEATURES];
        w.copy_from_slice(&wt.data);
        Ok(LogisticModel { w, b: bt.data[0] })
    }
}

#[derive(Debug, Clone)]
pub struct LogregConfig {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for LogregConfig {
    fn default() -> Self {
        LogregConfig { lr: 0.5, epochs: 2000, seed: 0 }
    }
}

/// Probability that the candidate is the canonical form.
pub fn score(model: &LogisticModel, fv: &FeatureVector) -> f64 {
    let z: f64 = model.w.iter().zip(&fv.0).map(|(w, f)| w * f).sum::<f64>() + model.b;
    1.0 / (1.0 + (-z).exp())
}

/// Full-batch gradient descent on the log-loss of the oversampled set.
/// Returns the model and the final mean loss.
pub fn train_logreg(
    samples: &[Sample],
    cfg: &LogregConfig,
) -> Result<(LogisticModel, f64), RankerError> {
    if samples.len() < 2 {
        return Err(RankerError::TooFewSamples(samples.len()));
    }
    let balanced = oversample(samples, cfg.seed)?;
    let n = balanced.len() as f64;
    let mut model = LogisticModel { w: [0.0; N_FEATURES], b: 0.0 };
    let mut final_loss = f64::NAN;
    for epoch in 0..cfg.epochs {
        let mut gw = [0.0; N_FEATURES];
        let mut gb = 0.0;
        let mut loss = 0.0;
        for s in &balanced {
            let p = score(&model, &s.features);
            let y = f64::from(u8::from(s.label));
            // clamp avoids ln(0) at saturation
            loss -= (y * p.max(1e-12).ln()) + (1.0 - y) * (1.0 - p).max(1e-12).ln();
            let d = (p - y) / n;
            for (g, f) in gw.iter_mut().zip(&s.features.0) {
                *g += d * f;
            }
            gb += d;
        }
        loss /= n;
        if !loss.is_finite() {
            return Err(RankerError::NonFiniteLoss(loss));
        }
        for (w, g) in model.w.iter_mut().zip(&gw) {
            *w -= cfg.lr * g;
        }
        model.b -= cfg.lr * gb;
        final_loss = loss;
        if epoch % 500 == 0 {
            log::debug!("logreg epoch {epoch}: loss {loss:.6}");
        }
    }
    Ok((model, final_loss))
}

/// Order proposals: descending score, then more source flags, then
/// lexicographic candidate. Every proposal must carry features and a score.
pub fn rank(proposals: &mut [Proposal]) {
    proposals.sort_by(|a, b| {
        let sa = a.score.expect("scored proposal");
        let sb = b.score.expect("scored proposal");
        sb.total_cmp(&sa)
            .then_with(|| {
                let fa = a.features.as_ref().map(|f| f.source_flags()).unwrap_or(0);
                let fb = b.features.as_ref().map(|f| f.source_flags()).unwrap_or(0);
                fb.cmp(&fa)
            })
            .then_with(|| a.candidate.cmp(&b.candidate))
    });
}
