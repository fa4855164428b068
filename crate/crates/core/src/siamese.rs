//! Siamese name matcher: a twin character-biLSTM encoder with shared
//! weights, trained with a contrastive loss on cosine similarity, plus the
//! ANN-backed matching entry point and the character-overlap evaluation
//! used to compare against it.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::ann::{AnnError, RpForestIndex};
use crate::neural::container::{Container, ContainerError, NamedTensor};
use crate::neural::layers::{
    clip_gradients, cosine_backward, cosine_forward, dense_backward, dense_forward,
    embedding_backward, embedding_forward,
};
use crate::neural::loss::contrastive_loss;
use crate::neural::lstm::{bilstm_backward, bilstm_forward, BiLstmRun, LstmParams};
use crate::neural::{
    adam::{adam_step, AdamConfig, AdamState},
    Mat, NeuralError, ParamBlocks, Ten3, Vec1,
};
use crate::record::NameEntity;
use crate::seed;
use crate::textnorm::{self, alphabet, encode, normalize, CharSequence, PAD, SEQ_LEN};

pub const MODEL_KIND: &str = "siamese";

#[derive(Debug, Clone)]
pub struct SiameseConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub margin: f64,
    pub lr: f64,
    pub clip: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// negatives sampled per positive pair
    pub negative_ratio: usize,
    /// cap on positive pairs drawn from one entity
    pub max_pos_per_entity: usize,
    pub seed: u64,
}

impl Default for SiameseConfig {
    fn default() -> Self {
        SiameseConfig {
            embed_dim: 256,
            hidden: 128,
            margin: 0.0,
            lr: 1e-3,
            clip: 5.0,
            batch_size: 512,
            epochs: 10,
            negative_ratio: 4,
            max_pos_per_entity: 20,
            seed: 0,
        }
    }
}

/// The shared encoder. Both sides of every pair run through this one
/// parameter set; the representation is a dense map of the concatenated
/// final hidden states of the two LSTM directions.
#[derive(Debug, Clone)]
pub struct SiameseModel {
    pub embed: Mat,      // V x E
    pub fwd: LstmParams, // E -> H
    pub bwd: LstmParams, // E -> H
    pub dense_w: Mat,    // 2H x 2H
    pub dense_b: Vec1,   // 2H
}

impl SiameseModel {
    pub fn init(embed_dim: usize, hidden: usize, seed_val: u64) -> SiameseModel {
        let v = alphabet().len();
        let mut rng = seed::rng(seed::derive(seed_val, "siamese-init"));
        let eb = 1.0 / (embed_dim as f64).sqrt();
        let embed = Mat::from_shape_fn((v, embed_dim), |_| rng.random_range(-eb..eb));
        let fwd = LstmParams::init(embed_dim, hidden, &mut rng);
        let bwd = LstmParams::init(embed_dim, hidden, &mut rng);
        let db = 1.0 / ((2 * hidden) as f64).sqrt();
        let dense_w =
            Mat::from_shape_fn((2 * hidden, 2 * hidden), |_| rng.random_range(-db..db));
        let dense_b = Vec1::zeros(2 * hidden);
        SiameseModel { embed, fwd, bwd, dense_w, dense_b }
    }

    pub fn repr_dim(&self) -> usize {
        self.dense_b.len()
    }

    /// Encode a batch of sequences into representations, keeping the caches
    /// the backward pass needs.
    pub fn encode_batch(
        &self,
        seqs: &[CharSequence],
    ) -> Result<(Mat, EncodeCache), NeuralError> {
        let b = seqs.len();
        let ids = Array2::from_shape_fn((b, SEQ_LEN), |(i, t)| seqs[i].ids[t]);
        let mask = Mat::from_shape_fn((b, SEQ_LEN), |(i, t)| {
            if ids[[i, t]] == PAD {
                0.0
            } else {
                1.0
            }
        });
        let x = embedding_forward(&ids, &self.embed)?;
        let run = bilstm_forward(&x, &mask, &self.fwd, &self.bwd)?;
        let reprs = dense_forward(&run.final_h, &self.dense_w, &self.dense_b)?;
        Ok((reprs, EncodeCache { ids, mask, x, run }))
    }

    /// Representation of one name.
    pub fn encode_name(&self, name: &str) -> Result<Vec<f64>, NeuralError> {
        let seq = encode(&normalize(name));
        let (reprs, _) = self.encode_batch(std::slice::from_ref(&seq))?;
        Ok(reprs.row(0).to_vec())
    }

    /// Backward through dense, biLSTM, and embedding. Returns flat
    /// gradients in [`ParamBlocks`] block order.
    fn encode_backward(&self, cache: &EncodeCache, grad_reprs: &Mat) -> Vec<Vec<f64>> {
        let (d_final_h, dw_dense, db_dense) =
            dense_backward(&cache.run.final_h, &self.dense_w, grad_reprs);
        let (bsz, t, _) = cache.x.dim();
        let zero_hs = Ten3::zeros((bsz, t, 2 * self.fwd.hidden));
        let zero_c = Mat::zeros((bsz, 2 * self.fwd.hidden));
        let grads = bilstm_backward(
            &cache.x,
            &cache.mask,
            &self.fwd,
            &self.bwd,
            &cache.run,
            &zero_hs,
            &d_final_h,
            &zero_c,
        );
        let d_embed = embedding_backward(&cache.ids, &grads.dx, self.embed.nrows());
        vec![
            d_embed.into_raw_vec_and_offset().0,
            grads.fwd.dw.into_raw_vec_and_offset().0,
            grads.fwd.db.to_vec(),
            grads.bwd.dw.into_raw_vec_and_offset().0,
            grads.bwd.db.to_vec(),
            dw_dense.into_raw_vec_and_offset().0,
            db_dense.to_vec(),
        ]
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), ContainerError> {
        let mut hyper = serde_json::Map::new();
        hyper.insert("embed_dim".into(), self.embed.ncols().into());
        hyper.insert("hidden".into(), self.fwd.hidden.into());
        let tensor = |name: &str, shape: Vec<usize>, data: Vec<f64>| NamedTensor {
            name: name.to_string(),
            shape,
            data,
        };
        let c = Container {
            kind: MODEL_KIND.to_string(),
            vocab: alphabet().to_vec(),
            hyper,
            tensors: vec![
                tensor("embed", vec![self.embed.nrows(), self.embed.ncols()],
                       self.embed.clone().into_raw_vec_and_offset().0),
                tensor("fwd.w", vec![self.fwd.w.nrows(), self.fwd.w.ncols()],
                       self.fwd.w.clone().into_raw_vec_and_offset().0),
                tensor("fwd.b", vec![self.fwd.b.len()], self.fwd.b.to_vec()),
                tensor("bwd.w", vec![self.bwd.w.nrows(), self.bwd.w.ncols()],
                       self.bwd.w.clone().into_raw_vec_and_offset().0),
                tensor("bwd.b", vec![self.bwd.b.len()], self.bwd.b.to_vec()),
                tensor("dense.w", vec![self.dense_w.nrows(), self.dense_w.ncols()],
                       self.dense_w.clone().into_raw_vec_and_offset().0),
                tensor("dense.b", vec![self.dense_b.len()], self.dense_b.to_vec()),
            ],
        };
        c.save(path)
    }

    pub fn load(path: &std::path::Path) -> Result<SiameseModel, ContainerError> {
        let c = Container::load(path)?;
        let bad = |what: &str| ContainerError::Header(format!("siamese model: {what}"));
        if c.kind != MODEL_KIND {
            return Err(bad(&format!("kind {:?}", c.kind)));
        }
        if c.vocab != alphabet() {
            return Err(bad("alphabet mismatch"));
        }
        let mat = |name: &str| -> Result<Mat, ContainerError> {
            let t = c.tensor(name).ok_or_else(|| bad(&format!("missing tensor {name}")))?;
            if t.shape.len() != 2 {
                return Err(bad(&format!("tensor {name} is not a matrix")));
            }
            Mat::from_shape_vec((t.shape[0], t.shape[1]), t.data.clone())
                .map_err(|e| bad(&e.to_string()))
        };
        let vec1 = |name: &str| -> Result<Vec1, ContainerError> {
            let t = c.tensor(name).ok_or_else(|| bad(&format!("missing tensor {name}")))?;
            Ok(Vec1::from_vec(t.data.clone()))
        };
        let embed_dim = c.hyper_u64("embed_dim").ok_or_else(|| bad("missing embed_dim"))? as usize;
        let hidden = c.hyper_u64("hidden").ok_or_else(|| bad("missing hidden"))? as usize;
        Ok(SiameseModel {
            embed: mat("embed")?,
            fwd: LstmParams { input: embed_dim, hidden, w: mat("fwd.w")?, b: vec1("fwd.b")? },
            bwd: LstmParams { input: embed_dim, hidden, w: mat("bwd.w")?, b: vec1("bwd.b")? },
            dense_w: mat("dense.w")?,
            dense_b: vec1("dense.b")?,
        })
    }
}

pub struct EncodeCache {
    ids: Array2<usize>,
    mask: Mat,
    x: Ten3,
    run: BiLstmRun,
}

impl ParamBlocks for SiameseModel {
    fn block_names(&self) -> Vec<&'static str> {
        vec!["embed", "fwd.w", "fwd.b", "bwd.w", "bwd.b", "dense.w", "dense.b"]
    }

    fn blocks(&self) -> Vec<&[f64]> {
        vec![
            self.embed.as_slice().unwrap(),
            self.fwd.w.as_slice().unwrap(),
            self.fwd.b.as_slice().unwrap(),
            self.bwd.w.as_slice().unwrap(),
            self.bwd.b.as_slice().unwrap(),
            self.dense_w.as_slice().unwrap(),
            self.dense_b.as_slice().unwrap(),
        ]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.embed.as_slice_mut().unwrap(),
            self.fwd.w.as_slice_mut().unwrap(),
            self.fwd.b.as_slice_mut().unwrap(),
            self.bwd.w.as_slice_mut().unwrap(),
            self.bwd.b.as_slice_mut().unwrap(),
            self.dense_w.as_slice_mut().unwrap(),
            self.dense_b.as_slice_mut().unwrap(),
        ]
    }
}

/// One training pair: two encoded names and the same-entity label.
#[derive(Debug, Clone)]
pub struct Pair {
    pub a: CharSequence,
    pub b: CharSequence,
    pub label: f64,
}

/// Positive pairs: variant pairs within each entity, capped per entity by a
/// seeded draw. Stable across epochs.
pub fn positive_pairs(entities: &[NameEntity], cfg: &SiameseConfig) -> Vec<Pair> {
    let mut out = Vec::new();
    for entity in entities {
        let mut rng = seed::rng(
            seed::derive(cfg.seed, "siamese-pos") ^ seed::derive(0, entity.canonical()),
        );
        let seqs: Vec<CharSequence> = entity
            .variants()
            .iter()
            .map(|v| encode(&textnorm::NormalizedName::from_normalized(&v.name)))
            .collect();
        let mut all: Vec<(usize, usize)> = (0..seqs.len())
            .flat_map(|i| (i + 1..seqs.len()).map(move |j| (i, j)))
            .collect();
        all.shuffle(&mut rng);
        all.truncate(cfg.max_pos_per_entity);
        out.extend(all.into_iter().map(|(i, j)| Pair {
            a: seqs[i].clone(),
            b: seqs[j].clone(),
            label: 1.0,
        }));
    }
    out
}

/// Negative pairs for one epoch: variants of two distinct entities,
/// resampled each epoch from an epoch-indexed stream.
pub fn negative_pairs(
    entities: &[NameEntity],
    n: usize,
    cfg: &SiameseConfig,
    epoch: usize,
) -> Vec<Pair> {
    if entities.len() < 2 {
        return Vec::new();
    }
    let mut rng = seed::rng(seed::derive_indexed(cfg.seed, "siamese-neg", epoch as u64));
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let ei = rng.random_range(0..entities.len());
        let ej = rng.random_range(0..entities.len());
        if ei == ej {
            continue;
        }
        let va = &entities[ei].variants();
        let vb = &entities[ej].variants();
        let a = &va[rng.random_range(0..va.len())].name;
        let b = &vb[rng.random_range(0..vb.len())].name;
        out.push(Pair {
            a: encode(&textnorm::NormalizedName::from_normalized(a)),
            b: encode(&textnorm::NormalizedName::from_normalized(b)),
            label: 0.0,
        });
    }
    out
}

/// Mean contrastive loss over pairs plus flat gradients in block order.
pub fn batch_gradients(
    model: &SiameseModel,
    pairs: &[Pair],
    margin: f64,
) -> Result<(f64, Vec<Vec<f64>>), NeuralError> {
    let seqs_a: Vec<CharSequence> = pairs.iter().map(|p| p.a.clone()).collect();
    let seqs_b: Vec<CharSequence> = pairs.iter().map(|p| p.b.clone()).collect();
    let (ra, cache_a) = model.encode_batch(&seqs_a)?;
    let (rb, cache_b) = model.encode_batch(&seqs_b)?;
    let (sims, cos_cache) = cosine_forward(&ra, &rb)?;
    let n = pairs.len() as f64;
    let mut total = 0.0;
    let mut grad_sims = Vec1::zeros(pairs.len());
    for (i, pair) in pairs.iter().enumerate() {
        let (loss, dl_ds) = contrastive_loss(sims[i], pair.label, margin);
        total += loss;
        grad_sims[i] = dl_ds / n;
    }
    let mean = total / n;
    if !mean.is_finite() {
        return Err(NeuralError::NonFiniteLoss(mean));
    }
    let (ga, gb) = cosine_backward(&ra, &rb, &cos_cache, &grad_sims);
    let mut grads = model.encode_backward(&cache_a, &ga);
    let grads_b = model.encode_backward(&cache_b, &gb);
    for (acc, g) in grads.iter_mut().zip(&grads_b) {
        for (a, b) in acc.iter_mut().zip(g) {
            *a += b;
        }
    }
    Ok((mean, grads))
}

/// Forward-only mean loss, used by gradient checking.
pub fn batch_loss(model: &SiameseModel, pairs: &[Pair], margin: f64) -> f64 {
    let seqs_a: Vec<CharSequence> = pairs.iter().map(|p| p.a.clone()).collect();
    let seqs_b: Vec<CharSequence> = pairs.iter().map(|p| p.b.clone()).collect();
    let (ra, _) = model.encode_batch(&seqs_a).expect("encode");
    let (rb, _) = model.encode_batch(&seqs_b).expect("encode");
    let (sims, _) = cosine_forward(&ra, &rb).expect("cosine");
    pairs
        .iter()
        .enumerate()
        .map(|(i, p)| contrastive_loss(sims[i], p.label, margin).0)
        .sum::<f64>()
        / pairs.len() as f64
}

#[derive(Debug, Clone)]
pub struct TrainLog {
    /// mean pair loss per epoch
    pub epoch_losses: Vec<f64>,
}

/// Train the matcher on entity variant pairs. Positives are fixed across
/// epochs; negatives are resampled each epoch at `negative_ratio` per
/// positive. Deterministic for a given config.
pub fn train(
    entities: &[NameEntity],
    cfg: &SiameseConfig,
) -> Result<(SiameseModel, TrainLog), NeuralError> {
    let mut model = SiameseModel::init(cfg.embed_dim, cfg.hidden, cfg.seed);
    let mut state = AdamState::for_model(&model);
    let adam_cfg = AdamConfig { lr: cfg.lr, ..AdamConfig::default() };
    let positives = positive_pairs(entities, cfg);
    let mut log = TrainLog { epoch_losses: Vec::with_capacity(cfg.epochs) };
    for epoch in 0..cfg.epochs {
        let mut pairs = positives.clone();
        pairs.extend(negative_pairs(
            entities,
            positives.len() * cfg.negative_ratio,
            cfg,
            epoch,
        ));
        pairs.shuffle(&mut seed::rng(seed::derive_indexed(
            cfg.seed,
            "siamese-shuffle",
            epoch as u64,
        )));
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for batch in pairs.chunks(cfg.batch_size) {
            let (loss, mut grads) = batch_gradients(&model, batch, cfg.margin)?;
            clip_gradients(&mut grads, cfg.clip);
            adam_step(&mut model, &grads, &mut state, &adam_cfg);
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
        }
        let epoch_loss = loss_sum / seen as f64;
        log::info!("siamese epoch {epoch}: loss {epoch_loss:.6} over {seen} pairs");
        log.epoch_losses.push(epoch_loss);
    }
    Ok((model, log))
}

/// Build the ANN index over entity canonical names.
pub fn build_match_index(
    model: &SiameseModel,
    entities: &[NameEntity],
    n_trees: usize,
    leaf_capacity: usize,
    seed_val: u64,
) -> Result<RpForestIndex, AnnError> {
    let mut items = Vec::with_capacity(entities.len());
    for chunk in entities.chunks(512) {
        let seqs: Vec<CharSequence> = chunk
            .iter()
            .map(|e| encode(&textnorm::NormalizedName::from_normalized(e.canonical())))
            .collect();
        let (reprs, _) = model.encode_batch(&seqs).expect("encode");
        for (e, row) in chunk.iter().zip(reprs.rows()) {
            items.push((e.canonical().to_string(), row.to_vec()));
        }
    }
    RpForestIndex::build(items, n_trees, leaf_capacity, seed_val)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub canonical: String,
    /// cosine distance in representation space, in [0, 2]
    pub distance: f64,
}

/// Match a raw name against the index: top-k canonical names by learned
/// distance, filtered by `threshold`.
pub fn match_name(
    model: &SiameseModel,
    index: &RpForestIndex,
    query: &str,
    k: usize,
    search_budget: usize,
    threshold: f64,
) -> Result<Vec<MatchResult>, AnnError> {
    let repr = model.encode_name(query).expect("encode");
    let hits = index.query(&repr, k, search_budget)?;
    Ok(hits
        .into_iter()
        .filter(|(_, d)| *d <= threshold)
        .map(|(canonical, distance)| MatchResult { canonical, distance })
        .collect())
}

/// Fraction of queries whose nearest canonical under `distance` is the true
/// one. Shared by the learned matcher and the character n-gram baseline;
/// ties break toward the lexicographically smaller canonical.
pub fn nearest_canonical_accuracy(
    queries: &[(String, String)],
    canonicals: &[String],
    mut distance: impl FnMut(&str, &str) -> f64,
) -> f64 {
    if queries.is_empty() {
        return 0.0;
    }
    let mut correct = 0usize;
    for (query, truth) in queries {
        let best = canonicals
            .iter()
            .map(|c| (distance(query, c), c))
            .min_by(|(da, ca), (db, cb)| da.total_cmp(db).then_with(|| ca.cmp(cb)))
            .map(|(_, c)| c);
        if best.map(|c| c == truth).unwrap_or(false) {
            correct += 1;
        }
    }
    correct as f64 / queries.len() as f64
}

/// Nearest-canonical accuracy for a trained model, batching the queries.
pub fn model_accuracy(
    model: &SiameseModel,
    queries: &[(String, String)],
    canonicals: &[String],
) -> f64 {
    let seqs: Vec<CharSequence> = canonicals
        .iter()
        .map(|c| encode(&textnorm::NormalizedName::from_normalized(c)))
        .collect();
    let (canon_reprs, _) = model.encode_batch(&seqs).expect("encode");
    let mut correct = 0usize;
    for chunk in queries.chunks(512) {
        let qseqs: Vec<CharSequence> =
            chunk.iter().map(|(q, _)| encode(&normalize(q))).collect();
        let (q_reprs, _) = model.encode_batch(&qseqs).expect("encode");
        for ((_, truth), qrow) in chunk.iter().zip(q_reprs.rows()) {
            let q = qrow.to_owned();
            let best = canon_reprs
                .rows()
                .into_iter()
                .zip(canonicals)
                .map(|(crow, name)| {
                    let sim = crate::neural::layers::cosine_similarity(&q, &crow.to_owned())
                        .expect("cosine");
                    (1.0 - sim, name)
                })
                .min_by(|(da, ca), (db, cb)| da.total_cmp(db).then_with(|| ca.cmp(cb)))
                .map(|(_, name)| name);
            if best.map(|c| c == truth).unwrap_or(false) {
                correct += 1;
            }
        }
    }
    correct as f64 / queries.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::{Provenance, Variant};

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

    fn tiny_model() -> SiameseModel {
        SiameseModel::init(8, 6, 42)
    }

    #[test]
    fn identical_names_have_similarity_one() {
        let model = tiny_model();
        let a = model.encode_name("emile zola").unwrap();
        let b = model.encode_name("emile zola").unwrap();
        assert_eq!(a, b);
        let sim = crate::neural::layers::cosine_similarity(
            &Vec1::from_vec(a),
            &Vec1::from_vec(b),
        )
        .unwrap();
        assert!((sim - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pair_sampling_labels_and_cap() {
        let entities = vec![
            entity("emile zola", &["e. zola", "zola, emile", "zola, e."]),
            entity("jane austen", &["j. austen", "austen, jane"]),
        ];
        let cfg = SiameseConfig { max_pos_per_entity: 3, seed: 7, ..Default::default() };
        let pos = positive_pairs(&entities, &cfg);
        // entity 1 has C(4,2)=6 pairs capped to 3; entity 2 has C(3,2)=3
        assert_eq!(pos.len(), 6);
        assert!(pos.iter().all(|p| p.label == 1.0));
        let neg = negative_pairs(&entities, 10, &cfg, 0);
        assert_eq!(neg.len(), 10);
        assert!(neg.iter().all(|p| p.label == 0.0));
        // negatives vary by epoch, positives do not
        let neg1 = negative_pairs(&entities, 10, &cfg, 1);
        assert_ne!(
            neg.iter().map(|p| p.a.ids).collect::<Vec<_>>(),
            neg1.iter().map(|p| p.a.ids).collect::<Vec<_>>()
        );
        let pos2 = positive_pairs(&entities, &cfg);
        assert_eq!(
            pos.iter().map(|p| (p.a.ids, p.b.ids)).collect::<Vec<_>>(),
            pos2.iter().map(|p| (p.a.ids, p.b.ids)).collect::<Vec<_>>()
        );
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let entities = vec![
            entity("emile zola", &["e. zola", "zola, emile"]),
            entity("jane austen", &["j. austen", "austen, jane"]),
            entity("franz kafka", &["f. kafka", "kafka, franz"]),
            entity("willa cather", &["w. cather", "cather, willa"]),
        ];
        let cfg = SiameseConfig {
            embed_dim: 12,
            hidden: 8,
            epochs: 5,
            batch_size: 16,
            seed: 3,
            ..Default::default()
        };
        let (_, log) = train(&entities, &cfg).unwrap();
        assert_eq!(log.epoch_losses.len(), 5);
        assert!(
            log.epoch_losses[4] < log.epoch_losses[0],
            "loss did not drop: {:?}",
            log.epoch_losses
        );
        let (model2, log2) = train(&entities, &cfg).unwrap();
        assert_eq!(log.epoch_losses, log2.epoch_losses);
        let (model1, _) = train(&entities, &cfg).unwrap();
        assert_eq!(model1.blocks(), model2.blocks());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let entities = vec![
            entity("ab cd", &["a. cd", "cd, ab"]),
            entity("ef gh", &["e. gh"]),
        ];
        let cfg = SiameseConfig { embed_dim: 5, hidden: 4, seed: 9, ..Default::default() };
        let mut model = SiameseModel::init(cfg.embed_dim, cfg.hidden, cfg.seed);
        let mut pairs = positive_pairs(&entities, &cfg);
        pairs.extend(negative_pairs(&entities, 4, &cfg, 0));
        let (_, grads) = batch_gradients(&model, &pairs, 0.0).unwrap();
        let report = crate::neural::gradcheck::grad_check(
            &mut model,
            &grads,
            |m| batch_loss(m, &pairs, 0.0),
            1e-4,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "flagged: {:?}", report.flagged());
    }

    #[test]
    fn match_index_finds_trained_entities() {
        let entities = vec![
            entity("emile zola", &["e. zola", "zola, emile"]),
            entity("jane austen", &["j. austen", "austen, jane"]),
            entity("franz kafka", &["f. kafka", "kafka, franz"]),
        ];
        let cfg = SiameseConfig {
            embed_dim: 16,
            hidden: 12,
            epochs: 30,
            batch_size: 32,
            seed: 5,
            ..Default::default()
        };
        let (model, _) = train(&entities, &cfg).unwrap();
        let index = build_match_index(&model, &entities, 4, 4, 11).unwrap();
        let hits = match_name(&model, &index, "Zola, Émile", 1, 100, f64::INFINITY).unwrap();
        assert_eq!(hits[0].canonical, "emile zola");
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("siamese.anm");
        let model = tiny_model();
        model.save(&path).unwrap();
        let loaded = SiameseModel::load(&path).unwrap();
        assert_eq!(model.blocks(), loaded.blocks());
        assert_eq!(
            model.encode_name("emile zola").unwrap(),
            loaded.encode_name("emile zola").unwrap()
        );
    }

    #[test]
    fn ngram_baseline_shares_the_evaluation_harness() {
        let canonicals = vec!["emile zola".to_string(), "jane austen".to_string()];
        let queries = vec![
            ("emile zole".to_string(), "emile zola".to_string()),
            ("jane austen".to_string(), "jane austen".to_string()),
        ];
        let acc = nearest_canonical_accuracy(&queries, &canonicals, |a, b| {
            textnorm::ngram_distance(a, b, 3).unwrap()
        });
        assert_eq!(acc, 1.0);
    }
}
