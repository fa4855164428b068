//! Seq2seq name corrector: a character-level encoder-decoder (biLSTM
//! encoder, plain LSTM decoder bridged from the concatenated encoder final
//! states) trained with teacher forcing, decoded with beam search.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::neural::container::{Container, ContainerError, NamedTensor};
use crate::neural::layers::{
    clip_gradients, dense_backward, dense_forward, embedding_backward, embedding_forward,
};
use crate::neural::loss::softmax_cross_entropy;
use crate::neural::lstm::{
    bilstm_backward, bilstm_forward, lstm_backward_from, lstm_forward_from, LstmParams,
};
use crate::neural::{
    adam::{adam_step, AdamConfig, AdamState},
    Mat, NeuralError, ParamBlocks, Ten3, Vec1,
};
use crate::seed;
use crate::textnorm::{alphabet, encode, normalize, CharSequence, EOS, PAD, SOS, SEQ_LEN};

pub const MODEL_KIND: &str = "seq2seq";

#[derive(Debug, Clone)]
pub struct Seq2SeqConfig {
    pub embed_dim: usize,
    pub enc_hidden: usize,
    pub lr: f64,
    pub clip: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for Seq2SeqConfig {
    fn default() -> Self {
        Seq2SeqConfig {
            embed_dim: 256,
            enc_hidden: 256,
            lr: 1e-3,
            clip: 5.0,
            batch_size: 1024,
            epochs: 20,
            seed: 0,
        }
    }
}

/// Encoder-decoder parameters. The decoder width is forced to twice the
/// encoder width so its initial state is exactly the concatenation of the
/// encoder's final hidden/cell states (the bridge is the identity).
#[derive(Debug, Clone)]
pub struct Seq2SeqModel {
    pub embed: Mat,          // V x E, shared by encoder and decoder inputs
    pub enc_fwd: LstmParams, // E -> He
    pub enc_bwd: LstmParams, // E -> He
    pub dec: LstmParams,     // E -> 2He
    pub proj_w: Mat,         // 2He x V
    pub proj_b: Vec1,        // V
}

impl Seq2SeqModel {
    pub fn init(vocab: usize, embed_dim: usize, enc_hidden: usize, seed_val: u64) -> Seq2SeqModel {
        let mut rng = seed::rng(seed::derive(seed_val, "seq2seq-init"));
        let eb = 1.0 / (embed_dim as f64).sqrt();
        let embed = Mat::from_shape_fn((vocab, embed_dim), |_| rng.random_range(-eb..eb));
        let enc_fwd = LstmParams::init(embed_dim, enc_hidden, &mut rng);
        let enc_bwd = LstmParams::init(embed_dim, enc_hidden, &mut rng);
        let dec = LstmParams::init(embed_dim, 2 * enc_hidden, &mut rng);
        assert_eq!(dec.hidden, 2 * enc_hidden, "bridge width identity");
        let pb = 1.0 / ((2 * enc_hidden) as f64).sqrt();
        let proj_w = Mat::from_shape_fn((2 * enc_hidden, vocab), |_| rng.random_range(-pb..pb));
        let proj_b = Vec1::zeros(vocab);
        Seq2SeqModel { embed, enc_fwd, enc_bwd, dec, proj_w, proj_b }
    }

    pub fn vocab(&self) -> usize {
        self.embed.nrows()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), ContainerError> {
        let mut hyper = serde_json::Map::new();
        hyper.insert("embed_dim".into(), self.embed.ncols().into());
        hyper.insert("enc_hidden".into(), self.enc_fwd.hidden.into());
        let tensor = |name: &str, shape: Vec<usize>, data: Vec<f64>| NamedTensor {
            name: name.to_string(),
            shape,
            data,
        };
        let mat_t = |name: &str, m: &Mat| {
            tensor(name, vec![m.nrows(), m.ncols()], m.clone().into_raw_vec_and_offset().0)
        };
        let c = Container {
            kind: MODEL_KIND.to_string(),
            vocab: alphabet().to_vec(),
            hyper,
            tensors: vec![
                mat_t("embed", &self.embed),
                mat_t("enc-fwd.w", &self.enc_fwd.w),
                tensor("enc-fwd.b", vec![self.enc_fwd.b.len()], self.enc_fwd.b.to_vec()),
                mat_t("enc-bwd.w", &self.enc_bwd.w),
                tensor("enc-bwd.b", vec![self.enc_bwd.b.len()], self.enc_bwd.b.to_vec()),
                mat_t("dec.w", &self.dec.w),
                tensor("dec.b", vec![self.dec.b.len()], self.dec.b.to_vec()),
                mat_t("proj.w", &self.proj_w),
                tensor("proj.b", vec![self.proj_b.len()], self.proj_b.to_vec()),
            ],
        };
        c.save(path)
    }

    pub fn load(path: &std::path::Path) -> Result<Seq2SeqModel, ContainerError> {
        let c = Container::load(path)?;
        let bad = |what: &str| ContainerError::Header(format!("seq2seq model: {what}"));
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
        let embed_dim =
            c.hyper_u64("embed_dim").ok_or_else(|| bad("missing embed_dim"))? as usize;
        let he = c.hyper_u64("enc_hidden").ok_or_else(|| bad("missing enc_hidden"))? as usize;
        Ok(Seq2SeqModel {
            embed: mat("embed")?,
            enc_fwd: LstmParams { input: embed_dim, hidden: he, w: mat("enc-fwd.w")?, b: vec1("enc-fwd.b")? },
            enc_bwd: LstmParams { input: embed_dim, hidden: he, w: mat("enc-bwd.w")?, b: vec1("enc-bwd.b")? },
            dec: LstmParams { input: embed_dim, hidden: 2 * he, w: mat("dec.w")?, b: vec1("dec.b")? },
            proj_w: mat("proj.w")?,
            proj_b: vec1("proj.b")?,
        })
    }
}

impl ParamBlocks for Seq2SeqModel {
    fn block_names(&self) -> Vec<&'static str> {
        vec![
            "embed", "enc-fwd.w", "enc-fwd.b", "enc-bwd.w", "enc-bwd.b", "dec.w",
            "dec.b", "proj.w", "proj.b",
        ]
    }

    fn blocks(&self) -> Vec<&[f64]> {
        vec![
            self.embed.as_slice().unwrap(),
            self.enc_fwd.w.as_slice().unwrap(),
            self.enc_fwd.b.as_slice().unwrap(),
            self.enc_bwd.w.as_slice().unwrap(),
            self.enc_bwd.b.as_slice().unwrap(),
            self.dec.w.as_slice().unwrap(),
            self.dec.b.as_slice().unwrap(),
            self.proj_w.as_slice().unwrap(),
            self.proj_b.as_slice().unwrap(),
        ]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.embed.as_slice_mut().unwrap(),
            self.enc_fwd.w.as_slice_mut().unwrap(),
            self.enc_fwd.b.as_slice_mut().unwrap(),
            self.enc_bwd.w.as_slice_mut().unwrap(),
            self.enc_bwd.b.as_slice_mut().unwrap(),
            self.dec.w.as_slice_mut().unwrap(),
            self.dec.b.as_slice_mut().unwrap(),
            self.proj_w.as_slice_mut().unwrap(),
            self.proj_b.as_slice_mut().unwrap(),
        ]
    }
}

/// A (noisy variant, canonical target) training pair, already encoded.
#[derive(Debug, Clone)]
pub struct TrainPair {
    pub src: CharSequence,
    pub tgt: CharSequence,
}

impl TrainPair {
    pub fn from_strings(src: &str, tgt: &str) -> TrainPair {
        TrainPair { src: encode(&normalize(src)), tgt: encode(&normalize(tgt)) }
    }
}

// Teacher-forcing arrays: decoder inputs (SOS-shifted target), decoder
// targets (target then EOS), and the loss mask covering the EOS position.
fn decoder_arrays(pairs: &[TrainPair]) -> (Array2<usize>, Array2<usize>, Mat) {
    let b = pairs.len();
    let mut dec_in = Array2::from_elem((b, SEQ_LEN), PAD);
    let mut dec_tgt = Array2::from_elem((b, SEQ_LEN), PAD);
    let mut mask = Mat::zeros((b, SEQ_LEN));
    for (bi, pair) in pairs.iter().enumerate() {
        let len = pair.tgt.len();
        dec_in[[bi, 0]] = SOS;
        for t in 0..len.min(SEQ_LEN - 1) {
            dec_in[[bi, t + 1]] = pair.tgt.ids[t];
        }
        for t in 0..len {
            dec_tgt[[bi, t]] = pair.tgt.ids[t];
        }
        let stop = (len + 1).min(SEQ_LEN);
        if len < SEQ_LEN {
            dec_tgt[[bi, len]] = EOS;
        }
        for t in 0..stop {
            mask[[bi, t]] = 1.0;
        }
    }
    (dec_in, dec_tgt, mask)
}

fn src_arrays(pairs: &[TrainPair]) -> (Array2<usize>, Mat) {
    let b = pairs.len();
    let ids = Array2::from_shape_fn((b, SEQ_LEN), |(i, t)| pairs[i].src.ids[t]);
    let mask = Mat::from_shape_fn((b, SEQ_LEN), |(i, t)| {
        if ids[[i, t]] == PAD {
            0.0
        } else {
            1.0
        }
    });
    (ids, mask)
}

/// Teacher-forced cross-entropy over a batch, with flat gradients in block
/// order.
pub fn batch_gradients(
    model: &Seq2SeqModel,
    pairs: &[TrainPair],
) -> Result<(f64, Vec<Vec<f64>>), NeuralError> {
    let b = pairs.len();
    let v = model.vocab();
    let hd = model.dec.hidden;
    let (src_ids, src_mask) = src_arrays(pairs);
    let (dec_in, dec_tgt, dec_mask) = decoder_arrays(pairs);
    let x_src = embedding_forward(&src_ids, &model.embed)?;
    let enc = bilstm_forward(&x_src, &src_mask, &model.enc_fwd, &model.enc_bwd)?;
    let x_dec = embedding_forward(&dec_in, &model.embed)?;
    let dec_run = lstm_forward_from(
        &x_dec,
        &dec_mask,
        &model.dec,
        false,
        enc.final_h.clone(),
        enc.final_c.clone(),
    )?;
    let hs_flat = dec_run
        .hs
        .clone()
        .into_shape_with_order((b * SEQ_LEN, hd))
        .expect("contiguous decode states");
    let logits_flat = dense_forward(&hs_flat, &model.proj_w, &model.proj_b)?;
    let logits = logits_flat
        .into_shape_with_order((b, SEQ_LEN, v))
        .expect("contiguous logits");
    let (loss, dlogits) = softmax_cross_entropy(&logits, &dec_tgt, &dec_mask)?;

    let dlogits_flat = dlogits
        .into_shape_with_order((b * SEQ_LEN, v))
        .expect("contiguous logit grads");
    let (d_hs_flat, d_proj_w, d_proj_b) =
        dense_backward(&hs_flat, &model.proj_w, &dlogits_flat);
    let d_hs = d_hs_flat
        .into_shape_with_order((b, SEQ_LEN, hd))
        .expect("contiguous state grads");
    let zero = Mat::zeros((b, hd));
    let (dec_grads, dh0, dc0) = lstm_backward_from(
        &x_dec, &dec_mask, &model.dec, &dec_run, &d_hs, &zero, &zero,
    );
    let zero_hs = Ten3::zeros((b, SEQ_LEN, 2 * model.enc_fwd.hidden));
    let enc_grads = bilstm_backward(
        &x_src, &src_mask, &model.enc_fwd, &model.enc_bwd, &enc, &zero_hs, &dh0, &dc0,
    );
    let mut d_embed = embedding_backward(&src_ids, &enc_grads.dx, v);
    d_embed += &embedding_backward(&dec_in, &dec_grads.dx, v);
    Ok((
        loss,
        vec![
            d_embed.into_raw_vec_and_offset().0,
            enc_grads.fwd.dw.into_raw_vec_and_offset().0,
            enc_grads.fwd.db.to_vec(),
            enc_grads.bwd.dw.into_raw_vec_and_offset().0,
            enc_grads.bwd.db.to_vec(),
            dec_grads.dw.into_raw_vec_and_offset().0,
            dec_grads.db.to_vec(),
            d_proj_w.into_raw_vec_and_offset().0,
            d_proj_b.to_vec(),
        ],
    ))
}

/// Forward-only batch loss, for gradient checking.
pub fn batch_loss(model: &Seq2SeqModel, pairs: &[TrainPair]) -> f64 {
    let b = pairs.len();
    let v = model.vocab();
    let hd = model.dec.hidden;
    let (src_ids, src_mask) = src_arrays(pairs);
    let (dec_in, dec_tgt, dec_mask) = decoder_arrays(pairs);
    let x_src = embedding_forward(&src_ids, &model.embed).expect("embed");
    let enc = bilstm_forward(&x_src, &src_mask, &model.enc_fwd, &model.enc_bwd).expect("encode");
    let x_dec = embedding_forward(&dec_in, &model.embed).expect("embed");
    let dec_run = lstm_forward_from(
        &x_dec, &dec_mask, &model.dec, false, enc.final_h.clone(), enc.final_c.clone(),
    )
    .expect("decode");
    let hs_flat = dec_run
        .hs
        .clone()
        .into_shape_with_order((b * SEQ_LEN, hd))
        .expect("contiguous");
    let logits = dense_forward(&hs_flat, &model.proj_w, &model.proj_b)
        .expect("project")
        .into_shape_with_order((b, SEQ_LEN, v))
        .expect("contiguous");
    softmax_cross_entropy(&logits, &dec_tgt, &dec_mask).expect("loss").0
}

#[derive(Debug, Clone)]
pub struct TrainLog {
    pub epoch_losses: Vec<f64>,
}

/// Teacher-forced training. Deterministic per config.
pub fn train(
    pairs: &[TrainPair],
    cfg: &Seq2SeqConfig,
) -> Result<(Seq2SeqModel, TrainLog), NeuralError> {
    assert!(!pairs.is_empty(), "training needs at least one pair");
    let mut model =
        Seq2SeqModel::init(alphabet().len(), cfg.embed_dim, cfg.enc_hidden, cfg.seed);
    let mut state = AdamState::for_model(&model);
    let adam_cfg = AdamConfig { lr: cfg.lr, ..AdamConfig::default() };
    let mut log = TrainLog { epoch_losses: Vec::with_capacity(cfg.epochs) };
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut seed::rng(seed::derive_indexed(
            cfg.seed,
            "seq2seq-shuffle",
            epoch as u64,
        )));
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<TrainPair> = chunk.iter().map(|&i| pairs[i].clone()).collect();
            let (loss, mut grads) = batch_gradients(&model, &batch)?;
            if !loss.is_finite() {
                return Err(NeuralError::NonFiniteLoss(loss));
            }
            clip_gradients(&mut grads, cfg.clip);
            adam_step(&mut model, &grads, &mut state, &adam_cfg);
            loss_sum += loss * batch.len() as f64;
        }
        let epoch_loss = loss_sum / pairs.len() as f64;
        log::info!("seq2seq epoch {epoch}: loss {epoch_loss:.6} over {} pairs", pairs.len());
        log.epoch_losses.push(epoch_loss);
    }
    Ok((model, log))
}

/// One partial decode: tokens emitted so far (no control tokens removed),
/// cumulative log-probability, and whether EOS has been produced.
#[derive(Debug, Clone)]
pub struct BeamHypothesis {
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub finished: bool,
}

struct LiveHyp {
    tokens: Vec<usize>,
    log_prob: f64,
    h: Mat,
    c: Mat,
}

fn log_softmax(row: &Vec1) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = row.iter().map(|&l| (l - max).exp()).sum();
    let log_z = z.ln() + max;
    row.iter().map(|&l| l - log_z).collect()
}

/// Beam search over an encoded input. No length normalization; ties break
/// toward the lexicographically smaller token sequence. Results are sorted
/// by log-probability, descending; unfinished hypotheses (cut at `max_len`)
/// fill the list only when fewer than `beam_width` finished ones exist.
pub fn beam_decode(
    model: &Seq2SeqModel,
    input: &str,
    beam_width: usize,
    max_len: usize,
) -> Vec<BeamHypothesis> {
    assert!(beam_width > 0, "beam width must be positive");
    let seq = encode(&normalize(input));
    let (src_ids, src_mask) = src_arrays(&[TrainPair { src: seq.clone(), tgt: seq }]);
    let x_src = embedding_forward(&src_ids, &model.embed).expect("embed");
    let enc =
        bilstm_forward(&x_src, &src_mask, &model.enc_fwd, &model.enc_bwd).expect("encode");
    let mut live = vec![LiveHyp {
        tokens: Vec::new(),
        log_prob: 0.0,
        h: enc.final_h,
        c: enc.final_c,
    }];
    let mut pool: Vec<BeamHypothesis> = Vec::new();
    let v = model.vocab();
    let ones = Mat::from_elem((1, 1), 1.0);
    for _ in 0..max_len {
        if live.is_empty() || pool.len() >= beam_width {
            break;
        }
        // (parent index, token, cumulative logp), plus the decoder state
        // computed once per parent
        let mut states = Vec::with_capacity(live.len());
        let mut candidates: Vec<(usize, usize, f64)> = Vec::with_capacity(live.len() * v);
        for (pi, hyp) in live.iter().enumerate() {
            let last = *hyp.tokens.last().unwrap_or(&SOS);
            let ids = Array2::from_elem((1, 1), last);
            let x = embedding_forward(&ids, &model.embed).expect("embed");
            let run = lstm_forward_from(
                &x, &ones, &model.dec, false, hyp.h.clone(), hyp.c.clone(),
            )
            .expect("decode step");
            let logits = dense_forward(&run.final_h, &model.proj_w, &model.proj_b)
                .expect("project");
            let lps = log_softmax(&logits.row(0).to_owned());
            for (tok, lp) in lps.iter().enumerate() {
                candidates.push((pi, tok, hyp.log_prob + lp));
            }
            states.push((run.final_h, run.final_c));
        }
        candidates.sort_by(|a, b| {
            b.2.total_cmp(&a.2)
                .then_with(|| live[a.0].tokens.cmp(&live[b.0].tokens))
                .then_with(|| a.1.cmp(&b.1))
        });
        candidates.truncate(beam_width);
        let mut next_live = Vec::with_capacity(beam_width);
        for (pi, tok, lp) in candidates {
            let mut tokens = live[pi].tokens.clone();
            tokens.push(tok);
            if tok == EOS {
                pool.push(BeamHypothesis { tokens, log_prob: lp, finished: true });
            } else {
                next_live.push(LiveHyp {
                    tokens,
                    log_prob: lp,
                    h: states[pi].0.clone(),
                    c: states[pi].1.clone(),
                });
            }
        }
        live = next_live;
    }
    pool.extend(live.into_iter().map(|h| BeamHypothesis {
        tokens: h.tokens,
        log_prob: h.log_prob,
        finished: false,
    }));
    pool.sort_by(|a, b| {
        b.log_prob.total_cmp(&a.log_prob).then_with(|| a.tokens.cmp(&b.tokens))
    });
    pool.truncate(beam_width);
    pool
}

/// Render a token sequence as a name, dropping control tokens.
pub fn tokens_to_string(tokens: &[usize]) -> String {
    let a = alphabet();
    tokens
        .iter()
        .filter(|&&t| t != PAD && t != SOS && t != EOS && t != crate::textnorm::UNK)
        .filter_map(|&t| a.get(t).copied())
        .collect()
}

/// Top-10 corrected forms of a raw name: normalize, beam-decode with width
/// 10, strip control tokens, deduplicate preserving beam order.
pub fn correct_name(model: &Seq2SeqModel, name: &str) -> Vec<String> {
    let hyps = beam_decode(model, name, 10, SEQ_LEN);
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for h in hyps {
        let s = tokens_to_string(&h.tokens);
        if seen.insert(s.clone()) {
            out.push(s);
        }
    }
    out.truncate(10);
    out
}

/// Exhaustive most-probable complete sequence: enumerate every decoding
/// that is EOS-terminated or cut at `max_len` and return the argmax (ties
/// break toward the lexicographically smaller token sequence). This is the
/// oracle a saturating beam must reproduce; cost is O(V^max_len), so keep
/// the model tiny.
pub fn enumeration_argmax(
    model: &Seq2SeqModel,
    input: &str,
    max_len: usize,
) -> (Vec<usize>, f64) {
    let seq = encode(&normalize(input));
    let (src_ids, src_mask) = src_arrays(&[TrainPair { src: seq.clone(), tgt: seq }]);
    let x = embedding_forward(&src_ids, &model.embed).expect("embed");
    let enc = bilstm_forward(&x, &src_mask, &model.enc_fwd, &model.enc_bwd).expect("encode");
    let ones = Mat::from_elem((1, 1), 1.0);
    let v = model.vocab();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut stack = vec![(Vec::<usize>::new(), 0.0, enc.final_h, enc.final_c)];
    while let Some((tokens, lp, h, c)) = stack.pop() {
        if tokens.last() == Some(&EOS) || tokens.len() == max_len {
            let better = match &best {
                None => true,
                Some((blp, btoks)) => lp > *blp || (lp == *blp && tokens < *btoks),
            };
            if better {
                best = Some((lp, tokens));
            }
            continue;
        }
        let last = *tokens.last().unwrap_or(&SOS);
        let ids = Array2::from_elem((1, 1), last);
        let xe = embedding_forward(&ids, &model.embed).expect("embed");
        let run = lstm_forward_from(&xe, &ones, &model.dec, false, h, c).expect("decode");
        let logits = dense_forward(&run.final_h, &model.proj_w, &model.proj_b).expect("project");
        let lps = log_softmax(&logits.row(0).to_owned());
        for tok in 0..v {
            let mut t = tokens.clone();
            t.push(tok);
            stack.push((t, lp + lps[tok], run.final_h.clone(), run.final_c.clone()));
        }
    }
    let (lp, tokens) = best.expect("max_len > 0");
    (tokens, lp)
}
