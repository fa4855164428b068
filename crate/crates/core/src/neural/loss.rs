//! Losses: contrastive loss on cosine similarity, and masked softmax
//! cross-entropy for the decoder.

use ndarray::{s, Array3};

use super::{Mat, NeuralError, Ten3};

/// Contrastive loss on a similarity s in [-1,1]:
/// `L = y (1-s)^2 + (1-y) max(0, s-m)^2`. Returns (loss, dL/ds).
pub fn contrastive_loss(s: f64, y: f64, margin: f64) -> (f64, f64) {
    if y > 0.5 {
        let d = 1.0 - s;
        (d * d, -2.0 * d)
    } else {
        let d = (s - margin).max(0.0);
        (d * d, 2.0 * d)
    }
}

/// Masked, mean-reduced softmax cross-entropy over logits of shape B x T x V
/// with integer targets B x T. Returns (mean loss, dL/dlogits).
pub fn softmax_cross_entropy(
    logits: &Ten3,
    targets: &ndarray::Array2<usize>,
    mask: &Mat,
) -> Result<(f64, Ten3), NeuralError> {
    let (b, t, v) = logits.dim();
    if targets.dim() != (b, t) || mask.dim() != (b, t) {
        return Err(NeuralError::Shape(format!(
            "cross-entropy: logits {:?} targets {:?} mask {:?}",
            logits.dim(),
            targets.dim(),
            mask.dim()
        )));
    }
    let denom: f64 = mask.sum();
    if denom == 0.0 {
        return Ok((0.0, Array3::zeros((b, t, v))));
    }
    let mut grad = Array3::zeros((b, t, v));
    let mut total = 0.0;
    for bi in 0..b {
        for ti in 0..t {
            let m = mask[[bi, ti]];
            if m == 0.0 {
                continue;
            }
            let target = targets[[bi, ti]];
            if target >= v {
                return Err(NeuralError::IdOutOfRange { id: target, vocab: v });
            }
            let row = logits.slice(s![bi, ti, ..]);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|&l| (l - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            let log_z = z.ln() + max;
            total += (log_z - row[target]) * m;
            let scale = m / denom;
            let mut grow = grad.slice_mut(s![bi, ti, ..]);
            for (j, e) in exps.iter().enumerate() {
                grow[j] = (e / z - f64::from(u8::from(j == target))) * scale;
            }
        }
    }
    let loss = total / denom;
    if !loss.is_finite() {
        return Err(NeuralError::NonFiniteLoss(loss));
    }
    Ok((loss, grad))
}
