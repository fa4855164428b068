//! Embedding, dense, and cosine-similarity layers with explicit backward
//! passes.

use ndarray::{Array2, Array3, Axis};

use super::{Mat, NeuralError, Ten3, Vec1};

/// Look up rows of `table` (V x E) for a batch of id sequences (B x T).
pub fn embedding_forward(
    ids: &Array2<usize>,
    table: &Mat,
) -> Result<Ten3, NeuralError> {
    let (v, e) = table.dim();
    let (b, t) = ids.dim();
    let mut out = Array3::zeros((b, t, e));
    for bi in 0..b {
        for ti in 0..t {
            let id = ids[[bi, ti]];
            if id >= v {
                return Err(NeuralError::IdOutOfRange { id, vocab: v });
            }
            out.slice_mut(ndarray::s![bi, ti, ..]).assign(&table.row(id));
        }
    }
    Ok(out)
}

/// Scatter upstream gradients into table rows. PAD rows also receive
/// gradients unless the caller masked them upstream.
pub fn embedding_backward(ids: &Array2<usize>, grad_out: &Ten3, vocab: usize) -> Mat {
    let (b, t, e) = grad_out.dim();
    let mut grad_table = Array2::zeros((vocab, e));
    for bi in 0..b {
        for ti in 0..t {
            let id = ids[[bi, ti]];
            let mut row = grad_table.row_mut(id);
            row += &grad_out.slice(ndarray::s![bi, ti, ..]);
        }
    }
    grad_table
}

/// Affine map `x W + b` for x of shape N x I, W of shape I x O.
pub fn dense_forward(x: &Mat, w: &Mat, b: &Vec1) -> Result<Mat, NeuralError> {
    if x.ncols() != w.nrows() || w.ncols() != b.len() {
        return Err(NeuralError::Shape(format!(
            "dense: x {:?} W {:?} b {:?}",
            x.dim(),
            w.dim(),
            b.len()
        )));
    }
    Ok(x.dot(w) + b)
}

/// Backward of [`dense_forward`]: returns (dx, dW, db).
pub fn dense_backward(x: &Mat, w: &Mat, grad_out: &Mat) -> (Mat, Mat, Vec1) {
    let dx = grad_out.dot(&w.t());
    let dw = x.t().dot(grad_out);
    let db = grad_out.sum_axis(Axis(0));
    (dx, dw, db)
}

/// Row-wise cosine similarity of two N x D matrices, with the cached norms
/// needed for the backward pass. Zero-norm rows yield similarity 0.
pub struct CosineCache {
    norm_a: Vec1,
    norm_b: Vec1,
    dots: Vec1,
}

pub fn cosine_forward(a: &Mat, b: &Mat) -> Result<(Vec1, CosineCache), NeuralError> {
    if a.dim() != b.dim() {
        return Err(NeuralError::Shape(format!("cosine: {:?} vs {:?}", a.dim(), b.dim())));
    }
    let n = a.nrows();
    let mut sims = Vec1::zeros(n);
    let mut norm_a = Vec1::zeros(n);
    let mut norm_b = Vec1::zeros(n);
    let mut dots = Vec1::zeros(n);
    for i in 0..n {
        let ra = a.row(i);
        let rb = b.row(i);
        let na = ra.dot(&ra).sqrt();
        let nb = rb.dot(&rb).sqrt();
        let d = ra.dot(&rb);
        norm_a[i] = na;
        norm_b[i] = nb;
        dots[i] = d;
        sims[i] = if na > 0.0 && nb > 0.0 { d / (na * nb) } else { 0.0 };
    }
    Ok((sims, CosineCache { norm_a, norm_b, dots }))
}

/// Backward of [`cosine_forward`] given dL/dsim per row: returns (da, db).
/// Zero-norm rows receive zero gradient.
pub fn cosine_backward(a: &Mat, b: &Mat, cache: &CosineCache, grad_sims: &Vec1) -> (Mat, Mat) {
    let mut da = Mat::zeros(a.dim());
    let mut db = Mat::zeros(b.dim());
    for i in 0..a.nrows() {
        let na = cache.norm_a[i];
        let nb = cache.norm_b[i];
        if na == 0.0 || nb == 0.0 {
            continue;
        }
        let g = grad_sims[i];
        let dot = cache.dots[i];
        let ra = a.row(i);
        let rb = b.row(i);
        // d(sim)/da = b/(|a||b|) - dot * a / (|a|^3 |b|)
        let mut dra = da.row_mut(i);
        dra.assign(&(&rb / (na * nb) - &ra * (dot / (na.powi(3) * nb))));
        dra *= g;
        let mut drb = db.row_mut(i);
        drb.assign(&(&ra / (na * nb) - &rb * (dot / (nb.powi(3) * na))));
        drb *= g;
    }
    (da, db)
}

/// Scalar convenience wrapper over [`cosine_forward`].
pub fn cosine_similarity(u: &Vec1, v: &Vec1) -> Result<f64, NeuralError> {
    let a = u.clone().insert_axis(Axis(0));
    let b = v.clone().insert_axis(Axis(0));
    let (sims, _) = cosine_forward(&a, &b)?;
    Ok(sims[0])
}

/// Clamp every gradient component to [-c, c].
pub fn clip_gradients(grads: &mut [Vec<f64>], c: f64) {
    assert!(c > 0.0, "clip value must be positive");
    for block in grads {
        for g in block.iter_mut() {
            *g = g.clamp(-c, c);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn embedding_one_hot_table_is_identity() {
        let table = Mat::eye(4);
        let ids = array![[0usize, 2, 3]];
        let out = embedding_forward(&ids, &table).unwrap();
        assert_eq!(out[[0, 0, 0]], 1.0);
        assert_eq!(out[[0, 1, 2]], 1.0);
        assert_eq!(out[[0, 2, 3]], 1.0);
        assert_eq!(out.sum(), 3.0);
    }

    #[test]
    fn embedding_rejects_out_of_range_ids() {
        let table = Mat::eye(4);
        let ids = array![[5usize]];
        assert!(matches!(
            embedding_forward(&ids, &table),
            Err(NeuralError::IdOutOfRange { id: 5, vocab: 4 })
        ));
    }

    #[test]
    fn embedding_backward_sums_repeated_ids() {
        let ids = array![[1usize, 1, 1]];
        let grad = Array3::from_elem((1, 3, 2), 0.5);
        let gt = embedding_backward(&ids, &grad, 4);
        assert_eq!(gt.row(1).to_vec(), vec![1.5, 1.5]);
        assert_eq!(gt.row(0).sum(), 0.0);
    }

    #[test]
    fn dense_identity_and_bias() {
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        let w = Mat::eye(2);
        let b = Vec1::zeros(2);
        assert_eq!(dense_forward(&x, &w, &b).unwrap(), x);

        let w0 = Mat::zeros((2, 2));
        let b = array![5.0, -1.0];
        let out = dense_forward(&x, &w0, &b).unwrap();
        assert_eq!(out, array![[5.0, -1.0], [5.0, -1.0]]);
    }

    #[test]
    fn cosine_identity_and_orthogonal() {
        let u = array![1.0, 2.0, 3.0];
        assert!((cosine_similarity(&u, &u).unwrap() - 1.0).abs() < 1e-12);
        let e1 = array![1.0, 0.0];
        let e2 = array![0.0, 1.0];
        assert_eq!(cosine_similarity(&e1, &e2).unwrap(), 0.0);
        let z = array![0.0, 0.0];
        assert_eq!(cosine_similarity(&z, &e1).unwrap(), 0.0);
    }

    #[test]
    fn clip_limits_and_preserves_sign() {
        let mut grads = vec![vec![7.0, -6.0, 1.0, -0.5]];
        clip_gradients(&mut grads, 5.0);
        assert_eq!(grads[0], vec![5.0, -5.0, 1.0, -0.5]);
    }
}
