//! Finite-difference gradient verification: compares analytic gradients to
//! central differences block by block.

use thiserror::Error;

use super::ParamBlocks;

pub const DEFAULT_PERTURBATION: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum GradCheckError {
    #[error("loss is not finite: {0}")]
    NonFiniteLoss(f64),
}

#[derive(Debug)]
pub struct BlockReport {
    pub name: String,
    pub max_rel_error: f64,
    /// flat index of the worst component
    pub argmax: usize,
}

#[derive(Debug)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockReport>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max)
    }

    /// Blocks whose worst component exceeds the tolerance.
    pub fn flagged(&self) -> Vec<&BlockReport> {
        self.blocks.iter().filter(|b| b.max_rel_error > self.tolerance).collect()
    }

    pub fn passed(&self) -> bool {
        self.flagged().is_empty()
    }
}

/// Verify `analytic` (one flat gradient vector per parameter block, in block
/// order) against central finite differences of `loss`. The loss closure
/// must be deterministic.
pub fn grad_check<M, F>(
    model: &mut M,
    analytic: &[Vec<f64>],
    mut loss: F,
    tolerance: f64,
    perturbation: f64,
) -> Result<GradCheckReport, GradCheckError>
where
    M: ParamBlocks,
    F: FnMut(&M) -> f64,
{
    let base = loss(model);
    if !base.is_finite() {
        return Err(GradCheckError::NonFiniteLoss(base));
    }
    let names = model.block_names();
    let n_blocks = names.len();
    assert_eq!(analytic.len(), n_blocks, "analytic gradient block count mismatch");
    let mut blocks = Vec::with_capacity(n_blocks);
    for bi in 0..n_blocks {
        let len = model.blocks()[bi].len();
        assert_eq!(analytic[bi].len(), len, "block {bi} size mismatch");
        let mut worst = 0.0f64;
        let mut argmax = 0;
        for i in 0..len {
            let saved = model.blocks()[bi][i];
            model.blocks_mut()[bi][i] = saved + perturbation;
            let lp = loss(model);
            model.blocks_mut()[bi][i] = saved - perturbation;
            let lm = loss(model);
            model.blocks_mut()[bi][i] = saved;
            if !lp.is_finite() || !lm.is_finite() {
                return Err(GradCheckError::NonFiniteLoss(if lp.is_finite() { lm } else { lp }));
            }
            let numeric = (lp - lm) / (2.0 * perturbation);
            let ana = analytic[bi][i];
            let scale = numeric.abs().max(ana.abs());
            let rel = if scale < 1e-10 { 0.0 } else { (numeric - ana).abs() / scale };
            if rel > worst {
                worst = rel;
                argmax = i;
            }
        }
        blocks.push(BlockReport { name: names[bi].to_string(), max_rel_error: worst, argmax });
    }
    Ok(GradCheckReport { blocks, tolerance })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// loss(w) = sum(w . x)^2 with fixed x; gradient is exact for the check.
    struct Linear {
        w: Vec<f64>,
        x: Vec<f64>,
    }

    impl ParamBlocks for Linear {
        fn block_names(&self) -> Vec<&'static str> {
            vec!["w"]
        }
        fn blocks(&self) -> Vec<&[f64]> {
            vec![&self.w]
        }
        fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.w]
        }
    }

    fn linear_loss(m: &Linear) -> f64 {
        let s: f64 = m.w.iter().zip(&m.x).map(|(w, x)| w * x).sum();
        s * s
    }

    #[test]
    fn linear_model_checks_to_machine_precision() {
        let mut m = Linear { w: vec![0.3, -0.8, 1.2], x: vec![1.0, 2.0, -0.5] };
        let s: f64 = m.w.iter().zip(&m.x).map(|(w, x)| w * x).sum();
        let analytic = vec![m.x.iter().map(|x| 2.0 * s * x).collect::<Vec<_>>()];
        let report = grad_check(&mut m, &analytic, linear_loss, 1e-9, 1e-4).unwrap();
        assert!(report.passed(), "max rel err {}", report.max_rel_error());
        assert!(report.max_rel_error() < 1e-9);
    }

    #[test]
    fn corrupted_gradient_is_flagged() {
        let mut m = Linear { w: vec![0.3, -0.8, 1.2], x: vec![1.0, 2.0, -0.5] };
        let s: f64 = m.w.iter().zip(&m.x).map(|(w, x)| w * x).sum();
        let mut bad: Vec<f64> = m.x.iter().map(|x| 2.0 * s * x).collect();
        bad[1] += 0.5; // deliberate corruption
        let report = grad_check(&mut m, &[bad].to_vec(), linear_loss, 1e-6, 1e-4).unwrap();
        assert!(!report.passed());
        assert_eq!(report.flagged()[0].argmax, 1);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let mut m = Linear { w: vec![f64::NAN], x: vec![1.0] };
        let r = grad_check(&mut m, &[vec![0.0]].to_vec(), linear_loss, 1e-6, 1e-4);
        assert!(matches!(r, Err(GradCheckError::NonFiniteLoss(_))));
    }
}
