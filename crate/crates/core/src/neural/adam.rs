//! Adam optimizer over named parameter blocks.

use serde::{Deserialize, Serialize};

use super::ParamBlocks;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second-moment accumulators, one pair per parameter block.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn for_model(model: &impl ParamBlocks) -> Self {
        let sizes: Vec<usize> = model.blocks().iter().map(|b| b.len()).collect();
        AdamState {
            t: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

/// One Adam step with bias correction. `grads` must align with the model's
/// block order.
pub fn adam_step(
    model: &mut impl ParamBlocks,
    grads: &[Vec<f64>],
    state: &mut AdamState,
    cfg: &AdamConfig,
) {
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let mut blocks = model.blocks_mut();
    assert_eq!(blocks.len(), grads.len(), "gradient block count mismatch");
    for (bi, block) in blocks.iter_mut().enumerate() {
        let g = &grads[bi];
        assert_eq!(block.len(), g.len(), "gradient block {bi} size mismatch");
        let m = &mut state.m[bi];
        let v = &mut state.v[bi];
        for i in 0..block.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            block[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Toy {
        p: Vec<f64>,
    }

    impl ParamBlocks for Toy {
        fn block_names(&self) -> Vec<&'static str> {
            vec!["p"]
        }
        fn blocks(&self) -> Vec<&[f64]> {
            vec![&self.p]
        }
        fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.p]
        }
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut toy = Toy { p: vec![1.0, -2.0] };
        let mut state = AdamState::for_model(&toy);
        adam_step(&mut toy, &[vec![0.0, 0.0]], &mut state, &AdamConfig::default());
        assert_eq!(toy.p, vec![1.0, -2.0]);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn first_step_approximates_lr_times_sign() {
        let cfg = AdamConfig::default();
        let mut toy = Toy { p: vec![0.0, 0.0] };
        let mut state = AdamState::for_model(&toy);
        adam_step(&mut toy, &[vec![3.0, -0.7]], &mut state, &cfg);
        // closed form for step 1: delta = -lr * g / (|g| + eps*sqrt(bc2)/...) ~ -lr*sign(g)
        assert!((toy.p[0] + cfg.lr).abs() < 1e-6, "{}", toy.p[0]);
        assert!((toy.p[1] - cfg.lr).abs() < 1e-6, "{}", toy.p[1]);
    }

    #[test]
    fn two_steps_match_hand_rolled_recurrence() {
        let cfg = AdamConfig::default();
        let g = 2.0;
        let mut toy = Toy { p: vec![1.0] };
        let mut state = AdamState::for_model(&toy);
        adam_step(&mut toy, &[vec![g]], &mut state, &cfg);
        adam_step(&mut toy, &[vec![g]], &mut state, &cfg);

        // hand-rolled: m_t = (1-b1^t) g for constant g, v_t = (1-b2^t) g^2
        let mut p = 1.0;
        let mut m = 0.0;
        let mut v = 0.0;
        for t in 1..=2 {
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            let m_hat = m / (1.0 - cfg.beta1.powi(t));
            let v_hat = v / (1.0 - cfg.beta2.powi(t));
            p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        assert!((toy.p[0] - p).abs() < 1e-15);
    }
}
