//! LSTM forward and backward (backpropagation through time), with PAD
//! masking: masked timesteps copy the state through unchanged and
//! contribute no gradient.

use ndarray::{s, Array3, Axis};
use rand::Rng;

use super::{Mat, NeuralError, Ten3, Vec1};

/// Parameters for one LSTM direction. Gates are packed in the order
/// input, forget, cell candidate, output along the 4H axis of `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub input: usize,
    pub hidden: usize,
    /// (input + hidden) x 4*hidden
    pub w: Mat,
    /// 4*hidden
    pub b: Vec1,
}

impl LstmParams {
    /// Uniform(-k, k) init with k = 1/sqrt(fan-in); biases zero except the
    /// forget gate bias, set to 1.
    pub fn init(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let fan_in = input + hidden;
        let k = 1.0 / (fan_in as f64).sqrt();
        let w = Mat::from_shape_fn((fan_in, 4 * hidden), |_| rng.random_range(-k..k));
        let mut b = Vec1::zeros(4 * hidden);
        b.slice_mut(s![hidden..2 * hidden]).fill(1.0);
        LstmParams { input, hidden, w, b }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            input,
            hidden,
            w: Mat::zeros((input + hidden, 4 * hidden)),
            b: Vec1::zeros(4 * hidden),
        }
    }
}

/// Gradients for one LSTM direction plus the gradient w.r.t. its input.
pub struct LstmGrads {
    pub dw: Mat,
    pub db: Vec1,
    pub dx: Ten3,
}

struct StepCache {
    /// original time index of this processing step
    t: usize,
    /// concat(x_t, h_prev), B x (E+H)
    z: Mat,
    /// post-activation gates, B x 4H
    gates: Mat,
    /// tanh of the unmasked new cell state, B x H
    tanh_craw: Mat,
    /// masked cell state entering this step, B x H
    c_prev: Mat,
}

/// Forward-pass outputs plus everything the backward pass needs.
pub struct LstmRun {
    /// hidden state at each original time index, B x T x H
    pub hs: Ten3,
    /// state after the last processed step, B x H
    pub final_h: Mat,
    pub final_c: Mat,
    steps: Vec<StepCache>,
}

/// Standard LSTM recurrence (sigmoid gates, tanh candidate and output
/// squashing, no peepholes). `mask` is B x T with 1.0 on real positions;
/// `reverse` processes the sequence right to left.
pub fn lstm_forward(
    x: &Ten3,
    mask: &Mat,
    params: &LstmParams,
    reverse: bool,
) -> Result<LstmRun, NeuralError> {
    let (bsz, _, _) = x.dim();
    let h = params.hidden;
    lstm_forward_from(x, mask, params, reverse, Mat::zeros((bsz, h)), Mat::zeros((bsz, h)))
}

/// [`lstm_forward`] starting from a caller-supplied initial state (the
/// decoder bridge in an encoder-decoder model).
pub fn lstm_forward_from(
    x: &Ten3,
    mask: &Mat,
    params: &LstmParams,
    reverse: bool,
    h0: Mat,
    c0: Mat,
) -> Result<LstmRun, NeuralError> {
    let (bsz, t_len, e) = x.dim();
    let h = params.hidden;
    if e != params.input || mask.dim() != (bsz, t_len) || h0.dim() != (bsz, h) || c0.dim() != (bsz, h) {
        return Err(NeuralError::Shape(format!(
            "lstm: x {:?} mask {:?} h0 {:?} c0 {:?} params ({}, {})",
            x.dim(),
            mask.dim(),
            h0.dim(),
            c0.dim(),
            params.input,
            params.hidden
        )));
    }
    let order: Vec<usize> = if reverse {
        (0..t_len).rev().collect()
    } else {
        (0..t_len).collect()
    };
    let mut hs = Array3::zeros((bsz, t_len, h));
    let mut h_prev = h0;
    let mut c_prev = c0;
    let mut steps = Vec::with_capacity(t_len);
    for &t in &order {
        let mut z = Mat::zeros((bsz, e + h));
        z.slice_mut(s![.., ..e]).assign(&x.slice(s![.., t, ..]));
        z.slice_mut(s![.., e..]).assign(&h_prev);
        let mut gates = z.dot(&params.w) + &params.b;
        // in-place activations: sigmoid on i/f/o, tanh on g
        gates
            .slice_mut(s![.., ..2 * h])
            .mapv_inplace(super::sigmoid);
        gates
            .slice_mut(s![.., 2 * h..3 * h])
            .mapv_inplace(f64::tanh);
        gates
            .slice_mut(s![.., 3 * h..])
            .mapv_inplace(super::sigmoid);
        let i = gates.slice(s![.., ..h]);
        let f = gates.slice(s![.., h..2 * h]);
        let g = gates.slice(s![.., 2 * h..3 * h]);
        let o = gates.slice(s![.., 3 * h..]);
        let c_raw = &f * &c_prev + &i * &g;
        let tanh_craw = c_raw.mapv(f64::tanh);
        let h_raw = &o * &tanh_craw;
        let m = mask.slice(s![.., t..t + 1]);
        let c_new = &m * &c_raw + &(1.0 - &m) * &c_prev;
        let h_new = &m * &h_raw + &(1.0 - &m) * &h_prev;
        hs.slice_mut(s![.., t, ..]).assign(&h_new);
        steps.push(StepCache { t, z, gates, tanh_craw, c_prev });
        h_prev = h_new;
        c_prev = c_new;
    }
    Ok(LstmRun { hs, final_h: h_prev, final_c: c_prev, steps })
}

/// BPTT for [`lstm_forward`]. `grad_hs` is dL/d(hs); `grad_final_h` and
/// `grad_final_c` are additional gradients on the final states.
pub fn lstm_backward(
    x: &Ten3,
    mask: &Mat,
    params: &LstmParams,
    run: &LstmRun,
    grad_hs: &Ten3,
    grad_final_h: &Mat,
    grad_final_c: &Mat,
) -> LstmGrads {
    lstm_backward_from(x, mask, params, run, grad_hs, grad_final_h, grad_final_c).0
}

/// [`lstm_backward`] that also returns the gradients w.r.t. the initial
/// hidden and cell state, for runs started via [`lstm_forward_from`].
pub fn lstm_backward_from(
    x: &Ten3,
    mask: &Mat,
    params: &LstmParams,
    run: &LstmRun,
    grad_hs: &Ten3,
    grad_final_h: &Mat,
    grad_final_c: &Mat,
) -> (LstmGrads, Mat, Mat) {
    let (bsz, t_len, e) = x.dim();
    let h = params.hidden;
    let mut dw = Mat::zeros(params.w.dim());
    let mut db = Vec1::zeros(params.b.len());
    let mut dx = Array3::zeros((bsz, t_len, e));
    let mut dh = grad_final_h.clone();
    let mut dc = grad_final_c.clone();
    for step in run.steps.iter().rev() {
        let t = step.t;
        dh += &grad_hs.slice(s![.., t, ..]);
        let m = mask.slice(s![.., t..t + 1]);
        let not_m = 1.0 - &m;
        let i = step.gates.slice(s![.., ..h]);
        let f = step.gates.slice(s![.., h..2 * h]);
        let g = step.gates.slice(s![.., 2 * h..3 * h]);
        let o = step.gates.slice(s![.., 3 * h..]);
        let dh_raw = &dh * &m;
        let dc_raw = &dc * &m + &dh_raw * &o * (1.0 - &step.tanh_craw * &step.tanh_craw);
        let mut da = Mat::zeros((bsz, 4 * h));
        da.slice_mut(s![.., ..h])
            .assign(&(&dc_raw * &g * &i * (1.0 - &i)));
        da.slice_mut(s![.., h..2 * h])
            .assign(&(&dc_raw * &step.c_prev * &f * (1.0 - &f)));
        da.slice_mut(s![.., 2 * h..3 * h])
            .assign(&(&dc_raw * &i * (1.0 - &g * &g)));
        da.slice_mut(s![.., 3 * h..])
            .assign(&(&dh_raw * &step.tanh_craw * &o * (1.0 - &o)));
        let dz = da.dot(&params.w.t());
        dw += &step.z.t().dot(&da);
        db += &da.sum_axis(Axis(0));
        let mut dxt = dx.slice_mut(s![.., t, ..]);
        dxt += &dz.slice(s![.., ..e]);
        dh = &dz.slice(s![.., e..]) + &(&dh * &not_m);
        dc = &dc_raw * &f + &dc * &not_m;
    }
    (LstmGrads { dw, db, dx }, dh, dc)
}

/// Bidirectional LSTM: forward and reverse passes concatenated along the
/// feature axis.
pub struct BiLstmRun {
    pub fwd: LstmRun,
    pub bwd: LstmRun,
    /// B x T x 2H
    pub hs: Ten3,
    /// concatenated final hidden states, B x 2H
    pub final_h: Mat,
    pub final_c: Mat,
}

pub fn bilstm_forward(
    x: &Ten3,
    mask: &Mat,
    fwd_params: &LstmParams,
    bwd_params: &LstmParams,
) -> Result<BiLstmRun, NeuralError> {
    let fwd = lstm_forward(x, mask, fwd_params, false)?;
    let bwd = lstm_forward(x, mask, bwd_params, true)?;
    let hs = ndarray::concatenate(Axis(2), &[fwd.hs.view(), bwd.hs.view()])
        .expect("bilstm halves have identical B, T");
    let final_h = ndarray::concatenate(Axis(1), &[fwd.final_h.view(), bwd.final_h.view()])
        .expect("bilstm final h");
    let final_c = ndarray::concatenate(Axis(1), &[fwd.final_c.view(), bwd.final_c.view()])
        .expect("bilstm final c");
    Ok(BiLstmRun { fwd, bwd, hs, final_h, final_c })
}

pub struct BiLstmGrads {
    pub fwd: LstmGrads,
    pub bwd: LstmGrads,
    pub dx: Ten3,
}

pub fn bilstm_backward(
    x: &Ten3,
    mask: &Mat,
    fwd_params: &LstmParams,
    bwd_params: &LstmParams,
    run: &BiLstmRun,
    grad_hs: &Ten3,
    grad_final_h: &Mat,
    grad_final_c: &Mat,
) -> BiLstmGrads {
    let h = fwd_params.hidden;
    let g_hs_f = grad_hs.slice(s![.., .., ..h]).to_owned();
    let g_hs_b = grad_hs.slice(s![.., .., h..]).to_owned();
    let g_fh_f = grad_final_h.slice(s![.., ..h]).to_owned();
    let g_fh_b = grad_final_h.slice(s![.., h..]).to_owned();
    let g_fc_f = grad_final_c.slice(s![.., ..h]).to_owned();
    let g_fc_b = grad_final_c.slice(s![.., h..]).to_owned();
    let fwd = lstm_backward(x, mask, fwd_params, &run.fwd, &g_hs_f, &g_fh_f, &g_fc_f);
    let bwd = lstm_backward(x, mask, bwd_params, &run.bwd, &g_hs_b, &g_fh_b, &g_fc_b);
    let dx = &fwd.dx + &bwd.dx;
    BiLstmGrads { fwd, bwd, dx }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use ndarray::array;

    fn full_mask(b: usize, t: usize) -> Mat {
        Mat::from_elem((b, t), 1.0)
    }

    #[test]
    fn zero_weights_give_zero_hidden_states() {
        let params = LstmParams::zeros(3, 4);
        let x = Array3::from_elem((2, 5, 3), 0.7);
        let run = lstm_forward(&x, &full_mask(2, 5), &params, false).unwrap();
        assert_eq!(run.hs.sum(), 0.0);
        assert_eq!(run.final_h.sum(), 0.0);
    }

    #[test]
    fn single_step_matches_cell_equations() {
        // H=2, E=1, hand-evaluated gate equations on one step
        let mut params = LstmParams::zeros(1, 2);
        params.w[[0, 0]] = 0.5; // x -> gate i, unit 0
        params.w[[0, 2]] = -0.3; // x -> gate f, unit 0
        params.w[[0, 4]] = 0.8; // x -> gate g, unit 0
        params.w[[0, 6]] = 0.2; // x -> gate o, unit 0
        params.b[1] = 0.1; // i bias, unit 1
        let x = Array3::from_elem((1, 1, 1), 1.0);
        let run = lstm_forward(&x, &full_mask(1, 1), &params, false).unwrap();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        // unit 0: i=sig(0.5), g=tanh(0.8), c=i*g, h=sig(0.2)*tanh(c)
        let c0 = sig(0.5) * 0.8f64.tanh();
        let h0 = sig(0.2) * c0.tanh();
        // unit 1: i=sig(0.1), g=tanh(0)=0 -> c=0, h=sig(0)*0=0
        assert!((run.final_c[[0, 0]] - c0).abs() < 1e-12);
        assert!((run.final_h[[0, 0]] - h0).abs() < 1e-12);
        assert_eq!(run.final_h[[0, 1]], 0.0);
    }

    #[test]
    fn reverse_processes_right_to_left() {
        let mut rng = seed::rng(11);
        let params = LstmParams::init(2, 3, &mut rng);
        let x = Ten3::from_shape_fn((1, 4, 2), |_| rng.random_range(-1.0..1.0));
        let fwd = lstm_forward(&x, &full_mask(1, 4), &params, false).unwrap();
        // reversing the input should match the reverse pass, time-mirrored
        let x_rev = {
            let mut xr = x.clone();
            for t in 0..4 {
                xr.slice_mut(s![.., t, ..]).assign(&x.slice(s![.., 3 - t, ..]));
            }
            xr
        };
        let bwd = lstm_forward(&x_rev, &full_mask(1, 4), &params, true).unwrap();
        for t in 0..4 {
            let a = fwd.hs.slice(s![0, t, ..]);
            let b = bwd.hs.slice(s![0, 3 - t, ..]);
            for (ai, bi) in a.iter().zip(b.iter()) {
                assert!((ai - bi).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bilstm_concatenates_and_palindrome_halves_mirror() {
        let mut rng = seed::rng(7);
        let params = LstmParams::init(2, 3, &mut rng);
        // palindromic input over T=3
        let step = array![[0.3, -0.2]];
        let mut x = Ten3::zeros((1, 3, 2));
        x.slice_mut(s![.., 0, ..]).assign(&step);
        x.slice_mut(s![.., 1, ..]).assign(&array![[0.9, 0.1]]);
        x.slice_mut(s![.., 2, ..]).assign(&step);
        let run = bilstm_forward(&x, &full_mask(1, 3), &params, &params).unwrap();
        assert_eq!(run.hs.dim(), (1, 3, 6));
        assert_eq!(run.final_h.dim(), (1, 6));
        for t in 0..3 {
            for j in 0..3 {
                let fwd_t = run.hs[[0, t, j]];
                let bwd_mirror = run.hs[[0, 2 - t, 3 + j]];
                assert!((fwd_t - bwd_mirror).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn masked_timesteps_copy_state_through() {
        let mut rng = seed::rng(3);
        let params = LstmParams::init(2, 3, &mut rng);
        let x = Ten3::from_shape_fn((1, 4, 2), |_| rng.random_range(-1.0..1.0));
        let mut mask = full_mask(1, 4);
        mask[[0, 2]] = 0.0;
        mask[[0, 3]] = 0.0;
        let run = lstm_forward(&x, &mask, &params, false).unwrap();
        // state frozen after t=1
        for j in 0..3 {
            assert_eq!(run.hs[[0, 1, j]], run.hs[[0, 2, j]]);
            assert_eq!(run.hs[[0, 2, j]], run.hs[[0, 3, j]]);
            assert_eq!(run.final_h[[0, j]], run.hs[[0, 1, j]]);
        }
    }
}
