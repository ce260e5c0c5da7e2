//! Prompt-only optimizers. Both operate on the p x d prompt matrix and
//! nothing else; the frozen model never sees an optimizer.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::TuneError;
use crate::lm::SoftPrompt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Adafactor,
}

/// Bias-corrected Adam with decoupled weight decay. Constants follow the
/// original paper: beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Array2<f64>,
    v: Array2<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(p: usize, d: usize) -> Self {
        AdamState {
            m: Array2::zeros((p, d)),
            v: Array2::zeros((p, d)),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

fn check_grad(prompt: &SoftPrompt, grad: &Array2<f64>) -> Result<(), TuneError> {
    if grad.dim() != prompt.rows().dim() {
        return Err(TuneError::ShapeMismatch {
            expected: prompt.rows().dim(),
            got: grad.dim(),
        });
    }
    if !grad.iter().all(|g| g.is_finite()) {
        return Err(TuneError::NonFiniteGradient);
    }
    Ok(())
}

/// One Adam step. Weight decay is decoupled: it rescales the prompt after
/// the adaptive update, outside the moment statistics.
pub fn adam_step(
    state: &mut AdamState,
    prompt: &mut SoftPrompt,
    grad: &Array2<f64>,
    lr: f64,
    weight_decay: f64,
) -> Result<(), TuneError> {
    check_grad(prompt, grad)?;
    if lr <= 0.0 {
        return Err(TuneError::InvalidConfig("learning rate must be positive".into()));
    }
    state.t += 1;
    let bc1 = 1.0 - state.beta1.powi(state.t as i32);
    let bc2 = 1.0 - state.beta2.powi(state.t as i32);
    let rows = prompt.rows_mut();
    for ((w, &g), (m, v)) in rows
        .iter_mut()
        .zip(grad.iter())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = state.beta1 * *m + (1.0 - state.beta1) * g;
        *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
        let mhat = *m / bc1;
        let vhat = *v / bc2;
        *w -= lr * mhat / (vhat.sqrt() + state.eps);
    }
    if weight_decay > 0.0 {
        rows.mapv_inplace(|w| w - lr * weight_decay * w);
    }
    Ok(())
}

/// Adafactor constants; the paper gives only "constant learning rate of
/// 0.1", so the remaining knobs follow Shazeer & Stern defaults and are
/// recorded in run manifests.
pub const ADAFACTOR_DECAY_EXPONENT: f64 = 0.8;
pub const ADAFACTOR_CLIP_THRESHOLD: f64 = 1.0;
pub const ADAFACTOR_EPS1: f64 = 1e-30;

/// Adafactor with factored second moments: a length-p row accumulator and a
/// length-d column accumulator in place of the full p x d matrix. No
/// momentum; relative step sizes disabled.
#[derive(Debug, Clone)]
pub struct AdafactorState {
    row: Array1<f64>,
    col: Array1<f64>,
    t: u64,
}

impl AdafactorState {
    pub fn new(p: usize, d: usize) -> Self {
        AdafactorState {
            row: Array1::zeros(p),
            col: Array1::zeros(d),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adafactor step: decayed row/column means of grad^2, rank-1
/// reconstruction `V_ij = row_i * col_j / mean(row)`, update
/// `grad / sqrt(V)` with RMS clipping at [`ADAFACTOR_CLIP_THRESHOLD`].
pub fn adafactor_step(
    state: &mut AdafactorState,
    prompt: &mut SoftPrompt,
    grad: &Array2<f64>,
    lr: f64,
) -> Result<(), TuneError> {
    check_grad(prompt, grad)?;
    if lr <= 0.0 {
        return Err(TuneError::InvalidConfig("learning rate must be positive".into()));
    }
    state.t += 1;
    // beta-hat_t = 1 - t^-0.8: zero at t = 1, so the first step uses the
    // current gradient statistics exactly.
    let beta = 1.0 - (state.t as f64).powf(-ADAFACTOR_DECAY_EXPONENT);
    let g2 = grad.mapv(|g| g * g + ADAFACTOR_EPS1);
    let row_mean = g2.mean_axis(Axis(1)).expect("nonempty");
    let col_mean = g2.mean_axis(Axis(0)).expect("nonempty");
    for (r, &rm) in state.row.iter_mut().zip(row_mean.iter()) {
        *r = beta * *r + (1.0 - beta) * rm;
    }
    for (c, &cm) in state.col.iter_mut().zip(col_mean.iter()) {
        *c = beta * *c + (1.0 - beta) * cm;
    }
    let row_total = state.row.mean().expect("nonempty");
    let (p, d) = grad.dim();
    let mut update = Array2::zeros((p, d));
    for i in 0..p {
        for j in 0..d {
            let v = state.row[i] * state.col[j] / row_total;
            update[[i, j]] = grad[[i, j]] / v.sqrt();
        }
    }
    let rms = (update.iter().map(|u| u * u).sum::<f64>() / (p * d) as f64).sqrt();
    let clip = (rms / ADAFACTOR_CLIP_THRESHOLD).max(1.0);
    let rows = prompt.rows_mut();
    for (w, u) in rows.iter_mut().zip(update.iter()) {
        *w -= lr * u / clip;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prompt_from(vals: &[f64], p: usize, d: usize) -> SoftPrompt {
        SoftPrompt::new(Array2::from_shape_vec((p, d), vals.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn adam_zero_gradient_is_a_fixed_point() {
        let mut prompt = prompt_from(&[1.0, -2.0, 3.0, 0.5], 2, 2);
        let before = prompt.rows().clone();
        let mut state = AdamState::new(2, 2);
        adam_step(&mut state, &mut prompt, &Array2::zeros((2, 2)), 0.1, 0.0).unwrap();
        assert_eq!(prompt.rows(), &before);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn adam_one_by_one_hand_oracle() {
        // P=1.0, grad=0.5, lr=0.1, fresh state, wd=0.
        let mut prompt = prompt_from(&[1.0], 1, 1);
        let mut state = AdamState::new(1, 1);
        let grad = Array2::from_elem((1, 1), 0.5);
        adam_step(&mut state, &mut prompt, &grad, 0.1, 0.0).unwrap();
        // hand: m = 0.1*0.5 = 0.05; v = 0.001*0.25 = 2.5e-4;
        // mhat = 0.05/0.1 = 0.5; vhat = 2.5e-4/0.001 = 0.25;
        // P = 1 - 0.1*0.5/(0.5 + 1e-8)
        let expected = 1.0 - 0.1 * 0.5 / (0.25f64.sqrt() + 1e-8);
        assert!((prompt.rows()[[0, 0]] - expected).abs() < 1e-10);
    }

    #[test]
    fn adam_two_by_two_matches_scalar_hand_recurrence() {
        let p0 = [0.4, -0.3, 1.2, 0.0];
        let g1 = [0.5, -1.0, 0.25, 2.0];
        let g2 = [-0.5, 0.75, 0.0, 1.0];
        let (lr, wd) = (0.05, 0.01);
        let mut prompt = prompt_from(&p0, 2, 2);
        let mut state = AdamState::new(2, 2);
        adam_step(&mut state, &mut prompt, &Array2::from_shape_vec((2, 2), g1.to_vec()).unwrap(), lr, wd).unwrap();
        adam_step(&mut state, &mut prompt, &Array2::from_shape_vec((2, 2), g2.to_vec()).unwrap(), lr, wd).unwrap();
        // independent scalar recurrence, one entry at a time
        for i in 0..4 {
            let (b1, b2, eps) = (0.9, 0.999, 1e-8);
            let mut w = p0[i];
            let (mut m, mut v) = (0.0, 0.0);
            for (t, g) in [(1, g1[i]), (2, g2[i])] {
                m = b1 * m + (1.0 - b1) * g;
                v = b2 * v + (1.0 - b2) * g * g;
                let mhat = m / (1.0 - b1f64.powi(t));
                let vhat = v / (1.0 - b2f64.powi(t));
                w -= lr * mhat / (vhat.sqrt() + eps);
                w -= lr * wd * w;
            }
            assert!(
                (prompt.rows().iter().nth(i).unwrap() - w).abs() < 1e-10,
                "entry {i}"
            );
        }
    }

    #[allow(non_upper_case_globals)]
    const b1f64: f64 = 0.9;
    #[allow(non_upper_case_globals)]
    const b2f64: f64 = 0.999;

    #[test]
    fn adam_decoupled_decay_closed_form_under_zero_gradient() {
        let mut prompt = prompt_from(&[2.0, -4.0], 1, 2);
        let mut state = AdamState::new(1, 2);
        let (lr, wd) = (0.1, 1e-5);
        adam_step(&mut state, &mut prompt, &Array2::zeros((1, 2)), lr, wd).unwrap();
        adam_step(&mut state, &mut prompt, &Array2::zeros((1, 2)), lr, wd).unwrap();
        let scale = (1.0 - lr * wd) * (1.0 - lr * wd);
        assert_eq!(prompt.rows()[[0, 0]], 2.0 * scale);
        assert_eq!(prompt.rows()[[0, 1]], -4.0 * scale);
    }

    #[test]
    fn adafactor_zero_gradient_is_a_fixed_point() {
        let mut prompt = prompt_from(&[1.0, 2.0, 3.0, 4.0], 2, 2);
        let before = prompt.rows().clone();
        let mut state = AdafactorState::new(2, 2);
        adafactor_step(&mut state, &mut prompt, &Array2::zeros((2, 2)), 0.1).unwrap();
        assert_eq!(prompt.rows(), &before);
    }

    #[test]
    fn adafactor_rank_one_gradient_matches_unfactored_step() {
        // grad = u v^T makes grad^2 rank one, so the factored reconstruction
        // row_i * col_j / mean(row) recovers grad^2 exactly.
        let u = [1.5, -0.4, 0.9];
        let vv = [0.2, -1.1];
        let mut grad = Array2::zeros((3, 2));
        for i in 0..3 {
            for j in 0..2 {
                grad[[i, j]] = u[i] * vv[j];
            }
        }
        let p0 = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let mut prompt = prompt_from(&p0, 3, 2);
        let mut state = AdafactorState::new(3, 2);
        let lr = 0.1;
        adafactor_step(&mut state, &mut prompt, &grad, lr).unwrap();

        // unfactored oracle: V = grad^2 + eps1 elementwise (beta-hat = 0 at t=1)
        let v_full = grad.mapv(|g| g * g + ADAFACTOR_EPS1);
        let mut update = Array2::zeros((3, 2));
        for i in 0..3 {
            for j in 0..2 {
                update[[i, j]] = grad[[i, j]] / v_full[[i, j]].sqrt();
            }
        }
        let rms = (update.iter().map(|x| x * x).sum::<f64>() / 6.0).sqrt();
        let clip = (rms / ADAFACTOR_CLIP_THRESHOLD).max(1.0);
        for (idx, &p) in p0.iter().enumerate() {
            let expected = p - lr * update.iter().nth(idx).unwrap() / clip;
            let got = *prompt.rows().iter().nth(idx).unwrap();
            assert!((got - expected).abs() < 1e-12, "entry {idx}: {got} vs {expected}");
        }
    }

    #[test]
    fn adafactor_two_by_two_hand_oracle() {
        let g = [0.5, -0.25, 1.0, 0.125];
        let p0 = [1.0, 2.0, 3.0, 4.0];
        let lr = 0.1;
        let mut prompt = prompt_from(&p0, 2, 2);
        let mut state = AdafactorState::new(2, 2);
        adafactor_step(&mut state, &mut prompt, &Array2::from_shape_vec((2, 2), g.to_vec()).unwrap(), lr).unwrap();

        // scalar hand evaluation of the published recurrences at t = 1
        let g2: Vec<f64> = g.iter().map(|x| x * x + ADAFACTOR_EPS1).collect();
        let r = [(g2[0] + g2[1]) / 2.0, (g2[2] + g2[3]) / 2.0];
        let c = [(g2[0] + g2[2]) / 2.0, (g2[1] + g2[3]) / 2.0];
        let r_mean = (r[0] + r[1]) / 2.0;
        let mut upd = [0.0; 4];
        for i in 0..2 {
            for j in 0..2 {
                let v = r[i] * c[j] / r_mean;
                upd[i * 2 + j] = g[i * 2 + j] / v.sqrt();
            }
        }
        let rms = (upd.iter().map(|x| x * x).sum::<f64>() / 4.0).sqrt();
        let clip = if rms > 1.0 { rms } else { 1.0 };
        for i in 0..4 {
            let expected = p0[i] - lr * upd[i] / clip;
            let got = *prompt.rows().iter().nth(i).unwrap();
            assert!((got - expected).abs() < 1e-10, "entry {i}");
        }
    }

    #[test]
    fn non_finite_gradients_are_rejected() {
        let mut prompt = prompt_from(&[1.0], 1, 1);
        let mut adam = AdamState::new(1, 1);
        let bad = Array2::from_elem((1, 1), f64::NAN);
        assert!(matches!(
            adam_step(&mut adam, &mut prompt, &bad, 0.1, 0.0),
            Err(TuneError::NonFiniteGradient)
        ));
        let mut af = AdafactorState::new(1, 1);
        assert!(matches!(
            adafactor_step(&mut af, &mut prompt, &bad, 0.1),
            Err(TuneError::NonFiniteGradient)
        ));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut prompt = prompt_from(&[1.0, 2.0], 1, 2);
        let mut adam = AdamState::new(1, 2);
        assert!(matches!(
            adam_step(&mut adam, &mut prompt, &Array2::zeros((2, 2)), 0.1, 0.0),
            Err(TuneError::ShapeMismatch { .. })
        ));
    }
}
