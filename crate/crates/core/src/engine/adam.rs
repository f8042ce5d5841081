use serde::{Deserialize, Serialize};

use crate::engine::Matrix;
use crate::error::{Error, Result};

/// A trainable value with its gradient accumulator.
///
/// `grad` stays `None` until a backward pass writes it; an optimizer step
/// consumes it.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub value: Matrix,
    pub grad: Option<Matrix>,
    pub requires_grad: bool,
}

impl Tensor {
    pub fn new(value: Matrix, requires_grad: bool) -> Self {
        Self {
            value,
            grad: None,
            requires_grad,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamHyper {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdamState {
    pub hyper: AdamHyper,
    step: u64,
    moments: Vec<(Matrix, Matrix)>,
}

impl AdamState {
    pub fn new(hyper: AdamHyper) -> Self {
        Self {
            hyper,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update over `params`.
///
/// Entries of `l1_targets` are `(param index, λ)` pairs marking mask
/// tensors: their gradient gains `λ·sign(value)` (with `sign(0) = 0`) before
/// the moment update, they receive no weight decay, and their values are
/// clamped to `[0, 1]` afterwards. Every other parameter gets decoupled
/// weight decay.
pub fn adam_step(params: &mut [&mut Tensor], state: &mut AdamState, l1_targets: &[(usize, f64)]) -> Result<()> {
    if params.iter().any(|p| p.requires_grad && p.grad.is_none()) {
        return Err(Error::NotBackwarded);
    }
    if state.moments.is_empty() {
        state.moments = params
            .iter()
            .map(|p| {
                (
                    Matrix::zeros(p.value.rows(), p.value.cols()),
                    Matrix::zeros(p.value.rows(), p.value.cols()),
                )
            })
            .collect();
    }
    if state.moments.len() != params.len() {
        return Err(Error::ShapeMismatch {
            op: "adam_step",
            lhs: (state.moments.len(), 1),
            rhs: (params.len(), 1),
        });
    }
    state.step += 1;
    let h = state.hyper;
    let t = state.step as i32;
    let bias1 = 1.0 - h.beta1.powi(t);
    let bias2 = 1.0 - h.beta2.powi(t);

    for (pi, param) in params.iter_mut().enumerate() {
        if !param.requires_grad {
            continue;
        }
        let (m, v) = &mut state.moments[pi];
        let grad = param.grad.take().expect("checked above");
        m.check_same_shape(&param.value, "adam_step")?;
        grad.check_same_shape(&param.value, "adam_step")?;
        let lambda = l1_targets.iter().find(|(i, _)| *i == pi).map(|&(_, l)| l);
        let values = param.value.as_mut_slice();
        for (k, w) in values.iter_mut().enumerate() {
            let mut g = grad.as_slice()[k];
            if let Some(lambda) = lambda {
                g += lambda * sign(*w);
            }
            let mk = &mut m.as_mut_slice()[k];
            *mk = h.beta1 * *mk + (1.0 - h.beta1) * g;
            let vk = &mut v.as_mut_slice()[k];
            *vk = h.beta2 * *vk + (1.0 - h.beta2) * g * g;
            let m_hat = *mk / bias1;
            let v_hat = *vk / bias2;
            if lambda.is_none() && h.weight_decay != 0.0 {
                *w -= h.lr * h.weight_decay * *w;
            }
            *w -= h.lr * m_hat / (v_hat.sqrt() + h.eps);
            if lambda.is_some() {
                *w = w.clamp(0.0, 1.0);
            }
        }
        if !param.value.all_finite() {
            return Err(Error::NonFinite("adam_step"));
        }
    }
    Ok(())
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor {
        Tensor::new(Matrix::filled(1, 1, v), true)
    }

    #[test]
    fn first_step_is_lr_over_one_plus_eps() {
        let mut w = scalar(0.5);
        w.grad = Some(Matrix::filled(1, 1, 1.0));
        let mut st = AdamState::new(AdamHyper::new(0.1, 0.0));
        adam_step(&mut [&mut w], &mut st, &[]).unwrap();
        let delta = w.value.get(0, 0) - 0.5;
        assert!((delta + 0.1 / (1.0 + 1e-8)).abs() < 1e-15, "{delta}");
        assert!((delta + 0.0999999).abs() < 1e-6);
    }

    #[test]
    fn zero_mask_with_zero_gradient_stays_put() {
        let mut m = scalar(0.0);
        m.grad = Some(Matrix::filled(1, 1, 0.0));
        let mut st = AdamState::new(AdamHyper::new(0.1, 0.5));
        adam_step(&mut [&mut m], &mut st, &[(0, 0.3)]).unwrap();
        assert_eq!(m.value.get(0, 0), 0.0);
    }

    #[test]
    fn masks_are_clamped_and_skip_weight_decay() {
        let mut m = scalar(0.999);
        m.grad = Some(Matrix::filled(1, 1, -1.0));
        let mut st = AdamState::new(AdamHyper::new(0.1, 10.0));
        adam_step(&mut [&mut m], &mut st, &[(0, 0.0)]).unwrap();
        assert_eq!(m.value.get(0, 0), 1.0);
    }

    #[test]
    fn step_without_backward_is_rejected() {
        let mut w = scalar(1.0);
        let mut st = AdamState::new(AdamHyper::new(0.1, 0.0));
        assert!(matches!(
            adam_step(&mut [&mut w], &mut st, &[]),
            Err(Error::NotBackwarded)
        ));
    }

    /// Adam on f(w) = w², traced independently with plain scalar arithmetic.
    #[test]
    fn quadratic_trajectory_matches_scalar_trace() {
        let (lr, b1, b2, eps) = (0.05, 0.9, 0.999, 1e-8);
        let mut expected = Vec::new();
        let (mut w, mut m, mut v) = (1.5f64, 0.0f64, 0.0f64);
        for t in 1..=10 {
            let g = 2.0 * w;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            w -= lr * mh / (vh.sqrt() + eps);
            expected.push(w);
        }

        let mut p = scalar(1.5);
        let mut st = AdamState::new(AdamHyper::new(lr, 0.0));
        for want in expected {
            p.grad = Some(Matrix::filled(1, 1, 2.0 * p.value.get(0, 0)));
            adam_step(&mut [&mut p], &mut st, &[]).unwrap();
            assert!((p.value.get(0, 0) - want).abs() < 1e-12);
        }
        assert_eq!(st.step_count(), 10);
    }
}
