//! Adam optimizer with global gradient-norm clipping.
//!
//! One optimizer state is shared by all training workers; updates happen
//! under a single-writer critical section (see the training loop), so the
//! step itself is plain sequential code.

use crate::scalar::Scalar;

use super::tape::Gradients;
use super::tensor::Tensor;
use super::{GradError, ParamSet};

/// Adam hyperparameters. The gradient-norm clip runs before the moment
/// updates.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Maximum global L2 norm of the gradient; larger gradients are rescaled.
    pub clip: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip: 40.0,
        }
    }
}

/// First/second moment estimates, aligned with ParamSet slots.
#[derive(Debug, Clone)]
pub struct AdamState<S: Scalar> {
    pub m: Vec<Tensor<S>>,
    pub v: Vec<Tensor<S>>,
    pub t: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn for_params(params: &ParamSet<S>) -> Self {
        let zeros: Vec<Tensor<S>> = params
            .tensors()
            .map(|t| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// Clip `grads` to `max_norm` (global L2), in place. Returns the pre-clip norm.
pub fn clip_global_norm<S: Scalar>(grads: &mut Gradients<S>, max_norm: f64) -> f64 {
    let norm = grads.global_norm().to_f64();
    if norm > max_norm && norm > 0.0 {
        let scale = S::from_f64(max_norm / norm);
        for t in grads.slots_mut() {
            for v in t.data_mut() {
                *v = *v * scale;
            }
        }
    }
    norm
}

/// One Adam update. Rejects non-finite gradients without touching params;
/// on success increments the ParamSet version.
pub fn optimizer_step<S: Scalar>(
    params: &mut ParamSet<S>,
    state: &mut AdamState<S>,
    cfg: &AdamConfig,
    grads: &mut Gradients<S>,
) -> Result<(), GradError> {
    if grads.slots().len() != params.len() {
        return Err(GradError::ShapeMismatch {
            op: "optimizer_step",
            lhs: vec![grads.slots().len()],
            rhs: vec![params.len()],
        });
    }
    if !grads.is_finite() {
        return Err(GradError::NonFiniteGrad);
    }
    clip_global_norm(grads, cfg.clip);

    state.t += 1;
    let t = state.t;
    let b1 = S::from_f64(cfg.beta1);
    let b2 = S::from_f64(cfg.beta2);
    let one = S::one();
    let bias1 = S::from_f64(1.0 - cfg.beta1.powi(t as i32));
    let bias2 = S::from_f64(1.0 - cfg.beta2.powi(t as i32));
    let lr = S::from_f64(cfg.lr);
    let eps = S::from_f64(cfg.eps);

    for slot in 0..params.len() {
        let g = &grads.slots()[slot];
        let m = &mut state.m[slot];
        let v = &mut state.v[slot];
        let p = params.tensor_mut(slot);
        for i in 0..p.data().len() {
            let gi = g.data()[i];
            let mi = b1 * m.data()[i] + (one - b1) * gi;
            let vi = b2 * v.data()[i] + (one - b2) * gi * gi;
            m.data_mut()[i] = mi;
            v.data_mut()[i] = vi;
            let m_hat = mi / bias1;
            let v_hat = vi / bias2;
            p.data_mut()[i] = p.data()[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    params.bump_version();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grads_of(slots: Vec<Tensor<f64>>) -> Gradients<f64> {
        Gradients::from_slots(slots)
    }

    #[test]
    fn zero_grads_leave_fresh_params_unchanged() {
        let mut p = ParamSet::<f64>::new();
        p.register("w", Tensor::row(vec![1.0, -2.0, 3.0])).unwrap();
        let mut st = AdamState::for_params(&p);
        let mut g = grads_of(vec![Tensor::zeros(1, 3)]);
        optimizer_step(&mut p, &mut st, &AdamConfig::default(), &mut g).unwrap();
        assert_eq!(p.get("w").unwrap().data(), &[1.0, -2.0, 3.0]);
        assert_eq!(p.version(), 1);
    }

    #[test]
    fn clip_rescales_to_requested_norm() {
        // A single gradient of norm 100 must come out with norm 40.
        let mut g = grads_of(vec![Tensor::row(vec![60.0, 80.0])]);
        let pre = clip_global_norm(&mut g, 40.0);
        assert!((pre - 100.0).abs() < 1e-9);
        assert!((g.global_norm() - 40.0).abs() < 1e-9);
    }

    #[test]
    fn nan_grad_rejected_params_untouched() {
        let mut p = ParamSet::<f64>::new();
        p.register("w", Tensor::row(vec![1.0])).unwrap();
        let mut st = AdamState::for_params(&p);
        let mut g = grads_of(vec![Tensor::row(vec![f64::NAN])]);
        let err = optimizer_step(&mut p, &mut st, &AdamConfig::default(), &mut g);
        assert!(matches!(err, Err(GradError::NonFiniteGrad)));
        assert_eq!(p.get("w").unwrap().data(), &[1.0]);
        assert_eq!(p.version(), 0);
        assert_eq!(st.t, 0);
    }

    #[test]
    fn quadratic_bowl_converges() {
        // min over x of sum((x - c)^2): Adam at lr 1e-2 must reach 1e-6
        // within 5000 steps.
        let target = [3.0, -1.5, 0.25, 2.0];
        let mut p = ParamSet::<f64>::new();
        p.register("x", Tensor::row(vec![0.0; 4])).unwrap();
        let mut st = AdamState::for_params(&p);
        let cfg = AdamConfig {
            lr: 1e-2,
            ..AdamConfig::default()
        };
        let mut loss = f64::INFINITY;
        for _ in 0..5000 {
            let x = p.get("x").unwrap().clone();
            loss = x
                .data()
                .iter()
                .zip(&target)
                .map(|(xi, ci)| (xi - ci) * (xi - ci))
                .sum();
            if loss < 1e-6 {
                break;
            }
            let g: Vec<f64> = x
                .data()
                .iter()
                .zip(&target)
                .map(|(xi, ci)| 2.0 * (xi - ci))
                .collect();
            let mut grads = grads_of(vec![Tensor::row(g)]);
            optimizer_step(&mut p, &mut st, &cfg, &mut grads).unwrap();
        }
        assert!(loss < 1e-6, "final loss {loss}");
    }

    #[test]
    fn deterministic_given_same_inputs() {
        let run = || {
            let mut p = ParamSet::<f64>::new();
            p.register("w", Tensor::row(vec![0.5, -0.25])).unwrap();
            let mut st = AdamState::for_params(&p);
            for k in 0..50 {
                let mut g = grads_of(vec![Tensor::row(vec![0.1 * k as f64, -0.2])]);
                optimizer_step(&mut p, &mut st, &AdamConfig::default(), &mut g).unwrap();
            }
            p.get("w").unwrap().data().to_vec()
        };
        assert_eq!(run(), run());
    }
}
