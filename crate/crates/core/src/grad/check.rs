//! Finite-difference gradient checking.

use crate::rng::Rng;
use crate::scalar::Scalar;

use super::tape::{NodeId, Tape};
use super::{GradError, ParamSet};

/// Outcome of a finite-difference check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Maximum relative error over all sampled coordinates.
    pub max_rel_err: f64,
    /// Name of the parameter where the maximum occurred.
    pub worst_param: String,
    pub coords_checked: usize,
}

/// Compare analytic gradients against central finite differences.
///
/// `build` must deterministically construct the loss for the given params
/// (dropout in eval mode, fixed inputs); it is evaluated twice up front and
/// any value mismatch is reported as non-determinism. Per tensor, up to
/// `coords_per_tensor` coordinates are sampled from `rng` (0 = all).
///
/// Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-6), which
/// treats tiny disagreements near zero as exact.
pub fn grad_check<S, F>(
    params: &ParamSet<S>,
    eps: f64,
    coords_per_tensor: usize,
    rng: &mut Rng,
    build: F,
) -> Result<GradCheckReport, GradError>
where
    S: Scalar,
    F: Fn(&ParamSet<S>, &mut Tape<S>, &[NodeId]) -> Result<NodeId, GradError>,
{
    if eps == 0.0 {
        return Err(GradError::ZeroEps);
    }

    let eval = |p: &ParamSet<S>| -> Result<f64, GradError> {
        let mut tape = Tape::new();
        let ids = tape.register_params(p)?;
        let loss = build(p, &mut tape, &ids)?;
        let v = tape.value(loss);
        if v.numel() != 1 {
            return Err(GradError::NonScalarLoss {
                shape: v.shape().to_vec(),
            });
        }
        Ok(v.item().to_f64())
    };

    let base = eval(params)?;
    let again = eval(params)?;
    if base != again {
        return Err(GradError::NonDeterministicClosure);
    }

    // Analytic gradients once, at the base point.
    let analytic = {
        let mut tape = Tape::new();
        let ids = tape.register_params(params)?;
        let loss = build(params, &mut tape, &ids)?;
        tape.backward(loss)?
    };

    let mut max_rel_err = 0.0f64;
    let mut worst_param = String::new();
    let mut coords_checked = 0usize;

    for slot in 0..params.len() {
        let numel = params.tensor(slot).numel();
        let coords: Vec<usize> = if coords_per_tensor == 0 || coords_per_tensor >= numel {
            (0..numel).collect()
        } else {
            // Partial Fisher-Yates: distinct indices, deterministic in rng.
            let mut idx: Vec<usize> = (0..numel).collect();
            for i in 0..coords_per_tensor {
                let j = i + rng.usize_below(numel - i);
                idx.swap(i, j);
            }
            idx.truncate(coords_per_tensor);
            idx
        };

        for &i in &coords {
            let mut plus = params.clone();
            {
                let d = plus.tensor_mut(slot).data_mut();
                d[i] = d[i] + S::from_f64(eps);
            }
            let mut minus = params.clone();
            {
                let d = minus.tensor_mut(slot).data_mut();
                d[i] = d[i] - S::from_f64(eps);
            }
            let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * eps);
            let a = analytic.slots()[slot].data()[i].to_f64();
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            if rel > max_rel_err {
                max_rel_err = rel;
                worst_param = params.name(slot).to_string();
            }
            coords_checked += 1;
        }
    }

    Ok(GradCheckReport {
        max_rel_err,
        worst_param,
        coords_checked,
    })
}
