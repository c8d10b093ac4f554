//! Central finite-difference validation of [`Objective::backward`].
//!
//! Only [`Objective::forward`] is used to build the numerical gradient, so the
//! check stays independent of the backpropagation code it validates.

use super::{Batch, Objective};
use crate::error::Result;
use crate::tensor::{RngStream, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Step is `rel_step * max(1, |theta|)`.
    pub rel_step: f64,
    /// Coordinates probed per parameter tensor; larger tensors are sampled.
    pub max_coords: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            rel_step: 1e-5,
            max_coords: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub index: usize,
    pub coords: usize,
    /// `|analytic - numeric| / max(|analytic|, |numeric|)` over the probed
    /// coordinates (Euclidean norms). Falls back to the absolute difference
    /// when both norms are below `1e-12`.
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.rel_error).fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error() < tol
    }
}

pub fn check_gradients(
    objective: &dyn Objective,
    params: &[Tensor],
    batch: Option<&Batch>,
    cfg: GradCheckConfig,
    rng: &mut RngStream,
) -> Result<GradCheckReport> {
    let (_, analytic) = objective.backward(params, batch)?;
    let mut probe = params.to_vec();
    let mut report = GradCheckReport::default();
    for (index, grad) in analytic.iter().enumerate() {
        let len = grad.len();
        let coords: Vec<usize> = if len <= cfg.max_coords {
            (0..len).collect()
        } else {
            rng.permutation(len)[..cfg.max_coords].to_vec()
        };
        let mut diff2 = 0.0;
        let mut a2 = 0.0;
        let mut n2 = 0.0;
        for &k in &coords {
            let theta = params[index].data()[k];
            let h = cfg.rel_step * theta.abs().max(1.0);
            probe[index].data_mut()[k] = theta + h;
            let up = objective.forward(&probe, batch)?.loss;
            probe[index].data_mut()[k] = theta - h;
            let down = objective.forward(&probe, batch)?.loss;
            probe[index].data_mut()[k] = theta;
            let numeric = (up - down) / (2.0 * h);
            let a = grad.data()[k];
            diff2 += (a - numeric).powi(2);
            a2 += a * a;
            n2 += numeric * numeric;
        }
        let scale = a2.sqrt().max(n2.sqrt());
        let rel_error = if scale < 1e-12 {
            diff2.sqrt()
        } else {
            diff2.sqrt() / scale
        };
        report.tensors.push(TensorCheck {
            index,
            coords: coords.len(),
            rel_error,
        });
    }
    Ok(report)
}
