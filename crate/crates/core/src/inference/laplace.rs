//! Inner Newton iterations for the latent mode and the Laplace
//! approximation of the marginal posterior of θ.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseCholesky;
use crate::spde::{pc_prior_logdensity, Hyperparameters, PcPriorConfig};

use super::likelihood::{LatentModel, PriorPrecision};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerSettings {
    /// Convergence when the gradient max-norm falls below this.
    pub gradient_tol: f64,
    pub max_iterations: usize,
}

impl Default for InnerSettings {
    fn default() -> Self {
        InnerSettings {
            gradient_tol: 1e-6,
            max_iterations: 100,
        }
    }
}

/// Latent mode with the Cholesky factor of the Hessian there.
#[derive(Debug, Clone)]
pub struct InnerMode {
    pub x: Vec<f64>,
    /// Negative log joint at the mode.
    pub value: f64,
    pub hessian: SparseCholesky,
    pub iterations: usize,
    pub gradient_norm: f64,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

/// Factors `H + shift·I`, raising the shift by decades until it succeeds.
fn damped_factor(model: &LatentModel, h: &crate::sparse::CsrMatrix) -> Result<SparseCholesky> {
    if let Ok(l) = SparseCholesky::factor_with(model.structure(), h, 0.0) {
        return Ok(l);
    }
    let scale = h.diag().iter().fold(1.0f64, |a, b| a.max(b.abs()));
    let mut shift = 1e-8 * scale;
    for _ in 0..16 {
        if let Ok(l) = SparseCholesky::factor_with(model.structure(), h, shift) {
            return Ok(l);
        }
        shift *= 10.0;
    }
    Err(Error::InnerConvergence("Hessian not positive definite after damping".into()))
}

/// Damped Newton with backtracking line search from `init`.
pub fn inner_mode(
    model: &LatentModel,
    prior: &PriorPrecision,
    init: &[f64],
    settings: &InnerSettings,
) -> Result<InnerMode> {
    let mut x = init.to_vec();
    let mut ev = model.neg_log_joint(prior, &x)?;
    let mut iterations = 0;
    loop {
        let gnorm = max_abs(&ev.gradient);
        if gnorm < settings.gradient_tol {
            break;
        }
        if iterations >= settings.max_iterations {
            return Err(Error::InnerConvergence(format!(
                "{iterations} iterations, gradient max-norm {gnorm:e}"
            )));
        }
        iterations += 1;
        let chol = damped_factor(model, &ev.hessian)?;
        let step: Vec<f64> = chol.solve(&ev.gradient).iter().map(|v| -v).collect();
        let slope: f64 = step.iter().zip(&ev.gradient).map(|(a, b)| a * b).sum();
        log::trace!("inner {iterations}: f = {:.12}, |g| = {gnorm:e}, decrement = {:e}", ev.value, -slope);
        if -slope < 1e-15 * (1.0 + ev.value.abs()) {
            // Newton decrement at rounding level of f: the gradient is then
            // dominated by cancellation in Qx and cannot shrink further
            break;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            if let Ok(v) = model.value(prior, &trial) {
                if v <= ev.value + 1e-4 * t * slope {
                    accepted = Some(trial);
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some(trial) => {
                x = trial;
                ev = model.neg_log_joint(prior, &x)?;
            }
            None if gnorm < 1e-3 => break,
            None => {
                return Err(Error::InnerConvergence(format!(
                    "line search failed at iteration {iterations}, gradient max-norm {gnorm:e}"
                )))
            }
        }
    }
    let hessian = SparseCholesky::factor_with(model.structure(), &ev.hessian, 0.0)
        .map_err(|e| Error::InnerConvergence(format!("Hessian at the mode is not positive definite: {e}")))?;
    Ok(InnerMode {
        gradient_norm: max_abs(&ev.gradient),
        x,
        value: ev.value,
        hessian,
        iterations,
    })
}

/// Laplace approximation of `−log π(θ | y)` up to a θ-free constant:
///
/// `f(x̂) + ½ log det H(x̂) − ½ log det P(θ) − log π(θ)`.
pub fn laplace_objective(
    model: &LatentModel,
    theta: &Hyperparameters,
    prior_cfg: &PcPriorConfig,
    init: &[f64],
    settings: &InnerSettings,
) -> Result<(f64, InnerMode)> {
    let prior = model.prior(theta)?;
    let mode = inner_mode(model, &prior, init, settings)?;
    let value = mode.value + 0.5 * mode.hessian.log_det() - 0.5 * prior.log_det - pc_prior_logdensity(theta, prior_cfg);
    Ok((value, mode))
}
