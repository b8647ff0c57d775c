//! SPDE representation of a Matérn (ν = 1) Gaussian random field.
//!
//! With `κ = √8 / ρ` and `τ² = 1 / (4π σ² κ²)` the basis weights have precision
//!
//! `Q = τ² (κ⁴ C + 2κ² G + G C⁻¹ G)`
//!
//! where `C` is the lumped mass matrix and `G` the stiffness matrix. Natural
//! (Neumann) boundary conditions follow from the assembly.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::FemMatrices;
use crate::sparse::{CsrMatrix, EnvelopeStructure, SparseCholesky};
use crate::special::x_bessel_k1;

/// Field hyperparameters on the internal scale `(log σ², log ρ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub log_sigma2: f64,
    pub log_rho: f64,
}

impl Hyperparameters {
    pub fn new(log_sigma2: f64, log_rho: f64) -> Self {
        Self { log_sigma2, log_rho }
    }

    pub fn from_natural(sigma2: f64, rho: f64) -> Self {
        Self::new(sigma2.ln(), rho.ln())
    }

    pub fn sigma2(&self) -> f64 {
        self.log_sigma2.exp()
    }

    pub fn rho(&self) -> f64 {
        self.log_rho.exp()
    }

    pub fn kappa(&self) -> f64 {
        8f64.sqrt() / self.rho()
    }

    pub fn tau(&self) -> f64 {
        let k = self.kappa();
        (1.0 / (4.0 * PI * self.sigma2() * k * k)).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.log_sigma2.is_finite() && self.log_rho.is_finite()
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.log_sigma2, self.log_rho]
    }
}

/// Sparse precision of the basis weights together with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct SpdePrecision {
    pub q: CsrMatrix,
    pub kappa: f64,
    pub tau: f64,
    pub chol: SparseCholesky,
}

impl SpdePrecision {
    pub fn log_det(&self) -> f64 {
        self.chol.log_det()
    }
}

/// θ-independent pieces of the precision: `C`, `G`, `G C⁻¹ G` and the
/// Cholesky ordering for their common sparsity pattern.
#[derive(Debug, Clone)]
pub struct SpdeOperator {
    c: CsrMatrix,
    g: CsrMatrix,
    gcg: CsrMatrix,
    structure: EnvelopeStructure,
}

impl SpdeOperator {
    pub fn new(fem: &FemMatrices) -> Self {
        let c = CsrMatrix::diagonal(&fem.c_diag);
        let c_inv: Vec<f64> = fem.c_diag.iter().map(|c| 1.0 / c).collect();
        let gcg = fem.g.matmul(&fem.g.scale_rows(&c_inv));
        let pattern = CsrMatrix::linear_combination(&[(1.0, &c), (1.0, &fem.g), (1.0, &gcg)]);
        let structure = EnvelopeStructure::analyse(&pattern, 0);
        SpdeOperator {
            c,
            g: fem.g.clone(),
            gcg,
            structure,
        }
    }

    pub fn dim(&self) -> usize {
        self.c.nrows()
    }

    /// Unfactored `Q(θ)`.
    pub fn matrix(&self, theta: &Hyperparameters) -> CsrMatrix {
        let kappa = theta.kappa();
        let tau2 = theta.tau().powi(2);
        let k2 = kappa * kappa;
        CsrMatrix::linear_combination(&[
            (tau2 * k2 * k2, &self.c),
            (2.0 * tau2 * k2, &self.g),
            (tau2, &self.gcg),
        ])
    }

    pub fn precision(&self, theta: &Hyperparameters) -> Result<SpdePrecision> {
        if !theta.is_finite() {
            return Err(Error::InvalidInput("hyperparameters must be finite".into()));
        }
        let q = self.matrix(theta);
        let chol = SparseCholesky::factor_with(&self.structure, &q, 0.0).map_err(|_| Error::IndefinitePrecision {
            log_sigma2: theta.log_sigma2,
            log_rho: theta.log_rho,
        })?;
        Ok(SpdePrecision {
            q,
            kappa: theta.kappa(),
            tau: theta.tau(),
            chol,
        })
    }
}

/// Builds and factors `Q(θ)` in one call.
pub fn precision(fem: &FemMatrices, theta: &Hyperparameters) -> Result<SpdePrecision> {
    SpdeOperator::new(fem).precision(theta)
}

/// Matérn covariance with smoothness one:
/// `σ² (√8 d/ρ) K₁(√8 d/ρ)`, equal to `σ²` at `d = 0`.
pub fn matern_covariance(d: f64, sigma2: f64, rho: f64) -> f64 {
    sigma2 * x_bessel_k1(8f64.sqrt() * d / rho)
}

pub fn matern_correlation(d: f64, rho: f64) -> f64 {
    matern_covariance(d, 1.0, rho)
}

/// Penalised-complexity prior for `(ρ, σ)` in two dimensions.
///
/// `alpha_rho = P(ρ < r0)` (so `0.5` makes `r0` the median) and
/// `alpha_sigma = P(σ > s0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcPriorConfig {
    pub r0: f64,
    pub s0: f64,
    pub alpha_rho: f64,
    pub alpha_sigma: f64,
}

impl Default for PcPriorConfig {
    fn default() -> Self {
        PcPriorConfig {
            r0: 160.0,
            s0: 1.0,
            alpha_rho: 0.5,
            alpha_sigma: 0.05,
        }
    }
}

impl PcPriorConfig {
    pub fn new(r0: f64, s0: f64) -> Self {
        PcPriorConfig {
            r0,
            s0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.r0 > 0.0
            && self.s0 > 0.0
            && self.alpha_rho > 0.0
            && self.alpha_rho < 1.0
            && self.alpha_sigma > 0.0
            && self.alpha_sigma < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid PC prior configuration {self:?}")))
        }
    }

    pub fn lambda_rho(&self) -> f64 {
        -self.alpha_rho.ln() * self.r0
    }

    pub fn lambda_sigma(&self) -> f64 {
        -self.alpha_sigma.ln() / self.s0
    }

    /// `P(ρ ≤ r) = exp(−λ_ρ / r)`.
    pub fn range_cdf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            0.0
        } else {
            (-self.lambda_rho() / r).exp()
        }
    }

    /// `P(σ ≤ s) = 1 − exp(−λ_σ s)`.
    pub fn sd_cdf(&self, s: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else {
            -(-self.lambda_sigma() * s).exp_m1()
        }
    }

    /// Joint log density of `(ρ, σ)` on the natural scale.
    pub fn log_density_natural(&self, rho: f64, sigma: f64) -> f64 {
        let lr = self.lambda_rho();
        let ls = self.lambda_sigma();
        lr.ln() - 2.0 * rho.ln() - lr / rho + ls.ln() - ls * sigma
    }
}

/// Log density of θ = `(log σ², log ρ)` under the PC prior, including the
/// Jacobian `|∂(ρ, σ)/∂θ| = ρ σ / 2`.
pub fn pc_prior_logdensity(theta: &Hyperparameters, cfg: &PcPriorConfig) -> f64 {
    let rho = theta.rho();
    let sigma = (0.5 * theta.log_sigma2).exp();
    cfg.log_density_natural(rho, sigma) + theta.log_rho + 0.5 * theta.log_sigma2 - 2f64.ln()
}
