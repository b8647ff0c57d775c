//! Empirical-Bayes inference for the binomial spatial model: the jitter
//! mixture likelihood, the inner Laplace mode over `(w, β)`, the outer MAP
//! search over θ, prediction and areal aggregation.

mod fit;
mod laplace;
mod likelihood;
mod optimize;
mod predict;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{fem_matrices, FemMatrices};
use crate::geometry::PointKm;
use crate::io::KeyValueConfig;
use crate::jitter::{IntegrationSettings, JitterScheme};
use crate::mesh::TriangulationMesh;
use crate::spde::{Hyperparameters, PcPriorConfig, SpdeOperator};

pub use fit::{build_model, effect_names, fit, fit_latent_model, fit_latent_model_from, THETA_LOWER, THETA_UPPER, BetaSummary, FitDiagnostics, FitRecord, ModelFit, TracePoint};
pub use laplace::{inner_mode, laplace_objective, InnerMode, InnerSettings};
pub use likelihood::{Evaluation, LatentModel, ObservationModel, PriorPrecision};
pub use optimize::{minimize_bounded, BoundedOptions, OptimResult};
pub use predict::{aggregate, aggregate_samples, predict, ArealSummary, PosteriorSamples, PredictiveSummary};

/// One survey cluster as reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: String,
    pub location: PointKm,
    pub y: u32,
    pub n: u32,
    pub urban: bool,
    pub admin: Option<u32>,
}

/// Validated cluster observations. Clusters with `n = 0` carry no
/// information and are left out of the likelihood.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    clusters: Vec<Cluster>,
}

impl Dataset {
    pub fn new(clusters: Vec<Cluster>) -> Result<Self> {
        for c in &clusters {
            if c.y > c.n {
                return Err(Error::InvalidInput(format!("cluster `{}`: y = {} exceeds n = {}", c.id, c.y, c.n)));
            }
            if !c.location.is_finite() {
                return Err(Error::InvalidInput(format!("cluster `{}`: non-finite location", c.id)));
            }
        }
        Ok(Dataset { clusters })
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn locations(&self) -> Vec<PointKm> {
        self.clusters.iter().map(|c| c.location).collect()
    }

    pub fn urban_flags(&self) -> Vec<bool> {
        self.clusters.iter().map(|c| c.urban).collect()
    }
}

/// Latent vector split into basis weights and fixed effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    pub w: Vec<f64>,
    /// Intercept first.
    pub beta: Vec<f64>,
}

impl LatentState {
    pub fn zeros(m: usize, p: usize) -> Self {
        LatentState {
            w: vec![0.0; m],
            beta: vec![0.0; p],
        }
    }

    pub fn from_stacked(x: &[f64], m: usize) -> Self {
        LatentState {
            w: x[..m].to_vec(),
            beta: x[m..].to_vec(),
        }
    }

    pub fn stacked(&self) -> Vec<f64> {
        let mut x = self.w.clone();
        x.extend_from_slice(&self.beta);
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelMode {
    /// Observed coordinates treated as true.
    UnAdj,
    /// As `UnAdj` with covariates averaged over a square window.
    Smoothed,
    /// Likelihood integrated over the jittering distribution.
    FullAdj,
}

impl ModelMode {
    pub const ALL: [ModelMode; 3] = [ModelMode::UnAdj, ModelMode::Smoothed, ModelMode::FullAdj];

    pub fn name(&self) -> &'static str {
        match self {
            ModelMode::UnAdj => "unadj",
            ModelMode::Smoothed => "smoothed",
            ModelMode::FullAdj => "fulladj",
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ModelMode::UnAdj => "UnAdj",
            ModelMode::Smoothed => "Smoothed",
            ModelMode::FullAdj => "FullAdj",
        }
    }
}

impl fmt::Display for ModelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ModelMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unadj" => Ok(ModelMode::UnAdj),
            "smoothed" => Ok(ModelMode::Smoothed),
            "fulladj" => Ok(ModelMode::FullAdj),
            other => Err(Error::InvalidInput(format!(
                "unknown model mode `{other}` (expected unadj, smoothed or fulladj)"
            ))),
        }
    }
}

/// Everything that defines a model besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub mode: ModelMode,
    pub prior: PcPriorConfig,
    pub beta_prior_variance: f64,
    pub integration: IntegrationSettings,
    pub jitter: JitterScheme,
    /// Side of the covariate averaging window in `Smoothed` mode (km).
    pub smoothing_window: f64,
    /// Skip the outer search and condition on these hyperparameters.
    pub fixed_theta: Option<Hyperparameters>,
    pub max_outer_evaluations: usize,
    pub inner: InnerSettings,
}

impl ModelSpec {
    pub fn new(mode: ModelMode) -> Self {
        ModelSpec {
            mode,
            prior: PcPriorConfig::default(),
            beta_prior_variance: 25.0,
            integration: IntegrationSettings::default(),
            jitter: JitterScheme::default(),
            smoothing_window: 5.0,
            fixed_theta: None,
            max_outer_evaluations: 200,
            inner: InnerSettings::default(),
        }
    }

    /// Covariate window used for design rows under this mode.
    pub fn covariate_window(&self) -> Option<f64> {
        (self.mode == ModelMode::Smoothed).then_some(self.smoothing_window)
    }

    /// Outer search starting point `(log σ², log ρ) = (0, log R0)`.
    pub fn initial_theta(&self) -> Hyperparameters {
        Hyperparameters::new(0.0, self.prior.r0.ln())
    }

    /// Reads the flat `key = value` model format (see README). `mode` in the
    /// file overrides `default_mode`.
    pub fn from_kv(cfg: &KeyValueConfig, default_mode: ModelMode) -> Result<Self> {
        let mut spec = ModelSpec::new(cfg.get_or("mode", default_mode)?);
        let p = &mut spec.prior;
        p.r0 = cfg.get_or("prior_r0", p.r0)?;
        p.s0 = cfg.get_or("prior_s0", p.s0)?;
        p.alpha_rho = cfg.get_or("prior_alpha_rho", p.alpha_rho)?;
        p.alpha_sigma = cfg.get_or("prior_alpha_sigma", p.alpha_sigma)?;
        spec.beta_prior_variance = cfg.get_or("beta_prior_variance", spec.beta_prior_variance)?;
        let i = &mut spec.integration;
        i.rings_urban = cfg.get_or("rings_urban", i.rings_urban)?;
        i.rings_rural = cfg.get_or("rings_rural", i.rings_rural)?;
        i.points_per_ring = cfg.get_or("points_per_ring", i.points_per_ring)?;
        let j = &mut spec.jitter;
        j.urban_max = cfg.get_or("jitter_urban_max", j.urban_max)?;
        j.rural_max_main = cfg.get_or("jitter_rural_max", j.rural_max_main)?;
        j.rural_max_tail = cfg.get_or("jitter_rural_tail_max", j.rural_max_tail)?;
        j.tail_prob = cfg.get_or("jitter_tail_prob", j.tail_prob)?;
        spec.smoothing_window = cfg.get_or("smoothing_window", spec.smoothing_window)?;
        spec.max_outer_evaluations = cfg.get_or("max_outer_evaluations", spec.max_outer_evaluations)?;
        spec.inner.gradient_tol = cfg.get_or("inner_gradient_tol", spec.inner.gradient_tol)?;
        spec.inner.max_iterations = cfg.get_or("inner_max_iterations", spec.inner.max_iterations)?;
        match (cfg.get::<f64>("fixed_sigma2")?, cfg.get::<f64>("fixed_rho")?) {
            (Some(s2), Some(rho)) => spec.fixed_theta = Some(Hyperparameters::from_natural(s2, rho)),
            (None, None) => {}
            _ => return Err(Error::parse(cfg.source(), 0, "fixed_sigma2 and fixed_rho must be given together")),
        }
        cfg.finish()?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        self.jitter.validate()?;
        if !(self.beta_prior_variance > 0.0) {
            return Err(Error::InvalidInput("beta prior variance must be positive".into()));
        }
        if !(self.smoothing_window > 0.0) {
            return Err(Error::InvalidInput("smoothing window must be positive".into()));
        }
        Ok(())
    }
}

/// Mesh with its finite-element matrices and precision builder.
#[derive(Debug, Clone)]
pub struct SpatialBasis {
    pub mesh: TriangulationMesh,
    pub fem: FemMatrices,
    pub operator: SpdeOperator,
}

impl SpatialBasis {
    pub fn new(mesh: TriangulationMesh) -> Result<Self> {
        let fem = fem_matrices(&mesh)?;
        let operator = SpdeOperator::new(&fem);
        Ok(SpatialBasis { mesh, fem, operator })
    }

    pub fn num_nodes(&self) -> usize {
        self.mesh.num_nodes()
    }
}
