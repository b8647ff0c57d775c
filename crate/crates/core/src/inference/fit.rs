//! Outer MAP search over θ, final Laplace approximation at θ̂ and the
//! fixed-effect summaries.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jitter::{integration_design, point_design, AdminMap};
use crate::raster::CovariateSet;
use crate::sparse::SparseCholesky;
use crate::spde::Hyperparameters;

use super::laplace::{inner_mode, laplace_objective};
use super::likelihood::{LatentModel, ObservationModel};
use super::optimize::{minimize_bounded, BoundedOptions};
use super::{Dataset, LatentState, ModelMode, ModelSpec, SpatialBasis};

/// Lower and upper bounds of `(log σ², log ρ)`.
pub const THETA_LOWER: [f64; 2] = [-6.0, 0.0];
pub const THETA_UPPER: [f64; 2] = [6.0, 7.600_902_459_542_082]; // ln 2000

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    /// Half-width of the 95% interval, `1.96 sd`.
    pub half_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub log_sigma2: f64,
    pub log_rho: f64,
    /// Laplace objective, `NaN` where the evaluation failed.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub objective: f64,
    pub outer_evaluations: usize,
    pub outer_iterations: usize,
    pub outer_gradient_norm: f64,
    pub inner_iterations: usize,
    pub inner_gradient_norm: f64,
    pub excluded_clusters: Vec<String>,
    pub trace: Vec<TracePoint>,
}

/// Empirical-Bayes fit: MAP θ̂ and the Gaussian approximation of `(w, β)`
/// given θ̂.
#[derive(Debug, Clone)]
pub struct ModelFit {
    pub spec: ModelSpec,
    pub theta: Hyperparameters,
    pub latent: LatentState,
    /// Cholesky factor of the negative log joint Hessian at the mode.
    pub hessian: SparseCholesky,
    pub beta: Vec<BetaSummary>,
    pub diagnostics: FitDiagnostics,
}

/// Serialisable part of a [`ModelFit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub mode: ModelMode,
    pub rho_km: f64,
    pub sigma2: f64,
    pub theta: Hyperparameters,
    pub beta: Vec<BetaSummary>,
    pub spec: ModelSpec,
    pub latent: LatentState,
    pub diagnostics: FitDiagnostics,
}

impl FitRecord {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
    }
}

impl ModelFit {
    pub fn record(&self) -> FitRecord {
        FitRecord {
            mode: self.spec.mode,
            rho_km: self.theta.rho(),
            sigma2: self.theta.sigma2(),
            theta: self.theta,
            beta: self.beta.clone(),
            spec: self.spec.clone(),
            latent: self.latent.clone(),
            diagnostics: self.diagnostics.clone(),
        }
    }

    /// Rebuilds the Gaussian approximation at a stored θ̂ (the mode is
    /// recomputed from the stored latent state).
    pub fn from_record(record: FitRecord, model: &LatentModel) -> Result<Self> {
        if record.latent.w.len() != model.num_nodes() || record.latent.beta.len() != model.num_effects() {
            return Err(Error::InvalidInput("stored fit does not match the mesh or covariates".into()));
        }
        let prior = model.prior(&record.theta)?;
        let mode = inner_mode(model, &prior, &record.latent.stacked(), &record.spec.inner)?;
        let names: Vec<String> = record.beta.iter().map(|b| b.name.clone()).collect();
        let beta = beta_summaries(&mode.hessian, &mode.x, model.num_nodes(), &names);
        Ok(ModelFit {
            spec: record.spec,
            theta: record.theta,
            latent: LatentState::from_stacked(&mode.x, model.num_nodes()),
            hessian: mode.hessian,
            beta,
            diagnostics: record.diagnostics,
        })
    }

    pub fn beta_mean(&self, name: &str) -> Option<f64> {
        self.beta.iter().find(|b| b.name == name).map(|b| b.mean)
    }
}

fn beta_summaries(h: &SparseCholesky, x: &[f64], m: usize, names: &[String]) -> Vec<BetaSummary> {
    names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let mean = x[m + j];
            let sd = h.inverse_diagonal_entry(m + j).sqrt();
            BetaSummary {
                name: name.clone(),
                mean,
                sd,
                lower: mean - 1.96 * sd,
                upper: mean + 1.96 * sd,
                half_width: 1.96 * sd,
            }
        })
        .collect()
}

/// Fits a prepared [`LatentModel`]. `names` label the fixed effects.
pub fn fit_latent_model(model: &LatentModel, spec: &ModelSpec, names: &[String]) -> Result<ModelFit> {
    fit_latent_model_from(model, spec, names, &vec![0.0; model.dim()])
}

/// As [`fit_latent_model`], with the first inner Newton search started at
/// `init` (later ones start at the previous mode).
pub fn fit_latent_model_from(model: &LatentModel, spec: &ModelSpec, names: &[String], init: &[f64]) -> Result<ModelFit> {
    spec.validate()?;
    if names.len() != model.num_effects() {
        return Err(Error::InvalidInput("one name per fixed effect is required".into()));
    }
    if init.len() != model.dim() {
        return Err(Error::InvalidInput("initial latent state has the wrong length".into()));
    }
    let mut warm = init.to_vec();
    let (theta, outer_evaluations, outer_iterations, outer_gradient_norm, trace) = match spec.fixed_theta {
        Some(theta) => (theta, 0, 0, 0.0, Vec::new()),
        None => {
            let objective = |t: &[f64]| -> Result<f64> {
                let theta = Hyperparameters::new(t[0], t[1]);
                let (v, mode) = laplace_objective(model, &theta, &spec.prior, &warm, &spec.inner)?;
                warm = mode.x;
                Ok(v)
            };
            let mut options = BoundedOptions::new(THETA_LOWER.to_vec(), THETA_UPPER.to_vec());
            options.max_evaluations = spec.max_outer_evaluations;
            let start = spec.initial_theta();
            let r = minimize_bounded(objective, &[start.log_sigma2, start.log_rho], &options)?;
            let trace = r
                .trace
                .iter()
                .map(|(x, v)| TracePoint {
                    log_sigma2: x[0],
                    log_rho: x[1],
                    objective: *v,
                })
                .collect();
            (Hyperparameters::new(r.x[0], r.x[1]), r.evaluations, r.iterations, r.gradient_norm, trace)
        }
    };
    let (objective, mode) = laplace_objective(model, &theta, &spec.prior, &warm, &spec.inner)?;
    let m = model.num_nodes();
    let beta = beta_summaries(&mode.hessian, &mode.x, m, names);
    Ok(ModelFit {
        spec: spec.clone(),
        theta,
        latent: LatentState::from_stacked(&mode.x, m),
        hessian: mode.hessian,
        beta,
        diagnostics: FitDiagnostics {
            objective,
            outer_evaluations,
            outer_iterations,
            outer_gradient_norm,
            inner_iterations: mode.iterations,
            inner_gradient_norm: mode.gradient_norm,
            excluded_clusters: Vec::new(),
            trace,
        },
    })
}

/// Builds the design for `spec.mode` and the binomial latent model.
pub fn build_model(
    data: &Dataset,
    spec: &ModelSpec,
    basis: &SpatialBasis,
    covariates: &CovariateSet,
    admin: &AdminMap,
) -> Result<LatentModel> {
    spec.validate()?;
    let locations = data.locations();
    let urban = data.urban_flags();
    let design = match spec.mode {
        ModelMode::UnAdj | ModelMode::Smoothed => point_design(&locations, &urban),
        ModelMode::FullAdj => integration_design(&locations, &urban, admin, &spec.jitter, &spec.integration)?,
    };
    let window = spec.covariate_window();
    LatentModel::new(
        basis,
        data,
        &design,
        covariates.num_effects(),
        |p| covariates.design_row(p, window),
        spec.beta_prior_variance,
        ObservationModel::Binomial,
    )
}

pub fn effect_names(covariates: &CovariateSet) -> Vec<String> {
    std::iter::once("intercept".to_string())
        .chain(covariates.names().into_iter().map(String::from))
        .collect()
}

/// Fits the binomial model under `spec` to cluster data.
pub fn fit(
    data: &Dataset,
    spec: &ModelSpec,
    basis: &SpatialBasis,
    covariates: &CovariateSet,
    admin: &AdminMap,
) -> Result<ModelFit> {
    let model = build_model(data, spec, basis, covariates, admin)?;
    let init = match spec.mode {
        // The mixture likelihood can have spurious modes far from the
        // point-design one; starting there keeps Newton in the right basin.
        ModelMode::FullAdj => {
            let mut point_spec = spec.clone();
            point_spec.mode = ModelMode::UnAdj;
            let point_model = build_model(data, &point_spec, basis, covariates, admin)?;
            let theta = spec.fixed_theta.unwrap_or_else(|| spec.initial_theta());
            let prior = point_model.prior(&theta)?;
            inner_mode(&point_model, &prior, &vec![0.0; point_model.dim()], &spec.inner)?.x
        }
        _ => vec![0.0; model.dim()],
    };
    let mut fit = fit_latent_model_from(&model, spec, &effect_names(covariates), &init)?;
    fit.diagnostics.excluded_clusters = model
        .excluded()
        .iter()
        .map(|&c| data.clusters()[c].id.clone())
        .collect();
    Ok(fit)
}
