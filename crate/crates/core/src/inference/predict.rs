//! Point prediction from the Gaussian approximation at θ̂ and
//! population-weighted areal aggregation.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::project_point;
use crate::geometry::PointKm;
use crate::jitter::{AdminMap, RegionId};
use crate::raster::{CovariateSet, Raster};
use crate::special::inv_logit;

use super::{ModelFit, SpatialBasis};

/// Draws of the stacked latent vector `(w, β)`.
#[derive(Debug, Clone, Default)]
pub struct PosteriorSamples {
    pub x: Vec<Vec<f64>>,
}

impl ModelFit {
    /// `x̂ + L⁻ᵀ z` with `z` standard normal.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> PosteriorSamples {
        let mode = self.latent.stacked();
        let x = (0..n)
            .map(|_| {
                let z: Vec<f64> = (0..mode.len()).map(|_| rng.sample(StandardNormal)).collect();
                let d = self.hessian.sample_from_standard(&z);
                mode.iter().zip(d).map(|(a, b)| a + b).collect()
            })
            .collect();
        PosteriorSamples { x }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSummary {
    pub locations: Vec<PointKm>,
    pub eta_mean: Vec<f64>,
    pub eta_sd: Vec<f64>,
    pub r_median: Vec<f64>,
    pub r_mean: Vec<f64>,
    pub r_cv: Vec<f64>,
    /// Outside the mesh or missing a covariate.
    pub missing: Vec<bool>,
}

struct LinearRow {
    entries: Vec<(usize, f64)>,
}

impl LinearRow {
    fn eval(&self, x: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * x[i]).sum()
    }
}

fn linear_rows(fit: &ModelFit, basis: &SpatialBasis, covariates: &CovariateSet, points: &[PointKm]) -> Result<Vec<Option<LinearRow>>> {
    let m = basis.num_nodes();
    if fit.latent.w.len() != m || fit.latent.beta.len() != covariates.num_effects() {
        return Err(Error::InvalidInput("fit does not match the mesh or covariates".into()));
    }
    let window = fit.spec.covariate_window();
    Ok(points
        .iter()
        .map(|p| {
            let a = project_point(&basis.mesh, p)?;
            let z = covariates.design_row(p, window)?;
            let mut entries: Vec<(usize, f64)> = a.iter().copied().filter(|&(_, w)| w != 0.0).collect();
            entries.extend(z.into_iter().enumerate().map(|(j, v)| (m + j, v)));
            Some(LinearRow { entries })
        })
        .collect())
}

/// Predictive summaries at `locations`. `η` moments are exact for the
/// Gaussian approximation; `r` summaries use `samples` (when empty they
/// fall back to the transformed `η` mean with zero CV).
pub fn predict(
    fit: &ModelFit,
    basis: &SpatialBasis,
    covariates: &CovariateSet,
    locations: &[PointKm],
    samples: &PosteriorSamples,
) -> Result<PredictiveSummary> {
    let rows = linear_rows(fit, basis, covariates, locations)?;
    let mode = fit.latent.stacked();
    let n = locations.len();
    let mut out = PredictiveSummary {
        locations: locations.to_vec(),
        eta_mean: vec![f64::NAN; n],
        eta_sd: vec![f64::NAN; n],
        r_median: vec![f64::NAN; n],
        r_mean: vec![f64::NAN; n],
        r_cv: vec![f64::NAN; n],
        missing: vec![true; n],
    };
    let mut r = Vec::with_capacity(samples.x.len());
    for (i, row) in rows.iter().enumerate() {
        let Some(row) = row else { continue };
        out.missing[i] = false;
        let mean = row.eval(&mode);
        out.eta_mean[i] = mean;
        out.eta_sd[i] = fit.hessian.quad_form_inverse(&row.entries).max(0.0).sqrt();
        if samples.x.is_empty() {
            out.r_median[i] = inv_logit(mean);
            out.r_mean[i] = inv_logit(mean);
            out.r_cv[i] = 0.0;
            continue;
        }
        r.clear();
        r.extend(samples.x.iter().map(|x| inv_logit(row.eval(x))));
        let k = r.len() as f64;
        let rm = r.iter().sum::<f64>() / k;
        let var = r.iter().map(|v| (v - rm).powi(2)).sum::<f64>() / k;
        r.sort_by(f64::total_cmp);
        let mid = r.len() / 2;
        out.r_median[i] = if r.len() % 2 == 1 { r[mid] } else { 0.5 * (r[mid - 1] + r[mid]) };
        out.r_mean[i] = rm;
        out.r_cv[i] = var.sqrt() / rm;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArealSummary {
    pub region: RegionId,
    /// Posterior mean of the population-weighted risk, `NaN` if missing.
    pub mean: f64,
    pub cv: f64,
    pub total_weight: f64,
    pub pixels: usize,
    /// No positive population weight in the region.
    pub missing: bool,
}

/// Weighted region means of per-pixel risk draws (`r[sample][pixel]`).
pub fn aggregate_samples(r: &[Vec<f64>], regions: &[Option<RegionId>], weights: &[f64]) -> Result<Vec<ArealSummary>> {
    if regions.len() != weights.len() || r.iter().any(|s| s.len() != weights.len()) {
        return Err(Error::InvalidInput("pixel counts differ between draws, regions and weights".into()));
    }
    let mut by_region: BTreeMap<RegionId, Vec<usize>> = BTreeMap::new();
    for (i, reg) in regions.iter().enumerate() {
        if let Some(reg) = reg {
            by_region.entry(*reg).or_default().push(i);
        }
    }
    Ok(by_region
        .into_iter()
        .map(|(region, pix)| {
            let total: f64 = pix.iter().map(|&i| weights[i]).sum();
            if !(total > 0.0) || r.is_empty() {
                return ArealSummary {
                    region,
                    mean: f64::NAN,
                    cv: f64::NAN,
                    total_weight: total,
                    pixels: pix.len(),
                    missing: true,
                };
            }
            let values: Vec<f64> = r
                .iter()
                .map(|s| pix.iter().map(|&i| weights[i] * s[i]).sum::<f64>() / total)
                .collect();
            let k = values.len() as f64;
            let mean = values.iter().sum::<f64>() / k;
            let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k).sqrt();
            ArealSummary {
                region,
                mean,
                cv: sd / mean,
                total_weight: total,
                pixels: pix.len(),
                missing: false,
            }
        })
        .collect())
}

/// Population-weighted areal risk per admin region, with the population
/// raster's cell centres as the prediction grid.
pub fn aggregate(
    fit: &ModelFit,
    basis: &SpatialBasis,
    covariates: &CovariateSet,
    samples: &PosteriorSamples,
    admin: &AdminMap,
    population: &Raster,
) -> Result<Vec<ArealSummary>> {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for row in 0..population.nrows {
        for col in 0..population.ncols {
            if let Some(v) = population.get(row, col) {
                points.push(population.cell_center(row, col));
                weights.push(v.max(0.0));
            }
        }
    }
    let rows = linear_rows(fit, basis, covariates, &points)?;
    let regions: Vec<Option<RegionId>> = points
        .iter()
        .zip(&rows)
        .map(|(p, row)| row.as_ref().and_then(|_| admin.region_of(p)))
        .collect();
    let r: Vec<Vec<f64>> = samples
        .x
        .iter()
        .map(|x| {
            rows.iter()
                .map(|row| row.as_ref().map_or(0.0, |row| inv_logit(row.eval(x))))
                .collect()
        })
        .collect();
    aggregate_samples(&r, &regions, &weights)
}
