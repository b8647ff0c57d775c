//! Synthetic studies: Matérn risk surfaces, population-weighted cluster
//! placement, DHS jittering, binomial responses and replicated comparison
//! of model modes.

mod landscape;

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::{bias_rmse, prediction_scores, ModelScores, ParameterScore, PredictionScores, ScoreTable};
use crate::fem::project_point;
use crate::geometry::PointKm;
use crate::inference::{effect_names, fit, predict, Cluster, Dataset, ModelMode, ModelSpec, PosteriorSamples, SpatialBasis};
use crate::io::KeyValueConfig;
use crate::jitter::{sample_jitter, JitterScheme};
use crate::mesh::build_mesh;
use crate::raster::{extract_point, Raster};
use crate::spde::Hyperparameters;
use crate::special::inv_logit;

pub use landscape::{Landscape, LandscapeConfig, COVARIATE_NAMES};

/// Generating range (km) of the field.
pub const TRUE_RHO: f64 = 107.68;
/// Generating marginal variance of the field.
pub const TRUE_SIGMA2: f64 = 1.65;
/// Generating `(μ, β_DistW, β_CityA, β_Elev, β_PopD, β_UrbR)`.
pub const TRUE_BETA: [f64; 6] = [-2.21, 0.62, -0.43, -0.02, 0.32, -1.35];

/// Covariate signal strength.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignalLevel {
    Low,
    Med,
    High,
}

impl SignalLevel {
    pub fn scale(&self) -> f64 {
        match self {
            SignalLevel::Low => 0.5,
            SignalLevel::Med => 1.0,
            SignalLevel::High => 1.5,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SignalLevel::Low => "SignalLow",
            SignalLevel::Med => "SignalMed",
            SignalLevel::High => "SignalHigh",
        }
    }
}

impl std::str::FromStr for SignalLevel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().trim_start_matches("signal") {
            "low" => Ok(SignalLevel::Low),
            "med" | "medium" => Ok(SignalLevel::Med),
            "high" => Ok(SignalLevel::High),
            other => Err(Error::InvalidInput(format!("unknown signal level `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshSettings {
    pub max_edge_interior: f64,
    pub max_edge_exterior: f64,
    pub extension: f64,
}

impl Default for MeshSettings {
    fn default() -> Self {
        MeshSettings {
            max_edge_interior: 25.0,
            max_edge_exterior: 80.0,
            extension: 200.0,
        }
    }
}

/// A true cluster location with its urban flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueLocation {
    pub location: PointKm,
    pub urban: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    /// Multiplier of the covariate coefficients (the intercept is kept).
    pub beta_scale: f64,
    pub theta: Hyperparameters,
    /// Base coefficients, intercept first.
    pub beta: Vec<f64>,
    pub urban: usize,
    pub rural: usize,
    pub replicates: usize,
    /// Reuse one set of true locations in every replicate.
    pub fixed_locations: bool,
    /// Explicit true locations for the fixed-locations variant.
    pub locations: Option<Vec<TrueLocation>>,
    /// Explicit numbers at risk; otherwise uniform on `trials`.
    pub n_list: Option<Vec<u32>>,
    pub trials: (u32, u32),
    pub eval_locations: usize,
    pub mesh: MeshSettings,
    pub jitter: JitterScheme,
    pub landscape: LandscapeConfig,
    pub models: Vec<ModelMode>,
    pub seed: u64,
    /// Keep the simulated datasets in the result.
    pub keep_datasets: bool,
}

impl ScenarioConfig {
    /// Desk-scale scenario: 300 clusters in the proportions 568 : 812.
    pub fn desk(level: SignalLevel, replicates: usize, seed: u64) -> Self {
        let clusters = 300;
        let urban = (clusters as f64 * 568.0 / 1380.0).round() as usize;
        ScenarioConfig {
            name: level.name().to_string(),
            beta_scale: level.scale(),
            theta: Hyperparameters::from_natural(TRUE_SIGMA2, TRUE_RHO),
            beta: TRUE_BETA.to_vec(),
            urban,
            rural: clusters - urban,
            replicates,
            fixed_locations: false,
            locations: None,
            n_list: None,
            trials: (15, 35),
            eval_locations: 1000,
            mesh: MeshSettings::default(),
            jitter: JitterScheme::default(),
            landscape: LandscapeConfig::default(),
            models: ModelMode::ALL.to_vec(),
            seed,
            keep_datasets: false,
        }
    }

    pub fn clusters(&self) -> usize {
        self.urban + self.rural
    }

    /// Generating coefficients after signal scaling.
    pub fn true_beta(&self) -> Vec<f64> {
        self.beta
            .iter()
            .enumerate()
            .map(|(j, b)| if j == 0 { *b } else { self.beta_scale * b })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.clusters() == 0 || self.replicates == 0 || self.eval_locations == 0 {
            return Err(Error::InvalidInput("cluster, replicate and evaluation counts must be positive".into()));
        }
        if !(self.beta_scale > 0.0) {
            return Err(Error::InvalidInput("beta_scale must be positive".into()));
        }
        if self.beta.len() != COVARIATE_NAMES.len() + 1 {
            return Err(Error::InvalidInput(format!("beta needs {} entries", COVARIATE_NAMES.len() + 1)));
        }
        if self.trials.0 > self.trials.1 || self.trials.1 == 0 {
            return Err(Error::InvalidInput("invalid trials range".into()));
        }
        if let Some(n) = &self.n_list {
            if n.len() != self.clusters() {
                return Err(Error::InvalidInput("n_list length must equal the number of clusters".into()));
            }
        }
        if let Some(l) = &self.locations {
            let urban = l.iter().filter(|t| t.urban).count();
            if urban != self.urban || l.len() != self.clusters() {
                return Err(Error::InvalidInput("supplied locations disagree with urban/rural counts".into()));
            }
        }
        if self.models.is_empty() {
            return Err(Error::InvalidInput("no models to fit".into()));
        }
        self.jitter.validate()
    }

    /// Reads the flat `key = value` scenario format (see README).
    pub fn from_kv(cfg: &KeyValueConfig) -> Result<Self> {
        let level: SignalLevel = cfg.get_or("signal", SignalLevel::Med)?;
        let replicates = cfg.get_or("replicates", 20usize)?;
        let seed = cfg.get_or("seed", 1u64)?;
        let mut s = ScenarioConfig::desk(level, replicates, seed);
        s.name = cfg.get_or("name", s.name.clone())?;
        s.beta_scale = cfg.get_or("beta_scale", s.beta_scale)?;
        let rho = cfg.get_or("rho", TRUE_RHO)?;
        let sigma2 = cfg.get_or("sigma2", TRUE_SIGMA2)?;
        s.theta = Hyperparameters::from_natural(sigma2, rho);
        if let Some(beta) = cfg.get_list::<f64>("beta")? {
            s.beta = beta;
        }
        if let Some(c) = cfg.get::<usize>("clusters")? {
            s.urban = (c as f64 * 568.0 / 1380.0).round() as usize;
            s.rural = c - s.urban;
        }
        s.urban = cfg.get_or("urban", s.urban)?;
        s.rural = cfg.get_or("rural", s.rural)?;
        s.fixed_locations = cfg.get_or("fixed_locations", false)?;
        s.trials = (cfg.get_or("trials_min", s.trials.0)?, cfg.get_or("trials_max", s.trials.1)?);
        s.n_list = cfg.get_list::<u32>("n_list")?;
        s.eval_locations = cfg.get_or("eval_locations", s.eval_locations)?;
        s.mesh.max_edge_interior = cfg.get_or("mesh_max_edge", s.mesh.max_edge_interior)?;
        s.mesh.max_edge_exterior = cfg.get_or("mesh_max_edge_outer", s.mesh.max_edge_exterior)?;
        s.mesh.extension = cfg.get_or("mesh_extension", s.mesh.extension)?;
        if let Some(models) = cfg.get_list::<ModelMode>("models")? {
            s.models = models;
        }
        if cfg.get_or("jitter", true)? {
            s.jitter = JitterScheme::default();
        } else {
            s.jitter = JitterScheme::none();
        }
        let l = &mut s.landscape;
        l.width = cfg.get_or("landscape_width", l.width)?;
        l.height = cfg.get_or("landscape_height", l.height)?;
        l.fine_cell = cfg.get_or("landscape_fine_cell", l.fine_cell)?;
        l.coarse_cell = cfg.get_or("landscape_coarse_cell", l.coarse_cell)?;
        l.admin_cell = cfg.get_or("landscape_admin_cell", l.admin_cell)?;
        l.cities = cfg.get_or("landscape_cities", l.cities)?;
        l.towns = cfg.get_or("landscape_towns", l.towns)?;
        l.rivers = cfg.get_or("landscape_rivers", l.rivers)?;
        l.city_radius.0 = cfg.get_or("landscape_city_radius_min", l.city_radius.0)?;
        l.city_radius.1 = cfg.get_or("landscape_city_radius_max", l.city_radius.1)?;
        l.town_radius.0 = cfg.get_or("landscape_town_radius_min", l.town_radius.0)?;
        l.town_radius.1 = cfg.get_or("landscape_town_radius_max", l.town_radius.1)?;
        l.background_density = cfg.get_or("landscape_background_density", l.background_density)?;
        l.built_half = cfg.get_or("landscape_built_half", l.built_half)?;
        l.built_shape = cfg.get_or("landscape_built_shape", l.built_shape)?;
        l.pixel_sd = cfg.get_or("landscape_pixel_sd", l.pixel_sd)?;
        l.pixel_range = cfg.get_or("landscape_pixel_range", l.pixel_range)?;
        l.urban_loading = cfg.get_or("landscape_urban_loading", l.urban_loading)?;
        l.urban_sd = cfg.get_or("landscape_urban_sd", l.urban_sd)?;
        l.seed = cfg.get_or("landscape_seed", l.seed)?;
        s.keep_datasets = cfg.get_or("keep_datasets", false)?;
        cfg.finish()?;
        s.validate()?;
        Ok(s)
    }

    pub fn model_spec(&self, mode: ModelMode) -> ModelSpec {
        let mut spec = ModelSpec::new(mode);
        spec.jitter = self.jitter;
        spec
    }
}

/// `w = L⁻ᵀ z` with `Q(θ) = L Lᵀ` and standard normal `z`.
pub fn simulate_field<R: Rng + ?Sized>(basis: &SpatialBasis, theta: &Hyperparameters, rng: &mut R) -> Result<Vec<f64>> {
    let prec = basis.operator.precision(theta)?;
    let z: Vec<f64> = (0..basis.num_nodes()).map(|_| rng.sample(StandardNormal)).collect();
    Ok(prec.chol.sample_from_standard(&z))
}

/// Urbanicity threshold such that the share of population in cells at or
/// above it is at least `urban_share`.
pub fn urban_threshold(population: &Raster, urbanicity: &Raster, urban_share: f64) -> f64 {
    let mut cells: Vec<(f64, f64)> = Vec::with_capacity(population.values.len());
    for row in 0..population.nrows {
        for col in 0..population.ncols {
            let Some(pop) = population.get(row, col) else { continue };
            if pop <= 0.0 {
                continue;
            }
            if let Some(u) = extract_point(urbanicity, &population.cell_center(row, col)) {
                cells.push((u, pop));
            }
        }
    }
    cells.sort_by(|a, b| b.0.total_cmp(&a.0));
    let total: f64 = cells.iter().map(|c| c.1).sum();
    let mut acc = 0.0;
    for (u, pop) in &cells {
        acc += pop;
        if acc >= urban_share * total {
            return *u;
        }
    }
    cells.last().map_or(0.0, |c| c.0)
}

pub const MAX_LOCATION_DRAWS: usize = 1_000_000;

/// Places clusters with probability proportional to `population`, uniformly
/// within the chosen cell, until exactly `urban_count` urban and
/// `rural_count` rural clusters are drawn. A cluster is urban iff the
/// urbanicity at its location is at least `threshold`.
pub fn sample_locations<R: Rng + ?Sized>(
    population: &Raster,
    urban_count: usize,
    rural_count: usize,
    urbanicity: &Raster,
    threshold: f64,
    rng: &mut R,
) -> Result<Vec<TrueLocation>> {
    let mut cumulative = Vec::with_capacity(population.values.len());
    let mut acc = 0.0;
    for &v in &population.values {
        if !population.is_nodata(v) && v > 0.0 {
            acc += v;
        }
        cumulative.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::InvalidInput("population raster has no positive cells".into()));
    }
    let mut out = Vec::with_capacity(urban_count + rural_count);
    let (mut urban, mut rural) = (0, 0);
    for _ in 0..MAX_LOCATION_DRAWS {
        if urban == urban_count && rural == rural_count {
            return Ok(out);
        }
        let u = rng.random::<f64>() * acc;
        let k = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
        let (row, col) = (k / population.ncols, k % population.ncols);
        let cs = population.cellsize;
        let x = population.xll + (col as f64 + rng.random::<f64>()) * cs;
        let y = population.ytop() - (row as f64 + rng.random::<f64>()) * cs;
        let p = PointKm::new(x, y);
        let is_urban = extract_point(urbanicity, &p).is_some_and(|v| v >= threshold);
        if is_urban && urban < urban_count {
            urban += 1;
            out.push(TrueLocation { location: p, urban: true });
        } else if !is_urban && rural < rural_count {
            rural += 1;
            out.push(TrueLocation { location: p, urban: false });
        }
    }
    if urban == urban_count && rural == rural_count {
        return Ok(out);
    }
    Err(Error::LocationSampling {
        urban: urban_count,
        rural: rural_count,
        draws: MAX_LOCATION_DRAWS,
    })
}

/// Independent `Binomial(n_c, r_c)` draws.
pub fn simulate_responses<R: Rng + ?Sized>(risk: &[f64], n: &[u32], rng: &mut R) -> Result<Vec<u32>> {
    if risk.len() != n.len() {
        return Err(Error::InvalidInput("risk and trial counts differ in length".into()));
    }
    risk.iter()
        .zip(n)
        .map(|(&r, &n)| {
            let d = Binomial::new(u64::from(n), r.clamp(0.0, 1.0)).map_err(|e| Error::InvalidInput(e.to_string()))?;
            Ok(d.sample(rng) as u32)
        })
        .collect()
}

/// `η(s) = x(s)ᵀβ + a(s)ᵀw` with point-extracted covariates.
pub fn true_eta(landscape: &Landscape, basis: &SpatialBasis, w: &[f64], beta: &[f64], p: &PointKm) -> Option<f64> {
    let a = project_point(&basis.mesh, p)?;
    let row = landscape.covariates.design_row(p, None)?;
    Some(a.iter().map(|&(i, v)| v * w[i]).sum::<f64>() + row.iter().zip(beta).map(|(x, b)| x * b).sum::<f64>())
}

/// One simulated survey.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub true_locations: Vec<TrueLocation>,
    pub data: Dataset,
    pub w: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Shared inputs of a scenario.
pub struct ScenarioContext<'a> {
    pub config: &'a ScenarioConfig,
    pub landscape: &'a Landscape,
    pub basis: SpatialBasis,
    pub threshold: f64,
    pub eval_points: Vec<PointKm>,
    pub fixed: Option<Vec<TrueLocation>>,
}

impl<'a> ScenarioContext<'a> {
    pub fn new(config: &'a ScenarioConfig, landscape: &'a Landscape) -> Result<Self> {
        config.validate()?;
        let mesh = build_mesh(
            &landscape.domain,
            config.mesh.max_edge_interior,
            config.mesh.max_edge_exterior,
            config.mesh.extension,
        )?;
        let basis = SpatialBasis::new(mesh)?;
        let share = config.urban as f64 / config.clusters() as f64;
        let threshold = urban_threshold(&landscape.population, &landscape.urbanicity, share);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let bbox = landscape.domain.bbox();
        let mut eval_points = Vec::with_capacity(config.eval_locations);
        while eval_points.len() < config.eval_locations {
            let p = PointKm::new(
                rng.random_range(bbox.min.x..bbox.max.x),
                rng.random_range(bbox.min.y..bbox.max.y),
            );
            if landscape.domain.contains(&p) {
                eval_points.push(p);
            }
        }
        let fixed = match (&config.locations, config.fixed_locations) {
            (Some(l), _) => Some(l.clone()),
            (None, true) => Some(sample_locations(
                &landscape.population,
                config.urban,
                config.rural,
                &landscape.urbanicity,
                threshold,
                &mut rng,
            )?),
            (None, false) => None,
        };
        Ok(ScenarioContext {
            config,
            landscape,
            basis,
            threshold,
            eval_points,
            fixed,
        })
    }

    fn replicate_rng(&self, b: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(b as u64 + 1);
        rng
    }

    /// Generates the field, locations, responses and jittered coordinates of
    /// replicate `b`.
    pub fn simulate(&self, b: usize) -> Result<SyntheticDataset> {
        let cfg = self.config;
        let mut rng = self.replicate_rng(b);
        let beta = cfg.true_beta();
        let w = simulate_field(&self.basis, &cfg.theta, &mut rng)?;
        let true_locations = match &self.fixed {
            Some(l) => l.clone(),
            None => sample_locations(
                &self.landscape.population,
                cfg.urban,
                cfg.rural,
                &self.landscape.urbanicity,
                self.threshold,
                &mut rng,
            )?,
        };
        let n: Vec<u32> = match &cfg.n_list {
            Some(n) => n.clone(),
            None => (0..true_locations.len())
                .map(|_| rng.random_range(cfg.trials.0..=cfg.trials.1))
                .collect(),
        };
        let risk = true_locations
            .iter()
            .map(|t| {
                true_eta(self.landscape, &self.basis, &w, &beta, &t.location)
                    .map(inv_logit)
                    .ok_or_else(|| Error::InvalidInput("true location has no covariates".into()))
            })
            .collect::<Result<Vec<f64>>>()?;
        let y = simulate_responses(&risk, &n, &mut rng)?;
        let mut clusters = Vec::with_capacity(true_locations.len());
        for (c, t) in true_locations.iter().enumerate() {
            let obs = sample_jitter(&t.location, t.urban, &self.landscape.admin, &cfg.jitter, &mut rng)?;
            clusters.push(Cluster {
                id: format!("c{c}"),
                location: obs,
                y: y[c],
                n: n[c],
                urban: t.urban,
                admin: self.landscape.admin.region_of(&t.location),
            });
        }
        Ok(SyntheticDataset {
            true_locations,
            data: Dataset::new(clusters)?,
            w,
            beta,
        })
    }

    fn run_replicate(&self, b: usize) -> (Vec<ReplicateRecord>, Option<Dataset>) {
        let cfg = self.config;
        let failed = |mode: ModelMode, msg: String| ReplicateRecord {
            replicate: b,
            model: mode,
            rho: f64::NAN,
            sigma2: f64::NAN,
            beta: Vec::new(),
            pred_rmse: f64::NAN,
            pred_crps: f64::NAN,
            outer_evaluations: 0,
            error: Some(msg),
        };
        let sim = match self.simulate(b) {
            Ok(s) => s,
            Err(e) => return (cfg.models.iter().map(|&m| failed(m, e.to_string())).collect(), None),
        };
        let truth: Vec<Option<f64>> = self
            .eval_points
            .iter()
            .map(|p| true_eta(self.landscape, &self.basis, &sim.w, &sim.beta, p))
            .collect();
        let mut records = Vec::with_capacity(cfg.models.len());
        for &mode in &cfg.models {
            let spec = cfg.model_spec(mode);
            let result = fit(&sim.data, &spec, &self.basis, &self.landscape.covariates, &self.landscape.admin).and_then(|f| {
                let pred = predict(&f, &self.basis, &self.landscape.covariates, &self.eval_points, &PosteriorSamples::default())?;
                let (mut m, mut s, mut t) = (Vec::new(), Vec::new(), Vec::new());
                for i in 0..self.eval_points.len() {
                    if let (false, Some(tr)) = (pred.missing[i], truth[i]) {
                        m.push(pred.eta_mean[i]);
                        s.push(pred.eta_sd[i]);
                        t.push(tr);
                    }
                }
                let scores = prediction_scores(&m, &s, &t)?;
                Ok((f, scores))
            });
            records.push(match result {
                Ok((f, scores)) => ReplicateRecord {
                    replicate: b,
                    model: mode,
                    rho: f.theta.rho(),
                    sigma2: f.theta.sigma2(),
                    beta: f.beta.iter().map(|s| s.mean).collect(),
                    pred_rmse: scores.rmse,
                    pred_crps: scores.crps,
                    outer_evaluations: f.diagnostics.outer_evaluations,
                    error: None,
                },
                Err(e) => {
                    log::warn!("replicate {b}, {mode}: fit failed: {e}");
                    failed(mode, e.to_string())
                }
            });
        }
        (records, cfg.keep_datasets.then_some(sim.data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub model: ModelMode,
    pub rho: f64,
    pub sigma2: f64,
    /// Intercept first.
    pub beta: Vec<f64>,
    pub pred_rmse: f64,
    pub pred_crps: f64,
    pub outer_evaluations: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub name: String,
    pub parameter_names: Vec<String>,
    pub truth: Vec<f64>,
    pub records: Vec<ReplicateRecord>,
    pub table: ScoreTable,
    #[serde(skip)]
    pub datasets: Vec<Dataset>,
}

impl ScenarioResult {
    pub fn records_for(&self, mode: ModelMode) -> impl Iterator<Item = &ReplicateRecord> {
        self.records.iter().filter(move |r| r.model == mode)
    }

    /// Per-replicate estimates and scores as CSV.
    pub fn records_csv(&self) -> String {
        let mut out = String::from("replicate,model");
        for n in &self.parameter_names {
            let _ = write!(out, ",{n}");
        }
        out.push_str(",pred_rmse_logit,pred_crps_logit,outer_evaluations,error\n");
        for r in &self.records {
            let _ = write!(out, "{},{}", r.replicate, r.model.label());
            let mut values = vec![r.rho, r.sigma2];
            values.extend(&r.beta);
            values.resize(self.parameter_names.len(), f64::NAN);
            for v in values {
                let _ = write!(out, ",{v}");
            }
            let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            let _ = writeln!(out, ",{},{},{},{err}", r.pred_rmse, r.pred_crps, r.outer_evaluations);
        }
        out
    }
}

fn score_table(name: &str, names: &[String], truth: &[f64], models: &[ModelMode], records: &[ReplicateRecord]) -> Result<ScoreTable> {
    let mut table = ScoreTable {
        title: format!("{name}: bias and RMSE of estimates (rho in km, others on the logit scale); predictive scores of eta"),
        models: Vec::new(),
    };
    for &mode in models {
        let ok: Vec<&ReplicateRecord> = records.iter().filter(|r| r.model == mode && r.error.is_none()).collect();
        let failures = records.iter().filter(|r| r.model == mode && r.error.is_some()).count();
        if ok.is_empty() {
            continue;
        }
        let mut parameters = Vec::new();
        for (j, pname) in names.iter().enumerate() {
            let est: Vec<f64> = ok
                .iter()
                .map(|r| match j {
                    0 => r.rho,
                    1 => r.sigma2,
                    _ => r.beta[j - 2],
                })
                .collect();
            let (bias, rmse) = bias_rmse(&est, truth[j])?;
            parameters.push(ParameterScore {
                parameter: pname.clone(),
                truth: truth[j],
                bias,
                rmse,
            });
        }
        let k = ok.len() as f64;
        table.models.push(ModelScores {
            model: mode.label().to_string(),
            fits: ok.len(),
            failures,
            parameters,
            prediction: PredictionScores {
                rmse: ok.iter().map(|r| r.pred_rmse).sum::<f64>() / k,
                crps: ok.iter().map(|r| r.pred_crps).sum::<f64>() / k,
            },
        });
    }
    Ok(table)
}

/// Runs every replicate of `config`, fitting each model mode. Replicates are
/// independent with seed-derived streams, so the result does not depend on
/// scheduling. Fails when more than 20% of fits fail.
pub fn run_scenario(config: &ScenarioConfig, landscape: &Landscape) -> Result<ScenarioResult> {
    let ctx = ScenarioContext::new(config, landscape)?;
    let outputs: Vec<(Vec<ReplicateRecord>, Option<Dataset>)> =
        (0..config.replicates).into_par_iter().map(|b| ctx.run_replicate(b)).collect();
    let mut records = Vec::new();
    let mut datasets = Vec::new();
    for (r, d) in outputs {
        records.extend(r);
        datasets.extend(d);
    }
    let total = records.len();
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    if failed * 5 > total {
        return Err(Error::ScenarioFailed { failed, total });
    }
    let mut parameter_names = vec!["rho".to_string(), "sigma2".to_string()];
    parameter_names.extend(effect_names(&landscape.covariates));
    let mut truth = vec![config.theta.rho(), config.theta.sigma2()];
    truth.extend(config.true_beta());
    let table = score_table(&config.name, &parameter_names, &truth, &config.models, &records)?;
    Ok(ScenarioResult {
        name: config.name.clone(),
        parameter_names,
        truth,
        records,
        table,
        datasets,
    })
}
