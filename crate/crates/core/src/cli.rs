//! Command-line front end. `run_from` parses arguments, runs one subcommand
//! and maps failures to a single-line diagnostic and an exit code.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::evaluate::{bias_rmse, prediction_scores, ModelScores, ParameterScore, PredictionScores, ScoreTable};
use crate::geometry::{PointKm, Polygon};
use crate::inference::{aggregate, build_model, effect_names, fit, predict, FitRecord, ModelFit, ModelMode, ModelSpec, SpatialBasis};
use crate::io::{read_clusters, write_atomic, write_clusters, KeyValueConfig};
use crate::jitter::AdminMap;
use crate::mesh::{build_mesh, TriangulationMesh};
use crate::raster::{read_raster, write_raster, CovariateSet, TransformKind};
use crate::simulate::{run_scenario, Landscape, ScenarioConfig};

#[derive(Debug, Parser)]
#[command(name = "geojitter", version, about = "Jitter-aware geostatistical inference for prevalence data")]
pub struct Cli {
    /// Seed for all randomness (overrides `seed` in a scenario config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// More log output on stderr (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Triangulate a domain polygon plus an extension band.
    Mesh(MeshArgs),
    /// Fit a model to cluster data and write the fit as JSON.
    Fit(FitArgs),
    /// Predict risk on a grid from a stored fit.
    Predict(PredictArgs),
    /// Run a simulation scenario.
    Simulate(SimulateArgs),
    /// Score estimates and predictions against known truth.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct MeshOptions {
    /// Maximum interior edge length (km).
    #[arg(long, default_value_t = 25.0)]
    pub max_edge: f64,
    /// Maximum edge length in the extension band (km).
    #[arg(long, default_value_t = 80.0)]
    pub max_edge_outer: f64,
    /// Width of the extension band (km).
    #[arg(long, default_value_t = 200.0)]
    pub extension: f64,
}

#[derive(Debug, Args)]
pub struct MeshArgs {
    #[arg(long)]
    pub domain: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub mesh: MeshOptions,
}

/// `NAME[:TRANSFORM]=PATH`.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterArg {
    pub name: String,
    pub transform: TransformKind,
    pub path: PathBuf,
}

impl FromStr for RasterArg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (lhs, path) = s.split_once('=').ok_or_else(|| format!("expected NAME[:TRANSFORM]=PATH, got `{s}`"))?;
        let (name, transform) = match lhs.split_once(':') {
            Some((n, t)) => (n, t.parse::<TransformKind>().map_err(|e| e.to_string())?),
            None => (lhs, TransformKind::Log1pStandardize),
        };
        if name.is_empty() || path.is_empty() {
            return Err(format!("expected NAME[:TRANSFORM]=PATH, got `{s}`"));
        }
        Ok(RasterArg {
            name: name.to_string(),
            transform,
            path: PathBuf::from(path),
        })
    }
}

/// Inputs shared by `fit` and `predict`.
#[derive(Debug, Args)]
pub struct ModelInputs {
    /// Cluster CSV: id,x_km,y_km,y,n,urban,admin_id.
    #[arg(long)]
    pub data: PathBuf,
    /// Domain polygon.
    #[arg(long)]
    pub domain: PathBuf,
    /// Mesh file; built from the domain when absent.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Covariate raster, repeatable, in design-column order.
    #[arg(long = "raster", value_name = "NAME[:TRANSFORM]=PATH")]
    pub rasters: Vec<RasterArg>,
    /// Admin regions constraining the jitter (unconstrained when absent).
    #[arg(long)]
    pub admin: Option<PathBuf>,
    #[command(flatten)]
    pub mesh_options: MeshOptions,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub inputs: ModelInputs,
    /// unadj, smoothed or fulladj; a `mode` key in --config wins.
    #[arg(long, default_value = "fulladj")]
    pub mode: String,
    /// Model settings, flat `key = value` file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the fixed-effect and hyperparameter table as CSV.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub inputs: ModelInputs,
    /// Fit JSON written by `fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// Prediction grid cell size (km).
    #[arg(long, default_value_t = 5.0)]
    pub grid: f64,
    /// Posterior draws for the risk summaries.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Population raster for areal aggregation (needs --admin and --areal).
    #[arg(long)]
    pub population: Option<PathBuf>,
    /// Output CSV for population-weighted region risks.
    #[arg(long)]
    pub areal: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario config, flat `key = value` file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Override the number of replicates.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Also write the synthetic rasters, domain and admin regions.
    #[arg(long)]
    pub write_landscape: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Long CSV with columns model,parameter,estimate,truth.
    #[arg(long)]
    pub estimates: PathBuf,
    /// CSV with columns model,mean,sd,truth (logit scale).
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Output table; CSV when the name ends in `.csv`, aligned text otherwise.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code. Diagnostics go to stderr as one line.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            // clap spreads one message over several lines before the usage block
            let text = e.to_string();
            let line: Vec<&str> = text
                .lines()
                .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect();
            eprintln!("{}", line.join(" "));
            return 2;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            1
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Mesh(a) => run_mesh(a),
        Command::Fit(a) => run_fit(a),
        Command::Predict(a) => run_predict(a, cli.seed.unwrap_or(1)),
        Command::Simulate(a) => run_simulate(a, cli.seed),
        Command::Evaluate(a) => run_evaluate(a),
    }
}

fn run_mesh(a: &MeshArgs) -> Result<()> {
    let domain = Polygon::read(&a.domain)?;
    let o = &a.mesh;
    let mesh = build_mesh(&domain, o.max_edge, o.max_edge_outer, o.extension)?;
    log::info!("mesh: {} nodes, {} triangles", mesh.num_nodes(), mesh.triangles().len());
    write_atomic(&a.out, mesh.to_text().as_bytes())
}

struct Inputs {
    data: crate::inference::Dataset,
    basis: SpatialBasis,
    covariates: CovariateSet,
    admin: AdminMap,
}

fn load_inputs(i: &ModelInputs) -> Result<Inputs> {
    let data = read_clusters(&i.data)?;
    let domain = Polygon::read(&i.domain)?;
    let mesh = match &i.mesh {
        Some(p) => TriangulationMesh::read(p, domain)?,
        None => build_mesh(&domain, i.mesh_options.max_edge, i.mesh_options.max_edge_outer, i.mesh_options.extension)?,
    };
    let raw = i
        .rasters
        .iter()
        .map(|r| Ok((r.name.clone(), read_raster(&r.path)?, r.transform)))
        .collect::<Result<Vec<_>>>()?;
    let covariates = CovariateSet::from_raw(raw)?;
    let admin = match &i.admin {
        Some(p) => AdminMap::read(p)?,
        None => AdminMap::unconstrained(),
    };
    Ok(Inputs {
        data,
        basis: SpatialBasis::new(mesh)?,
        covariates,
        admin,
    })
}

fn run_fit(a: &FitArgs) -> Result<()> {
    let mode: ModelMode = a.mode.parse()?;
    let spec = match &a.config {
        Some(p) => ModelSpec::from_kv(&KeyValueConfig::read(p)?, mode)?,
        None => ModelSpec::new(mode),
    };
    let inp = load_inputs(&a.inputs)?;
    let f = fit(&inp.data, &spec, &inp.basis, &inp.covariates, &inp.admin)?;
    log::info!(
        "{}: rho = {:.2} km, sigma2 = {:.3}, {} outer evaluations",
        spec.mode,
        f.theta.rho(),
        f.theta.sigma2(),
        f.diagnostics.outer_evaluations
    );
    if let Some(t) = &a.table {
        write_atomic(t, fit_table(&f).as_bytes())?;
    }
    write_atomic(&a.out, f.record().to_json()?.as_bytes())
}

/// Hyperparameters and fixed effects of a fit, one row each.
pub fn fit_table(f: &ModelFit) -> String {
    let mode = f.spec.mode.label();
    let mut out = String::from("mode,parameter,estimate,sd,lower95,upper95,unit\n");
    let _ = writeln!(out, "{mode},rho,{},,,,km", f.theta.rho());
    let _ = writeln!(out, "{mode},sigma2,{},,,,logit^2", f.theta.sigma2());
    for b in &f.beta {
        let _ = writeln!(out, "{mode},{},{},{},{},{},logit", b.name, b.mean, b.sd, b.lower, b.upper);
    }
    out
}

/// Cell centres of a `cell`-km grid over the domain's bounding box that fall
/// inside the domain, bottom row first.
pub fn prediction_grid(domain: &Polygon, cell: f64) -> Result<Vec<PointKm>> {
    if !(cell > 0.0) || !cell.is_finite() {
        return Err(Error::InvalidInput(format!("grid cell size must be positive, got {cell}")));
    }
    let bb = domain.bbox();
    let nx = ((bb.max.x - bb.min.x) / cell).ceil().max(1.0) as usize;
    let ny = ((bb.max.y - bb.min.y) / cell).ceil().max(1.0) as usize;
    let mut points = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let p = PointKm::new(bb.min.x + (i as f64 + 0.5) * cell, bb.min.y + (j as f64 + 0.5) * cell);
            if domain.contains(&p) {
                points.push(p);
            }
        }
    }
    Ok(points)
}

fn run_predict(a: &PredictArgs, seed: u64) -> Result<()> {
    let record = FitRecord::read(&a.fit)?;
    let inp = load_inputs(&a.inputs)?;
    let names = effect_names(&inp.covariates);
    let stored: Vec<&str> = record.beta.iter().map(|b| b.name.as_str()).collect();
    if stored != names.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::InvalidInput(format!(
            "fit has effects [{}] but the rasters give [{}]",
            stored.join(", "),
            names.join(", ")
        )));
    }
    let model = build_model(&inp.data, &record.spec, &inp.basis, &inp.covariates, &inp.admin)?;
    let f = ModelFit::from_record(record, &model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = f.sample(a.samples, &mut rng);
    let grid = prediction_grid(inp.basis.mesh.interior_domain(), a.grid)?;
    let s = predict(&f, &inp.basis, &inp.covariates, &grid, &samples)?;
    let mode = f.spec.mode.label();
    let mut out = String::from("mode,x_km,y_km,eta_mean_logit,eta_sd_logit,r_median,r_mean,r_cv\n");
    for i in 0..grid.len() {
        if s.missing[i] {
            continue;
        }
        let _ = writeln!(
            out,
            "{mode},{},{},{},{},{},{},{}",
            grid[i].x, grid[i].y, s.eta_mean[i], s.eta_sd[i], s.r_median[i], s.r_mean[i], s.r_cv[i]
        );
    }
    write_atomic(&a.out, out.as_bytes())?;

    match (&a.areal, &a.population) {
        (Some(path), Some(pop)) => {
            if a.inputs.admin.is_none() {
                return Err(Error::InvalidInput("--areal needs --admin".into()));
            }
            let population = read_raster(pop)?;
            let areas = aggregate(&f, &inp.basis, &inp.covariates, &samples, &inp.admin, &population)?;
            let mut out = String::from("mode,region,r_mean,r_cv,population_weight,pixels\n");
            for r in areas {
                let _ = writeln!(out, "{mode},{},{},{},{},{}", r.region, r.mean, r.cv, r.total_weight, r.pixels);
            }
            write_atomic(path, out.as_bytes())
        }
        (None, None) => Ok(()),
        _ => Err(Error::InvalidInput("--areal and --population go together".into())),
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn run_simulate(a: &SimulateArgs, seed: Option<u64>) -> Result<()> {
    let mut config = ScenarioConfig::from_kv(&KeyValueConfig::read(&a.config)?)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(r) = a.replicates {
        config.replicates = r;
        config.validate()?;
    }
    let landscape = Landscape::generate(&config.landscape)?;
    let result = run_scenario(&config, &landscape)?;
    create_dir(&a.out)?;
    let dir = &a.out;
    write_atomic(dir.join("records.csv"), result.records_csv().as_bytes())?;
    write_atomic(dir.join("estimates.csv"), estimates_csv(&result).as_bytes())?;
    write_atomic(dir.join("scores.txt"), result.table.to_text().as_bytes())?;
    write_atomic(dir.join("scores.csv"), result.table.to_csv().as_bytes())?;
    write_atomic(dir.join("result.json"), serde_json::to_string_pretty(&result)?.as_bytes())?;
    if config.keep_datasets {
        let ddir = dir.join("datasets");
        create_dir(&ddir)?;
        for (b, d) in result.datasets.iter().enumerate() {
            write_clusters(d, ddir.join(format!("replicate_{b:04}.csv")))?;
        }
    }
    if a.write_landscape {
        write_atomic(dir.join("domain.poly"), landscape.domain.to_text().as_bytes())?;
        write_atomic(dir.join("admin.txt"), landscape.admin.to_text().as_bytes())?;
        write_raster(&landscape.population, dir.join("population.asc"))?;
        write_raster(&landscape.urbanicity, dir.join("urbanicity.asc"))?;
        for c in landscape.covariates.covariates() {
            write_raster(&c.raster, dir.join(format!("covariate_{}.asc", c.name)))?;
        }
    }
    log::info!("{}", result.table.to_text());
    Ok(())
}

fn unit_of(parameter: &str) -> &'static str {
    match parameter {
        "rho" => "km",
        "sigma2" => "logit^2",
        _ => "logit",
    }
}

/// One row per replicate, model and parameter, readable by `evaluate`.
pub fn estimates_csv(result: &crate::simulate::ScenarioResult) -> String {
    let mut out = String::from("scenario,replicate,model,parameter,estimate,truth,unit\n");
    for r in result.records.iter().filter(|r| r.error.is_none()) {
        let mut values = vec![r.rho, r.sigma2];
        values.extend(&r.beta);
        for ((name, v), t) in result.parameter_names.iter().zip(values).zip(&result.truth) {
            let _ = writeln!(
                out,
                "{},{},{},{name},{v},{t},{}",
                result.name,
                r.replicate,
                r.model.label(),
                unit_of(name)
            );
        }
    }
    out
}

#[derive(Debug, Deserialize)]
struct EstimateRow {
    model: String,
    parameter: String,
    estimate: f64,
    truth: f64,
}

#[derive(Debug, Deserialize)]
struct PredictionRow {
    model: String,
    mean: f64,
    sd: f64,
    truth: f64,
}

fn read_csv_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    reader
        .deserialize::<T>()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::parse(path, i + 2, e.to_string())))
        .collect()
}

/// Bias/RMSE per model and parameter, and predictive scores when given.
/// Models and parameters keep their first-appearance order.
pub fn evaluate_tables(estimates: &Path, predictions: Option<&Path>) -> Result<ScoreTable> {
    let rows: Vec<EstimateRow> = read_csv_rows(estimates)?;
    let preds: Vec<PredictionRow> = match predictions {
        Some(p) => read_csv_rows(p)?,
        None => Vec::new(),
    };
    let mut models: Vec<String> = Vec::new();
    for m in rows.iter().map(|r| &r.model).chain(preds.iter().map(|r| &r.model)) {
        if !models.contains(m) {
            models.push(m.clone());
        }
    }
    let mut table = ScoreTable {
        title: format!("scores of {}", estimates.display()),
        models: Vec::new(),
    };
    for m in models {
        let mine: Vec<&EstimateRow> = rows.iter().filter(|r| r.model == m).collect();
        let mut params: Vec<&str> = Vec::new();
        for r in &mine {
            if !params.contains(&r.parameter.as_str()) {
                params.push(&r.parameter);
            }
        }
        let mut parameters = Vec::new();
        let mut fits = 0;
        for p in params {
            let sel: Vec<&&EstimateRow> = mine.iter().filter(|r| r.parameter == p).collect();
            let truth = sel[0].truth;
            if sel.iter().any(|r| r.truth != truth) {
                return Err(Error::InvalidInput(format!("model {m}, parameter {p}: truth differs between rows")));
            }
            let est: Vec<f64> = sel.iter().map(|r| r.estimate).collect();
            fits = fits.max(est.len());
            let (bias, rmse) = bias_rmse(&est, truth)?;
            parameters.push(ParameterScore {
                parameter: p.to_string(),
                truth,
                bias,
                rmse,
            });
        }
        let pm: Vec<&PredictionRow> = preds.iter().filter(|r| r.model == m).collect();
        let prediction = if pm.is_empty() {
            PredictionScores {
                rmse: f64::NAN,
                crps: f64::NAN,
            }
        } else {
            let mean: Vec<f64> = pm.iter().map(|r| r.mean).collect();
            let sd: Vec<f64> = pm.iter().map(|r| r.sd).collect();
            let truth: Vec<f64> = pm.iter().map(|r| r.truth).collect();
            prediction_scores(&mean, &sd, &truth)?
        };
        table.models.push(ModelScores {
            model: m,
            fits,
            failures: 0,
            parameters,
            prediction,
        });
    }
    Ok(table)
}

fn run_evaluate(a: &EvaluateArgs) -> Result<()> {
    let table = evaluate_tables(&a.estimates, a.predictions.as_deref())?;
    let text = if a.out.extension().is_some_and(|e| e == "csv") {
        table.to_csv()
    } else {
        table.to_text()
    };
    write_atomic(&a.out, text.as_bytes())
}
