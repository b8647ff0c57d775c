//! Acceptance criteria 1 to 9. Runs without the libtest harness so every
//! criterion prints one PASS/FAIL line; exits nonzero if any fails.

mod common;

use std::time::Instant;

use geojitter::evaluate::crps_gaussian;
use geojitter::fem::project_point;
use geojitter::geometry::PointKm;
use geojitter::inference::{
    build_model, fit, laplace_objective, InnerSettings, LatentModel, ModelMode, ModelSpec,
    ObservationModel, SpatialBasis,
};
use geojitter::jitter::{cluster_design, jitter_logdensity, point_design, sample_jitter, AdminMap, IntegrationSettings, JitterScheme};
use geojitter::mesh::build_mesh;
use geojitter::simulate::{run_scenario, Landscape, ScenarioConfig, ScenarioResult, SignalLevel};
use geojitter::spde::{matern_correlation, pc_prior_logdensity, Hyperparameters, PcPriorConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, Discrete, Normal};

use common::derivatives::derivative_errors;

/// Scenario seed for the desk-scale runs. Landscape and model defaults were
/// tuned on seed 7; this one was not looked at beforehand.
const DESK_SEED: u64 = 2024;
const DESK_REPLICATES: usize = 20;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Covariance of the field at `a` and `b` under precision `Q`, with both
/// points interpolated by the piecewise-linear basis.
fn field_covariance(basis: &SpatialBasis, solve: &dyn Fn(&[f64]) -> Vec<f64>, a: &PointKm, b: &PointKm) -> f64 {
    let m = basis.num_nodes();
    let mut ea = vec![0.0; m];
    for (i, w) in project_point(&basis.mesh, a).unwrap() {
        ea[i] += w;
    }
    let col = solve(&ea);
    project_point(&basis.mesh, b).unwrap().iter().map(|&(i, w)| w * col[i]).sum()
}

fn criterion_1() -> Outcome {
    let (sigma2, rho) = (1.65, 107.68);
    let domain = common::square(400.0);
    let mesh = build_mesh(&domain, 10.0, 25.0, 1.5 * rho).unwrap();
    let basis = SpatialBasis::new(mesh).unwrap();
    let prec = basis.operator.precision(&Hyperparameters::from_natural(sigma2, rho)).unwrap();
    let solve = |b: &[f64]| prec.chol.solve(b);
    let c = PointKm::new(200.0, 200.0);
    let var_c = field_covariance(&basis, &solve, &c, &c);
    let mut corrs = Vec::new();
    for (dx, dy) in [(rho, 0.0), (-rho, 0.0), (0.0, rho), (0.0, -rho)] {
        let p = PointKm::new(c.x + dx, c.y + dy);
        let cov = field_covariance(&basis, &solve, &c, &p);
        let var_p = field_covariance(&basis, &solve, &p, &p);
        corrs.push(cov / (var_c * var_p).sqrt());
    }
    let target = matern_correlation(rho, rho);
    let corr_ok = corrs.iter().all(|r| (r - 0.139).abs() <= 0.04);
    let var_ok = (var_c / sigma2 - 1.0).abs() <= 0.15;
    outcome(
        corr_ok && var_ok,
        format!(
            "corr at lag rho = {:?} (Matern {target:.4}, need 0.139 +- 0.04); variance {var_c:.4} vs {sigma2} ({:+.1}%, need +-15%); {} nodes",
            corrs.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>(),
            100.0 * (var_c / sigma2 - 1.0),
            basis.num_nodes()
        ),
    )
}

/// Chi-squared statistic of sampled displacements on a distance × angle
/// grid, with cell probabilities from integrating the density.
fn jitter_gof(urban: bool, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let scheme = JitterScheme::default();
    let admin = AdminMap::unconstrained();
    let s_true = PointKm::new(0.0, 0.0);
    let (nd, na) = (20, 8);
    let d_max = scheme.max_radius(urban);
    let n = 100_000;
    let mut counts = vec![0usize; nd * na];
    let mut tail = 0usize;
    for _ in 0..n {
        let s = sample_jitter(&s_true, urban, &admin, &scheme, rng).unwrap();
        let d = s.distance(&s_true);
        if d > 5.0 {
            tail += 1;
        }
        let a = s.y.atan2(s.x).rem_euclid(2.0 * std::f64::consts::PI);
        let i = ((d / d_max * nd as f64) as usize).min(nd - 1);
        let j = ((a / (2.0 * std::f64::consts::PI) * na as f64) as usize).min(na - 1);
        counts[i * na + j] += 1;
    }
    // midpoint rule in polar coordinates: density × r dr dφ
    let (sub_r, sub_a) = (200, 4);
    let dr = d_max / nd as f64;
    let da = 2.0 * std::f64::consts::PI / na as f64;
    let mut stat = 0.0;
    for i in 0..nd {
        for j in 0..na {
            let mut mass = 0.0;
            for u in 0..sub_r {
                let r = (i as f64 + (u as f64 + 0.5) / sub_r as f64) * dr;
                for v in 0..sub_a {
                    let phi = (j as f64 + (v as f64 + 0.5) / sub_a as f64) * da;
                    let s = PointKm::new(r * phi.cos(), r * phi.sin());
                    mass += jitter_logdensity(&s, &s_true, urban, &admin, &scheme).exp() * r;
                }
            }
            let expected = n as f64 * mass * (dr / sub_r as f64) * (da / sub_a as f64);
            stat += (counts[i * na + j] as f64 - expected).powi(2) / expected;
        }
    }
    let p = 1.0 - ChiSquared::new((nd * na - 1) as f64).unwrap().cdf(stat);
    (p, tail as f64 / n as f64)
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (p_urban, _) = jitter_gof(true, &mut rng);
    let (p_rural, tail) = jitter_gof(false, &mut rng);
    let pass = p_urban > 0.001 && p_rural > 0.001 && (tail - 0.005).abs() <= 0.003;
    outcome(
        pass,
        format!("chi2 p urban {p_urban:.4}, rural {p_rural:.4} (need > 0.001); rural P(d > 5 km) = {tail:.5} (need 0.005 +- 0.003)"),
    )
}

fn criterion_3() -> Outcome {
    let scheme = JitterScheme::default();
    let settings = IntegrationSettings::default();
    let admin = AdminMap::unconstrained();
    let s_obs = PointKm::new(3.0, -2.0);
    let eta = |p: &PointKm| -1.0 + 0.5 * (p.x / 4.0).sin() + 0.5 * (p.y / 6.0).cos();
    // y = 5 of n = 20
    let lik = |p: &PointKm| Binomial::new(1.0 / (1.0 + (-eta(p)).exp()), 20).unwrap().pmf(5);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut parts = Vec::new();
    let mut pass = true;
    for urban in [true, false] {
        let design = cluster_design(&s_obs, urban, &admin, &scheme, &settings).unwrap();
        let quad: f64 = design.points.iter().zip(&design.weights).map(|(p, w)| w * lik(p)).sum();
        let draws = 1_000_000;
        let mc = (0..draws)
            .map(|_| lik(&sample_jitter(&s_obs, urban, &admin, &scheme, &mut rng).unwrap()))
            .sum::<f64>()
            / draws as f64;
        let rel = (quad - mc).abs() / mc;
        let expected_points = if urban { 76 } else { 151 };
        pass &= design.len() == expected_points && rel < 0.02;
        parts.push(format!(
            "{}: {} points (need {expected_points}), quadrature {quad:.6} vs Monte Carlo {mc:.6} (rel {rel:.4}, need < 0.02)",
            if urban { "urban" } else { "rural" },
            design.len()
        ));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_4() -> Outcome {
    let toy = common::toy(30, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let theta = Hyperparameters::from_natural(1.2, 20.0);
    let mut worst = Vec::new();
    let mut pass = true;
    for mode in ModelMode::ALL {
        let model = build_model(&toy.data, &ModelSpec::new(mode), &toy.basis, &toy.covariates, &toy.admin).unwrap();
        let prior = model.prior(&theta).unwrap();
        let (mut g, mut h) = (0.0f64, 0.0f64);
        for _ in 0..3 {
            let x = common::random_state(model.dim(), 1.0, &mut rng);
            let (eg, eh) = derivative_errors(&model, &prior, &x);
            g = g.max(eg);
            h = h.max(eh);
        }
        pass &= g < 1e-4 && h < 1e-4;
        worst.push(format!("{mode}: grad {g:.2e}, hess {h:.2e}"));
    }
    outcome(pass, format!("max relative errors {} (need < 1e-4)", worst.join(", ")))
}

fn criterion_5() -> Outcome {
    let toy = common::toy(40, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = 0.3;
    let v_beta = 25.0;
    let response: Vec<f64> = (0..toy.data.len()).map(|_| rng.random_range(-2.0..2.0)).collect();
    let locations = toy.data.locations();
    let design = point_design(&locations, &toy.data.urban_flags());
    let p = 1 + toy.covariates.len();
    let model = LatentModel::new(
        &toy.basis,
        &toy.data,
        &design,
        p,
        |s| toy.covariates.design_row(s, None),
        v_beta,
        ObservationModel::Gaussian {
            response: response.clone(),
            variance: noise,
        },
    )
    .unwrap();
    let theta = Hyperparameters::from_natural(1.5, 25.0);
    let prior_cfg = PcPriorConfig::default();
    let (objective, mode) =
        laplace_objective(&model, &theta, &prior_cfg, &vec![0.0; model.dim()], &InnerSettings::default()).unwrap();
    let neg_log_marginal = objective + pc_prior_logdensity(&theta, &prior_cfg);

    // dense oracle: z = H x + e with x ~ N(0, P⁻¹), e ~ N(0, noise I)
    let m = toy.basis.num_nodes();
    let d = m + p;
    let q = model.prior(&theta).unwrap().q.to_dense();
    let mut prior_prec = DMatrix::zeros(d, d);
    for i in 0..m {
        for j in 0..m {
            prior_prec[(i, j)] = q[i][j];
        }
    }
    for j in m..d {
        prior_prec[(j, j)] = 1.0 / v_beta;
    }
    let c = locations.len();
    let mut h = DMatrix::zeros(c, d);
    for (r, s) in locations.iter().enumerate() {
        for (i, w) in project_point(&toy.basis.mesh, s).unwrap() {
            h[(r, i)] += w;
        }
        for (j, v) in toy.covariates.design_row(s, None).unwrap().into_iter().enumerate() {
            h[(r, m + j)] = v;
        }
    }
    let z = DVector::from_vec(response);
    let post_prec = &prior_prec + h.transpose() * &h / noise;
    let post_cov = post_prec.clone().try_inverse().unwrap();
    let post_mean = &post_cov * h.transpose() * &z / noise;
    let prior_cov = prior_prec.try_inverse().unwrap();
    let s = &h * prior_cov * h.transpose() + DMatrix::identity(c, c) * noise;
    let s_chol = s.cholesky().unwrap();
    let quad = z.dot(&s_chol.solve(&z));
    let log_det: f64 = 2.0 * s_chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let exact = 0.5 * quad + 0.5 * log_det + 0.5 * c as f64 * (2.0 * std::f64::consts::PI).ln();

    let mut mean_err = 0.0f64;
    let mut sd_err = 0.0f64;
    for j in 0..p {
        mean_err = mean_err.max((mode.x[m + j] - post_mean[m + j]).abs());
        let sd = mode.hessian.inverse_diagonal_entry(m + j).sqrt();
        sd_err = sd_err.max((sd - post_cov[(m + j, m + j)].sqrt()).abs());
    }
    let ml_err = (neg_log_marginal - exact).abs();
    outcome(
        mean_err < 1e-6 && sd_err < 1e-6 && ml_err < 1e-6,
        format!("beta mean err {mean_err:.2e}, sd err {sd_err:.2e}, -log marginal {neg_log_marginal:.8} vs {exact:.8} (err {ml_err:.2e}); need < 1e-6"),
    )
}

fn desk(level: SignalLevel) -> (ScenarioResult, f64) {
    let start = Instant::now();
    let config = ScenarioConfig::desk(level, DESK_REPLICATES, DESK_SEED);
    let landscape = Landscape::generate(&config.landscape).unwrap();
    let result = run_scenario(&config, &landscape).unwrap();
    println!("{}", result.table.to_text());
    (result, start.elapsed().as_secs_f64())
}

fn score(r: &ScenarioResult, model: &str, parameter: &str) -> (f64, f64) {
    let p = r.table.model(model).unwrap().parameter(parameter).unwrap();
    (p.bias, p.rmse)
}

fn criterion_6(med: &ScenarioResult, high: &ScenarioResult) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in [med, high] {
        let (un_rho, _) = score(r, "UnAdj", "rho");
        let (full_rho, _) = score(r, "FullAdj", "rho");
        let (_, un_urb) = score(r, "UnAdj", "UrbR");
        let (_, full_urb) = score(r, "FullAdj", "UrbR");
        let a = un_rho < 0.0 && full_rho.abs() < un_rho.abs();
        let b = full_urb < un_urb;
        pass &= a && b;
        parts.push(format!(
            "{}: (a) bias rho UnAdj {un_rho:.2} FullAdj {full_rho:.2} [{}], (b) RMSE UrbR UnAdj {un_urb:.3} FullAdj {full_urb:.3} [{}]",
            r.name,
            if a { "ok" } else { "FAIL" },
            if b { "ok" } else { "FAIL" }
        ));
    }
    let un = high.table.model("UnAdj").unwrap().prediction.crps;
    let full = high.table.model("FullAdj").unwrap().prediction.crps;
    let c = full <= un;
    pass &= c;
    parts.push(format!("(c) SignalHigh CRPS UnAdj {un:.4} FullAdj {full:.4} [{}]", if c { "ok" } else { "FAIL" }));
    outcome(pass, parts.join("; "))
}

fn criterion_7() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..3 {
        let toy = common::toy(40, 70 + seed);
        let fits: Vec<_> = [ModelMode::UnAdj, ModelMode::FullAdj]
            .into_iter()
            .map(|mode| {
                let mut spec = ModelSpec::new(mode);
                spec.jitter = JitterScheme::none();
                fit(&toy.data, &spec, &toy.basis, &toy.covariates, &toy.admin).unwrap()
            })
            .collect();
        let (a, b) = (&fits[0], &fits[1]);
        worst = worst
            .max((a.theta.log_sigma2 - b.theta.log_sigma2).abs())
            .max((a.theta.log_rho - b.theta.log_rho).abs());
        for (x, y) in a.beta.iter().zip(&b.beta) {
            worst = worst.max((x.mean - y.mean).abs());
        }
    }
    outcome(worst < 1e-4, format!("max |UnAdj - FullAdj| over log theta and beta on 3 datasets = {worst:.2e} (need < 1e-4)"))
}

/// `∫ (F(x) − 1{x ≥ y})² dx` by composite Simpson, split at `y`.
fn crps_integral(mean: f64, sd: f64, y: f64) -> f64 {
    let normal = Normal::new(mean, sd).unwrap();
    let lo = (mean - 14.0 * sd).min(y - sd);
    let hi = (mean + 14.0 * sd).max(y + sd);
    let simpson = |a: f64, b: f64, upper: bool| {
        let n = 20_000;
        let h = (b - a) / n as f64;
        let f = |x: f64| {
            let cdf = normal.cdf(x);
            if upper { (1.0 - cdf).powi(2) } else { cdf * cdf }
        };
        let mut s = f(a) + f(b);
        for k in 1..n {
            s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    simpson(lo, y, false) + simpson(y, hi, true)
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mean = rng.random_range(-5.0..5.0);
        let sd = rng.random_range(0.05..3.0);
        let y = mean + sd * rng.random_range(-6.0..6.0);
        let closed = crps_gaussian(mean, sd, y).unwrap();
        worst = worst.max((closed - crps_integral(mean, sd, y)).abs());
    }
    outcome(worst < 1e-6, format!("max |closed form - quadrature| over 100 cases = {worst:.2e} (need < 1e-6)"))
}

fn criterion_9(high: &ScenarioResult) -> Outcome {
    let (un, _) = score(high, "UnAdj", "UrbR");
    let (sm, _) = score(high, "Smoothed", "UrbR");
    outcome(
        un.signum() != sm.signum() && un != 0.0 && sm != 0.0,
        format!("SignalHigh bias UrbR: UnAdj {un:+.3}, Smoothed {sm:+.3} (need opposite signs)"),
    )
}

fn main() {
    // `cargo test -- <filter>` passes arguments; run everything regardless
    let mut lines = Vec::new();
    let mut run = |n: usize, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let line = format!(
            "criterion {n}: {} ({:.1} s) {}",
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
        println!("{line}");
        lines.push((o.pass, line));
    };
    run(1, &mut criterion_1);
    run(2, &mut criterion_2);
    run(3, &mut criterion_3);
    run(4, &mut criterion_4);
    run(5, &mut criterion_5);
    let (med, t_med) = desk(SignalLevel::Med);
    let (high, t_high) = desk(SignalLevel::High);
    println!("desk-scale runs: SignalMed {t_med:.0} s, SignalHigh {t_high:.0} s, seed {DESK_SEED}, {DESK_REPLICATES} replicates");
    run(6, &mut || criterion_6(&med, &high));
    run(7, &mut criterion_7);
    run(8, &mut criterion_8);
    run(9, &mut || criterion_9(&high));

    println!("\nacceptance summary");
    for (_, line) in &lines {
        println!("{line}");
    }
    let failed = lines.iter().filter(|(p, _)| !p).count();
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
    println!("all 9 criteria passed");
}
