mod common;

use geojitter::geometry::{PointKm, Polygon};
use geojitter::inference::{build_model, fit, inner_mode, Cluster, Dataset, ModelMode, ModelSpec, SpatialBasis};
use geojitter::jitter::{sample_jitter, AdminMap, JitterScheme};
use geojitter::mesh::build_mesh;
use geojitter::raster::{CovariateSet, Raster, TransformKind};
use geojitter::spde::Hyperparameters;
use geojitter::special::inv_logit;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use common::derivatives::derivative_errors;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn derivatives_match_finite_differences(
        seed in 0u64..1000,
        log_sigma2 in -2.0f64..1.5,
        rho in 8.0f64..60.0,
        scale in 0.1f64..2.0,
    ) {
        let toy = common::toy(12, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = Hyperparameters::new(log_sigma2, rho.ln());
        for mode in ModelMode::ALL {
            let model = build_model(&toy.data, &ModelSpec::new(mode), &toy.basis, &toy.covariates, &toy.admin).unwrap();
            let prior = model.prior(&theta).unwrap();
            let x = common::random_state(model.dim(), scale, &mut rng);
            let (g, h) = derivative_errors(&model, &prior, &x);
            prop_assert!(g < 1e-4 && h < 1e-4, "{mode}: grad {g:e}, hess {h:e}");
        }
    }
}

#[test]
fn doubling_integration_resolution_barely_moves_the_likelihood() {
    let toy = common::toy(40, 11);
    let theta = Hyperparameters::from_natural(1.0, 25.0);
    let mut spec = ModelSpec::new(ModelMode::FullAdj);
    let loglik_at_mode = |spec: &ModelSpec| {
        let model = build_model(&toy.data, spec, &toy.basis, &toy.covariates, &toy.admin).unwrap();
        let prior = model.prior(&theta).unwrap();
        let mode = inner_mode(&model, &prior, &vec![0.0; model.dim()], &spec.inner).unwrap();
        model.neg_log_likelihood(&mode.x).unwrap()
    };
    let coarse = loglik_at_mode(&spec);
    spec.integration = spec.integration.refined();
    let fine = loglik_at_mode(&spec);
    let rel = (coarse - fine).abs() / fine.abs();
    assert!(rel < 0.005, "coarse {coarse}, fine {fine}, relative change {rel}");
}

#[test]
fn zero_radius_jitter_makes_fulladj_equal_unadj() {
    let toy = common::toy(30, 12);
    let fits: Vec<_> = [ModelMode::UnAdj, ModelMode::FullAdj]
        .into_iter()
        .map(|mode| {
            let mut spec = ModelSpec::new(mode);
            spec.jitter = JitterScheme::none();
            fit(&toy.data, &spec, &toy.basis, &toy.covariates, &toy.admin).unwrap()
        })
        .collect();
    assert!((fits[0].theta.log_rho - fits[1].theta.log_rho).abs() < 1e-4);
    assert!((fits[0].theta.log_sigma2 - fits[1].theta.log_sigma2).abs() < 1e-4);
    for (a, b) in fits[0].beta.iter().zip(&fits[1].beta) {
        assert!((a.mean - b.mean).abs() < 1e-4, "{}: {} vs {}", a.name, a.mean, b.mean);
    }
}

#[test]
fn fits_are_reproducible_and_record_round_trips() {
    let toy = common::toy(30, 13);
    let spec = ModelSpec::new(ModelMode::FullAdj);
    let a = fit(&toy.data, &spec, &toy.basis, &toy.covariates, &toy.admin).unwrap();
    let b = fit(&toy.data, &spec, &toy.basis, &toy.covariates, &toy.admin).unwrap();
    assert_eq!(a.record(), b.record());
    let text = a.record().to_json().unwrap();
    let back = geojitter::inference::FitRecord::from_json(&text).unwrap();
    assert_eq!(back, a.record());
    assert!(a.diagnostics.outer_evaluations > 0);
    assert!(a.beta.iter().all(|s| s.sd > 0.0 && (s.upper - s.lower - 2.0 * s.half_width).abs() < 1e-12));
}

#[test]
fn clusters_with_no_trials_are_excluded() {
    let toy = common::toy(20, 14);
    let mut clusters = toy.data.clusters().to_vec();
    clusters[3].n = 0;
    clusters[3].y = 0;
    let data = Dataset::new(clusters).unwrap();
    let mut spec = ModelSpec::new(ModelMode::UnAdj);
    spec.fixed_theta = Some(Hyperparameters::from_natural(1.0, 20.0));
    let f = fit(&data, &spec, &toy.basis, &toy.covariates, &toy.admin).unwrap();
    assert_eq!(f.diagnostics.excluded_clusters, vec!["c3".to_string()]);
}

/// A covariate varying on a scale comparable to the jitter: regression
/// dilution pulls the UnAdj slope toward zero, FullAdj recovers it.
#[test]
fn fulladj_recovers_slope_of_fine_scale_covariate() {
    let side = 200.0;
    let wavelength = 12.0;
    let k = 2.0 * std::f64::consts::PI / wavelength;
    let domain = Polygon::rectangle(0.0, 0.0, side, side).unwrap();
    let raster = Raster::from_fn(400, 400, 0.0, 0.0, 0.5, |p| 0.7 * ((k * p.x).sin() + (k * p.y).cos()));
    let covariates = CovariateSet::from_raw(vec![("wave".into(), raster, TransformKind::None)]).unwrap();
    let basis = SpatialBasis::new(build_mesh(&domain, 40.0, 80.0, 100.0).unwrap()).unwrap();
    let admin = AdminMap::unconstrained();
    let scheme = JitterScheme::default();
    let (intercept, slope) = (-0.5, 1.5);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut estimates = [Vec::new(), Vec::new()];
    for _ in 0..4 {
        let clusters = (0..400)
            .map(|c| {
                let s = PointKm::new(rng.random_range(15.0..185.0), rng.random_range(15.0..185.0));
                let eta = intercept + slope * covariates.design_row(&s, None).unwrap()[1];
                let y = Binomial::new(30, inv_logit(eta)).unwrap().sample(&mut rng) as u32;
                let obs = sample_jitter(&s, false, &admin, &scheme, &mut rng).unwrap();
                Cluster {
                    id: format!("c{c}"),
                    location: obs,
                    y,
                    n: 30,
                    urban: false,
                    admin: None,
                }
            })
            .collect();
        let data = Dataset::new(clusters).unwrap();
        for (i, mode) in [ModelMode::UnAdj, ModelMode::FullAdj].into_iter().enumerate() {
            let mut spec = ModelSpec::new(mode);
            // a negligible field isolates the fixed effects
            spec.fixed_theta = Some(Hyperparameters::new(-12.0, 4.0));
            let f = fit(&data, &spec, &basis, &covariates, &admin).unwrap();
            estimates[i].push(f.beta[1].mean);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (unadj, fulladj) = (mean(&estimates[0]), mean(&estimates[1]));
    assert!(unadj < 0.8, "UnAdj slope {unadj} should be attenuated");
    assert!((fulladj - slope).abs() < 0.25, "FullAdj slope {fulladj} vs {slope}");
}
