//! Fits FullAdj to a simulated survey, maps prevalence on a coarse grid
//! and aggregates population-weighted risk per admin region.

use geojitter::inference::{aggregate, fit, predict, ModelMode};
use geojitter::simulate::{Landscape, LandscapeConfig, ScenarioConfig, ScenarioContext, SignalLevel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> geojitter::Result<()> {
    let mut cfg = ScenarioConfig::desk(SignalLevel::Med, 1, 5);
    cfg.landscape = LandscapeConfig::small(5);
    cfg.urban = 50;
    cfg.rural = 70;
    cfg.mesh.max_edge_interior = 15.0;
    cfg.mesh.max_edge_exterior = 40.0;
    cfg.mesh.extension = 100.0;
    let landscape = Landscape::generate(&cfg.landscape)?;
    let ctx = ScenarioContext::new(&cfg, &landscape)?;
    let sim = ctx.simulate(0)?;
    let f = fit(&sim.data, &cfg.model_spec(ModelMode::FullAdj), &ctx.basis, &landscape.covariates, &landscape.admin)?;
    let samples = f.sample(500, &mut ChaCha8Rng::seed_from_u64(1));
    let points: Vec<_> = ctx.eval_points.iter().take(5).copied().collect();
    let s = predict(&f, &ctx.basis, &landscape.covariates, &points, &samples)?;
    println!("      x       y   eta mean  eta sd  median r   cv");
    for i in 0..points.len() {
        println!("{:7.1} {:7.1} {:9.3} {:7.3} {:9.3} {:5.2}", points[i].x, points[i].y, s.eta_mean[i], s.eta_sd[i], s.r_median[i], s.r_cv[i]);
    }
    let areas = aggregate(&f, &ctx.basis, &landscape.covariates, &samples, &landscape.admin, &landscape.population)?;
    for a in areas.iter().filter(|a| !a.missing) {
        println!("region {}: risk {:.3} (cv {:.2}) over {} pixels", a.region, a.mean, a.cv, a.pixels);
    }
    Ok(())
}
