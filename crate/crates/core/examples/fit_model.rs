//! Fits UnAdj and FullAdj to one simulated survey on a small landscape and
//! prints the hyperparameters and fixed effects side by side.

use geojitter::inference::{fit, ModelMode};
use geojitter::simulate::{Landscape, LandscapeConfig, ScenarioConfig, ScenarioContext, SignalLevel};

fn main() -> geojitter::Result<()> {
    let mut cfg = ScenarioConfig::desk(SignalLevel::High, 1, 11);
    cfg.landscape = LandscapeConfig::small(3);
    cfg.urban = 60;
    cfg.rural = 90;
    cfg.mesh.max_edge_interior = 15.0;
    cfg.mesh.max_edge_exterior = 40.0;
    cfg.mesh.extension = 100.0;
    let landscape = Landscape::generate(&cfg.landscape)?;
    let ctx = ScenarioContext::new(&cfg, &landscape)?;
    let sim = ctx.simulate(0)?;
    println!("truth: rho {:.0} km, sigma2 {:.2}, beta {:.3?}", cfg.theta.rho(), cfg.theta.sigma2(), sim.beta);
    for mode in [ModelMode::UnAdj, ModelMode::FullAdj] {
        let f = fit(&sim.data, &cfg.model_spec(mode), &ctx.basis, &landscape.covariates, &landscape.admin)?;
        println!("{mode}: rho {:.1} km, sigma2 {:.3}, {} outer evaluations", f.theta.rho(), f.theta.sigma2(), f.diagnostics.outer_evaluations);
        for b in &f.beta {
            println!("  {:<10} {:7.3}  [{:7.3}, {:7.3}]", b.name, b.mean, b.lower, b.upper);
        }
    }
    Ok(())
}
