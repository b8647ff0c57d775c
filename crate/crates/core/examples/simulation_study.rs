//! A small replicated comparison of UnAdj, Smoothed and FullAdj on a
//! synthetic landscape. Arguments: replicates, `full` for the
//! desk-scale 1000×800 km landscape, and the signal level (low, med, high).

use std::time::Instant;

use geojitter::simulate::{run_scenario, Landscape, LandscapeConfig, ScenarioConfig, SignalLevel};

fn main() -> geojitter::Result<()> {
    env_logger::init();
    let replicates = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let full = std::env::args().nth(2).is_some_and(|s| s == "full");
    let level: SignalLevel = std::env::args().nth(3).map_or(Ok(SignalLevel::Med), |s| s.parse())?;
    let mut cfg = ScenarioConfig::desk(level, replicates, 7);
    if !full {
        cfg.landscape = LandscapeConfig::small(3);
        cfg.urban = 41;
        cfg.rural = 59;
        cfg.mesh.max_edge_interior = 15.0;
        cfg.mesh.max_edge_exterior = 40.0;
        cfg.mesh.extension = 100.0;
    }
    let t = Instant::now();
    let landscape = Landscape::generate(&cfg.landscape)?;
    println!("landscape: {:.1}s", t.elapsed().as_secs_f64());
    let t = Instant::now();
    let result = run_scenario(&cfg, &landscape)?;
    println!("{} replicates: {:.1}s", replicates, t.elapsed().as_secs_f64());
    print!("{}", result.table.to_text());
    Ok(())
}
