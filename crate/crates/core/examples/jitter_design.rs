//! Integration design around one urban and one rural cluster near an
//! admin border, printed as a table, with a few simulated displacements.

use geojitter::geometry::{BoundingBox, PointKm};
use geojitter::jitter::{cluster_design, sample_jitter, AdminMap, IntegrationSettings, JitterScheme};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> geojitter::Result<()> {
    let bbox = BoundingBox {
        min: PointKm::new(0.0, 0.0),
        max: PointKm::new(40.0, 20.0),
    };
    let admin = AdminMap::grid(&bbox, 20.0)?;
    let scheme = JitterScheme::default();
    let settings = IntegrationSettings::default();
    let s = PointKm::new(18.0, 10.0);
    for urban in [true, false] {
        let design = cluster_design(&s, urban, &admin, &scheme, &settings)?;
        let kept = design.weights.iter().filter(|&&w| w > 0.0).count();
        let mass: f64 = design.weights.iter().sum();
        println!("{} cluster: {} points, {kept} inside its region, total weight {mass:.6}", if urban { "urban" } else { "rural" }, design.len());
        for (p, w) in design.points.iter().zip(&design.weights).take(4) {
            println!("  ({:7.3}, {:7.3})  {w:.5}", p.x, p.y);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..3 {
        let obs = sample_jitter(&s, false, &admin, &scheme, &mut rng)?;
        println!("rural displacement {:.2} km", obs.distance(&s));
    }
    Ok(())
}
