//! Covariate rasters: transforms, point extraction and window averaging,
//! and the design row handed to the model.

use geojitter::geometry::PointKm;
use geojitter::raster::{extract_point, transform, window_average_point, CovariateSet, Raster, TransformKind};

fn main() -> geojitter::Result<()> {
    // population-like surface with a peak at (25, 25)
    let pop = Raster::from_fn(100, 100, 0.0, 0.0, 0.5, |p| 5000.0 * (-(p.distance(&PointKm::new(25.0, 25.0)) / 4.0).powi(2)).exp());
    let elev = Raster::from_fn(100, 100, 0.0, 0.0, 0.5, |p| 300.0 + 10.0 * p.x);
    let logged = transform(&pop, TransformKind::Log1pStandardize)?;
    let p = PointKm::new(27.0, 24.0);
    println!("raw {:.1}, transformed {:.3}", extract_point(&pop, &p).unwrap(), extract_point(&logged, &p).unwrap());
    for window in [1.0, 5.0, 10.0] {
        println!("{window:>4} km window mean {:.3}", window_average_point(&logged, &p, window).unwrap());
    }
    let set = CovariateSet::from_raw(vec![
        ("PopD".into(), pop, TransformKind::Log1pStandardize),
        ("Elev".into(), elev, TransformKind::UnitScale),
    ])?;
    println!("effects {:?}", set.names());
    println!("design row {:?}", set.design_row(&p, None).unwrap());
    Ok(())
}
