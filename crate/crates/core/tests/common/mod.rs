//! Small synthetic problems shared by the integration tests.
#![allow(dead_code)]

pub mod derivatives;

use geojitter::geometry::{PointKm, Polygon};
use geojitter::inference::{Cluster, Dataset, SpatialBasis};
use geojitter::jitter::AdminMap;
use geojitter::mesh::build_mesh;
use geojitter::raster::{CovariateSet, Raster, TransformKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Toy {
    pub domain: Polygon,
    pub basis: SpatialBasis,
    pub covariates: CovariateSet,
    pub admin: AdminMap,
    pub data: Dataset,
}

pub fn square(side: f64) -> Polygon {
    Polygon::rectangle(0.0, 0.0, side, side).unwrap()
}

/// Smooth covariate raster at 0.5 km cells covering `[-20, side + 20]²`.
pub fn wave_raster(side: f64, wavelength: f64) -> Raster {
    let cells = ((side + 40.0) / 0.5) as usize;
    let k = 2.0 * std::f64::consts::PI / wavelength;
    Raster::from_fn(cells, cells, -20.0, -20.0, 0.5, |p| (k * p.x).sin() + 0.5 * (k * p.y).cos())
}

/// 60 km square, mesh 6/15/20 km, two covariates, four admin regions and
/// `clusters` random clusters (half urban).
pub fn toy(clusters: usize, seed: u64) -> Toy {
    let side = 60.0;
    let domain = square(side);
    let mesh = build_mesh(&domain, 6.0, 15.0, 20.0).unwrap();
    let basis = SpatialBasis::new(mesh).unwrap();
    let covariates = CovariateSet::from_raw(vec![
        ("wave".into(), wave_raster(side, 17.0), TransformKind::None),
        ("ramp".into(), Raster::from_fn(200, 200, -20.0, -20.0, 0.5, |p| p.x / 60.0), TransformKind::UnitScale),
    ])
    .unwrap();
    let admin = AdminMap::grid(&domain.bbox(), 30.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = random_clusters(clusters, side, &admin, &mut rng);
    Toy {
        domain,
        basis,
        covariates,
        admin,
        data,
    }
}

pub fn random_clusters<R: Rng>(count: usize, side: f64, admin: &AdminMap, rng: &mut R) -> Dataset {
    let clusters = (0..count)
        .map(|c| {
            let location = PointKm::new(rng.random_range(1.0..side - 1.0), rng.random_range(1.0..side - 1.0));
            let n = rng.random_range(10..30u32);
            Cluster {
                id: format!("c{c}"),
                location,
                y: rng.random_range(0..=n),
                n,
                urban: c % 2 == 0,
                admin: admin.region_of(&location),
            }
        })
        .collect();
    Dataset::new(clusters).unwrap()
}

/// Latent state with entries drawn uniformly from `[-scale, scale]`.
pub fn random_state<R: Rng>(dim: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Largest absolute difference over the largest absolute reference value.
pub fn rel_error(a: &[f64], reference: &[f64]) -> f64 {
    let diff = a.iter().zip(reference).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = reference.iter().map(|v| v.abs()).fold(0.0, f64::max);
    diff / scale.max(1e-300)
}
