//! Synthetic country-scale landscape: population with cities and towns,
//! urbanicity, elevation, rivers and a grid of admin regions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{segment_distance_sq, PointKm, Polygon};
use crate::jitter::AdminMap;
use crate::raster::{CovariateSet, Raster, TransformKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeConfig {
    pub width: f64,
    pub height: f64,
    /// Cell size of the population and urbanicity rasters (km).
    pub fine_cell: f64,
    /// Cell size of elevation, river distance and city access (km).
    pub coarse_cell: f64,
    /// Side of the square admin regions (km).
    pub admin_cell: f64,
    pub cities: usize,
    pub towns: usize,
    pub rivers: usize,
    /// Range of city kernel radii (km).
    pub city_radius: (f64, f64),
    /// Range of town kernel radii (km).
    pub town_radius: (f64, f64),
    /// Typical rural background density (people/km²).
    pub background_density: f64,
    /// Settled density (people/km²) at which the built-up share is one half.
    pub built_half: f64,
    /// Steepness of the built-up share as a function of settled density;
    /// large values give sharp-edged urban patches.
    pub built_shape: f64,
    /// Log-scale sd of pixel variation shared by density and built-up share.
    pub pixel_sd: f64,
    /// Side (km) of the moving window that correlates the shared variation;
    /// zero gives independent pixels.
    pub pixel_range: f64,
    /// Log-scale loading of the built-up share on the shared pixel variation.
    pub urban_loading: f64,
    /// Log-scale sd of built-up variation independent of density.
    pub urban_sd: f64,
    pub seed: u64,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        LandscapeConfig {
            width: 1000.0,
            height: 800.0,
            fine_cell: 0.5,
            coarse_cell: 1.0,
            admin_cell: 40.0,
            cities: 12,
            towns: 220,
            rivers: 6,
            city_radius: (3.0, 8.0),
            town_radius: (0.6, 2.2),
            background_density: 12.0,
            built_half: 5000.0,
            built_shape: 1.0,
            pixel_sd: 0.6,
            pixel_range: 0.0,
            urban_loading: 0.5,
            urban_sd: 0.15,
            seed: 2018,
        }
    }
}

impl LandscapeConfig {
    /// Small landscape for tests and examples.
    pub fn small(seed: u64) -> Self {
        LandscapeConfig {
            width: 200.0,
            height: 160.0,
            fine_cell: 0.5,
            coarse_cell: 1.0,
            admin_cell: 40.0,
            cities: 2,
            towns: 20,
            rivers: 2,
            seed,
            ..LandscapeConfig::default()
        }
    }
}

#[derive(Debug, Clone)]
struct Settlement {
    center: PointKm,
    people: f64,
    radius: f64,
}

/// Covariate order of the synthetic landscape.
pub const COVARIATE_NAMES: [&str; 5] = ["DistW", "CityA", "Elev", "PopD", "UrbR"];

/// Generated rasters plus the raw population and urbanicity used for
/// cluster placement.
#[derive(Debug, Clone)]
pub struct Landscape {
    pub config: LandscapeConfig,
    pub domain: Polygon,
    pub admin: AdminMap,
    /// Transformed covariates in [`COVARIATE_NAMES`] order.
    pub covariates: CovariateSet,
    /// People per km².
    pub population: Raster,
    /// Urban ratio in `[0, 1]` before unit scaling.
    pub urbanicity: Raster,
}

struct Bump {
    center: PointKm,
    amplitude: f64,
    scale: f64,
}

fn bumps<R: Rng>(rng: &mut R, n: usize, w: f64, h: f64, amp: (f64, f64), scale: (f64, f64)) -> Vec<Bump> {
    (0..n)
        .map(|_| Bump {
            center: PointKm::new(rng.random_range(0.0..w), rng.random_range(0.0..h)),
            amplitude: rng.random_range(amp.0..amp.1),
            scale: rng.random_range(scale.0..scale.1),
        })
        .collect()
}

fn bump_sum(bumps: &[Bump], p: PointKm) -> f64 {
    bumps
        .iter()
        .map(|b| {
            let d2 = (p.x - b.center.x).powi(2) + (p.y - b.center.y).powi(2);
            b.amplitude * (-0.5 * d2 / (b.scale * b.scale)).exp()
        })
        .sum()
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Adds a Gaussian settlement kernel to `values` within four radii.
fn add_settlement(values: &mut [f64], r: &Raster, s: &Settlement) {
    let reach = 4.0 * s.radius;
    let peak = s.people / (2.0 * std::f64::consts::PI * s.radius * s.radius);
    let cs = r.cellsize;
    let c0 = (((s.center.x - reach - r.xll) / cs).floor().max(0.0)) as usize;
    let c1 = (((s.center.x + reach - r.xll) / cs).ceil().max(0.0) as usize).min(r.ncols);
    let r0 = (((r.ytop() - s.center.y - reach) / cs).floor().max(0.0)) as usize;
    let r1 = (((r.ytop() - s.center.y + reach) / cs).ceil().max(0.0) as usize).min(r.nrows);
    for row in r0..r1 {
        for col in c0..c1 {
            let p = r.cell_center(row, col);
            let d2 = (p.x - s.center.x).powi(2) + (p.y - s.center.y).powi(2);
            values[row * r.ncols + col] += peak * (-0.5 * d2 / (s.radius * s.radius)).exp();
        }
    }
}

/// Moving average over `(2 half + 1)²` cells (truncated at the edges),
/// rescaled to unit variance for white-noise input.
fn box_blur(values: &[f64], nx: usize, ny: usize, half: usize) -> Vec<f64> {
    if half == 0 {
        return values.to_vec();
    }
    let pass = |src: &[f64], len: usize, count: usize, stride: usize, step: usize| {
        let mut out = vec![0.0; src.len()];
        for line in 0..count {
            let at = |i: usize| line * stride + i * step;
            let mut prefix = vec![0.0; len + 1];
            for i in 0..len {
                prefix[i + 1] = prefix[i] + src[at(i)];
            }
            for i in 0..len {
                let lo = i.saturating_sub(half);
                let hi = (i + half + 1).min(len);
                out[at(i)] = (prefix[hi] - prefix[lo]) / (hi - lo) as f64;
            }
        }
        out
    };
    let rows = pass(values, nx, ny, nx, 1);
    let both = pass(&rows, ny, nx, 1, nx);
    let scale = (2 * half + 1) as f64;
    both.into_iter().map(|v| v * scale).collect()
}

impl Landscape {
    pub fn generate(config: &LandscapeConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (w, h) = (config.width, config.height);
        let domain = Polygon::rectangle(0.0, 0.0, w, h)?;
        let admin = AdminMap::grid(&domain.bbox(), config.admin_cell)?;

        let margin = 0.03 * w.min(h);
        let place = |rng: &mut ChaCha8Rng| {
            PointKm::new(rng.random_range(margin..w - margin), rng.random_range(margin..h - margin))
        };
        let cities: Vec<Settlement> = (0..config.cities)
            .map(|_| Settlement {
                center: place(&mut rng),
                people: log_uniform(&mut rng, 5e5, 4e6),
                radius: rng.random_range(config.city_radius.0..config.city_radius.1),
            })
            .collect();
        let towns: Vec<Settlement> = (0..config.towns)
            .map(|_| Settlement {
                center: place(&mut rng),
                people: log_uniform(&mut rng, 1e4, 2e5),
                radius: rng.random_range(config.town_radius.0..config.town_radius.1),
            })
            .collect();

        // population density and urbanicity on the fine grid
        let nx = (w / config.fine_cell).round() as usize;
        let ny = (h / config.fine_cell).round() as usize;
        let background = bumps(&mut rng, 10, w, h, (-1.0, 1.5), (60.0, 250.0));
        let mut pop = Raster::from_fn(nx, ny, 0.0, 0.0, config.fine_cell, |p| config.background_density * bump_sum(&background, p).exp());
        let mut settled = vec![0.0; nx * ny];
        for s in cities.iter().chain(&towns) {
            add_settlement(&mut settled, &pop, s);
        }
        // neighbourhood-scale variation shared by density and built-up
        // share, so that populous places are also locally more urban
        let noise = Normal::<f64>::new(0.0, 1.0).expect("valid normal");
        let white: Vec<f64> = (0..nx * ny).map(|_| noise.sample(&mut rng)).collect();
        let half = (0.5 * config.pixel_range / config.fine_cell).round() as usize;
        let shared = box_blur(&white, nx, ny, half);
        let mut urb_values = Vec::with_capacity(nx * ny);
        for (k, v) in pop.values.iter_mut().enumerate() {
            let z = shared[k];
            let own: f64 = noise.sample(&mut rng);
            *v = (*v + settled[k]) * (config.pixel_sd * z).exp();
            let ratio = (settled[k] / config.built_half).powf(config.built_shape);
            let built = ratio / (1.0 + ratio);
            urb_values.push((built * (config.urban_loading * z + config.urban_sd * own).exp()).min(1.0));
        }
        let urbanicity = Raster::new(nx, ny, 0.0, 0.0, config.fine_cell, pop.nodata, urb_values)?;

        // coarse covariates
        let cx = (w / config.coarse_cell).round() as usize;
        let cy = (h / config.coarse_cell).round() as usize;
        let relief = bumps(&mut rng, 14, w, h, (150.0, 900.0), (40.0, 200.0));
        let elevation = Raster::from_fn(cx, cy, 0.0, 0.0, config.coarse_cell, |p| 50.0 + bump_sum(&relief, p));

        let mut segments: Vec<(PointKm, PointKm)> = Vec::new();
        for _ in 0..config.rivers {
            let mut p = PointKm::new(rng.random_range(0.0..w), if rng.random::<bool>() { 0.0 } else { h });
            let mut heading: f64 = if p.y == 0.0 { 0.5 * std::f64::consts::PI } else { -0.5 * std::f64::consts::PI };
            heading += rng.random_range(-0.6..0.6);
            for _ in 0..200 {
                heading += rng.random_range(-0.35..0.35);
                let q = p.polar_offset(15.0, heading);
                segments.push((p, q));
                if q.x < 0.0 || q.x > w || q.y < 0.0 || q.y > h {
                    break;
                }
                p = q;
            }
        }
        let dist_water = Raster::from_fn(cx, cy, 0.0, 0.0, config.coarse_cell, |p| {
            segments
                .iter()
                .map(|(a, b)| segment_distance_sq(&p, a, b))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        });
        let city_access = Raster::from_fn(cx, cy, 0.0, 0.0, config.coarse_cell, |p| {
            cities
                .iter()
                .map(|c| c.center.distance(&p))
                .fold(f64::INFINITY, f64::min)
        });

        let covariates = CovariateSet::from_raw(vec![
            ("DistW".into(), dist_water, TransformKind::Log1pStandardize),
            ("CityA".into(), city_access, TransformKind::Log1pStandardize),
            ("Elev".into(), elevation, TransformKind::Log1pStandardize),
            ("PopD".into(), pop.clone(), TransformKind::Log1pStandardize),
            ("UrbR".into(), urbanicity.clone(), TransformKind::UnitScale),
        ])?;
        Ok(Landscape {
            config: config.clone(),
            domain,
            admin,
            covariates,
            population: pop,
            urbanicity,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_blur_matches_brute_force_and_keeps_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (nx, ny, half) = (60, 50, 2);
        let white: Vec<f64> = (0..nx * ny).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let out = box_blur(&white, nx, ny, half);
        let (r, c) = (20, 30);
        let mut sum = 0.0;
        for rr in r - half..=r + half {
            for cc in c - half..=c + half {
                sum += white[rr * nx + cc];
            }
        }
        assert!((out[r * nx + c] - sum / (2 * half + 1) as f64).abs() < 1e-12);
        let interior: Vec<f64> = (half..ny - half)
            .flat_map(|r| (half..nx - half).map(move |c| (r, c)))
            .map(|(r, c)| out[r * nx + c])
            .collect();
        let var = interior.iter().map(|v| v * v).sum::<f64>() / interior.len() as f64;
        assert!((var - 1.0).abs() < 0.15, "{var}");
        assert_eq!(box_blur(&white, nx, ny, 0), white);
    }
}
