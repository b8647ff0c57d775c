//! DHS-style displacement of cluster coordinates and the ring integration
//! design used to marginalise over the unknown true location.
//!
//! Urban clusters are displaced uniformly in angle and uniformly in distance
//! up to `urban_max`; rural clusters up to `rural_max_main`, except a fraction
//! `tail_prob` displaced up to `rural_max_tail`. Displaced points must stay in
//! the administrative region of the true location.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, PointKm, Polygon};

pub type RegionId = u32;

/// Administrative regions used to constrain displacement.
///
/// An empty map is unconstrained: every point belongs to region 0.
#[derive(Debug, Clone, Default)]
pub struct AdminMap {
    regions: Vec<(RegionId, Polygon)>,
    index: Option<RegionIndex>,
}

#[derive(Debug, Clone)]
struct RegionIndex {
    bbox: BoundingBox,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<u32>>,
}

impl RegionIndex {
    fn build(regions: &[(RegionId, Polygon)]) -> Self {
        let bbox = BoundingBox::of_points(regions.iter().flat_map(|(_, p)| p.exterior())).unwrap();
        let side = ((regions.len() as f64).sqrt().ceil() as usize).clamp(1, 256);
        let (nx, ny) = (side, side);
        let mut cells = vec![Vec::new(); nx * ny];
        let cw = bbox.width().max(1e-300) / nx as f64;
        let ch = bbox.height().max(1e-300) / ny as f64;
        for (k, (_, poly)) in regions.iter().enumerate() {
            let b = poly.bbox().expanded(1e-9);
            let ix0 = (((b.min.x - bbox.min.x) / cw).floor().max(0.0) as usize).min(nx - 1);
            let ix1 = (((b.max.x - bbox.min.x) / cw).floor().max(0.0) as usize).min(nx - 1);
            let iy0 = (((b.min.y - bbox.min.y) / ch).floor().max(0.0) as usize).min(ny - 1);
            let iy1 = (((b.max.y - bbox.min.y) / ch).floor().max(0.0) as usize).min(ny - 1);
            for iy in iy0..=iy1 {
                for ix in ix0..=ix1 {
                    cells[iy * nx + ix].push(k as u32);
                }
            }
        }
        RegionIndex { bbox, nx, ny, cells }
    }

    fn candidates(&self, p: &PointKm) -> &[u32] {
        if !self.bbox.expanded(1e-9).contains(p) {
            return &[];
        }
        let cw = self.bbox.width().max(1e-300) / self.nx as f64;
        let ch = self.bbox.height().max(1e-300) / self.ny as f64;
        let ix = (((p.x - self.bbox.min.x) / cw).floor().max(0.0) as usize).min(self.nx - 1);
        let iy = (((p.y - self.bbox.min.y) / ch).floor().max(0.0) as usize).min(self.ny - 1);
        &self.cells[iy * self.nx + ix]
    }
}

impl AdminMap {
    pub fn new(regions: Vec<(RegionId, Polygon)>) -> Result<Self> {
        let mut ids: Vec<_> = regions.iter().map(|(id, _)| *id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("admin region ids must be unique".into()));
        }
        let index = (!regions.is_empty()).then(|| RegionIndex::build(&regions));
        Ok(AdminMap { regions, index })
    }

    pub fn unconstrained() -> Self {
        AdminMap::default()
    }

    pub fn regions(&self) -> &[(RegionId, Polygon)] {
        &self.regions
    }

    pub fn is_unconstrained(&self) -> bool {
        self.regions.is_empty()
    }

    /// Region containing `p`; overlaps resolve to the first listed region.
    pub fn region_of(&self, p: &PointKm) -> Option<RegionId> {
        let Some(index) = &self.index else {
            return Some(0);
        };
        index
            .candidates(p)
            .iter()
            .map(|&k| &self.regions[k as usize])
            .find(|(_, poly)| poly.contains(p))
            .map(|(id, _)| *id)
    }

    pub fn same_region(&self, a: &PointKm, b: &PointKm) -> bool {
        match (self.region_of(a), self.region_of(b)) {
            (Some(ra), Some(rb)) => ra == rb,
            _ => false,
        }
    }

    /// Regular grid of square regions of side `cell` covering `bbox`, with ids
    /// assigned row by row starting at 1.
    pub fn grid(bbox: &BoundingBox, cell: f64) -> Result<Self> {
        let nx = (bbox.width() / cell).ceil().max(1.0) as usize;
        let ny = (bbox.height() / cell).ceil().max(1.0) as usize;
        let mut regions = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let x0 = bbox.min.x + i as f64 * cell;
                let y0 = bbox.min.y + j as f64 * cell;
                let x1 = (x0 + cell).min(bbox.max.x);
                let y1 = (y0 + cell).min(bbox.max.y);
                regions.push(((j * nx + i + 1) as RegionId, Polygon::rectangle(x0, y0, x1, y1)?));
            }
        }
        AdminMap::new(regions)
    }

    /// Parses the admin text format: each region starts with a
    /// `REGION <id>` line followed by its polygon in the polygon text format.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut regions = Vec::new();
        let mut current: Option<(RegionId, usize, String)> = None;
        let finish = |cur: Option<(RegionId, usize, String)>, out: &mut Vec<(RegionId, Polygon)>| -> Result<()> {
            if let Some((id, start, body)) = cur {
                // pad so polygon errors report file line numbers
                let padded = format!("{}{}", "\n".repeat(start), body);
                out.push((id, Polygon::parse(&padded, source)?));
            }
            Ok(())
        };
        for (k, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if let Some(rest) = trimmed.strip_prefix("REGION") {
                finish(current.take(), &mut regions)?;
                let id = rest
                    .trim()
                    .parse::<RegionId>()
                    .map_err(|e| Error::parse(source, k + 1, format!("bad region id: {e}")))?;
                current = Some((id, k + 1, String::new()));
            } else if let Some((_, _, body)) = current.as_mut() {
                body.push_str(line);
                body.push('\n');
            } else if !trimmed.is_empty() && !trimmed.starts_with('#') {
                return Err(Error::parse(source, k + 1, "expected `REGION <id>`"));
            }
        }
        finish(current, &mut regions)?;
        AdminMap::new(regions)
    }

    pub fn read(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        AdminMap::parse(&text, &path.display().to_string())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# admin regions, coordinates in km\n");
        for (id, poly) in &self.regions {
            let _ = writeln!(out, "REGION {id}");
            out.push_str(&poly.to_text());
            out.push('\n');
        }
        out
    }
}

/// Maximum displacement distances (km) of the DHS scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterScheme {
    pub urban_max: f64,
    pub rural_max_main: f64,
    pub rural_max_tail: f64,
    pub tail_prob: f64,
}

impl Default for JitterScheme {
    fn default() -> Self {
        JitterScheme {
            urban_max: 2.0,
            rural_max_main: 5.0,
            rural_max_tail: 10.0,
            tail_prob: 0.01,
        }
    }
}

impl JitterScheme {
    /// The no-displacement scheme; integration designs collapse to one point.
    pub fn none() -> Self {
        JitterScheme {
            urban_max: 0.0,
            rural_max_main: 0.0,
            rural_max_tail: 0.0,
            tail_prob: 0.0,
        }
    }

    pub fn is_none(&self) -> bool {
        self.urban_max == 0.0 && self.rural_max_main == 0.0 && self.rural_max_tail == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_none() {
            return Ok(());
        }
        let ok = 0.0 < self.urban_max
            && self.urban_max < self.rural_max_main
            && self.rural_max_main < self.rural_max_tail
            && self.tail_prob > 0.0
            && self.tail_prob < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid jitter scheme {self:?}")))
        }
    }

    pub fn max_radius(&self, urban: bool) -> f64 {
        if urban {
            self.urban_max
        } else {
            self.rural_max_tail
        }
    }

    /// Density of the displacement distance at `d`.
    pub fn radial_density(&self, d: f64, urban: bool) -> f64 {
        if d < 0.0 {
            return 0.0;
        }
        if urban {
            if d < self.urban_max {
                1.0 / self.urban_max
            } else {
                0.0
            }
        } else {
            let main = if d < self.rural_max_main {
                (1.0 - self.tail_prob) / self.rural_max_main
            } else {
                0.0
            };
            let tail = if d < self.rural_max_tail {
                self.tail_prob / self.rural_max_tail
            } else {
                0.0
            };
            main + tail
        }
    }

    /// `P(distance ≤ d)`.
    pub fn radial_cdf(&self, d: f64, urban: bool) -> f64 {
        if d <= 0.0 {
            return 0.0;
        }
        if urban {
            (d / self.urban_max).min(1.0)
        } else {
            (1.0 - self.tail_prob) * (d / self.rural_max_main).min(1.0)
                + self.tail_prob * (d / self.rural_max_tail).min(1.0)
        }
    }
}

/// Log density of the observed location given the true one (per km²).
///
/// Returns `+∞` at zero distance (the kernel is unbounded there) and `−∞`
/// where the density vanishes.
pub fn jitter_logdensity(
    s_obs: &PointKm,
    s_true: &PointKm,
    urban: bool,
    admin: &AdminMap,
    scheme: &JitterScheme,
) -> f64 {
    let d = s_obs.distance(s_true);
    if d == 0.0 {
        return f64::INFINITY;
    }
    if !admin.same_region(s_obs, s_true) {
        return f64::NEG_INFINITY;
    }
    let radial = scheme.radial_density(d, urban);
    if radial <= 0.0 {
        return f64::NEG_INFINITY;
    }
    (radial / (2.0 * PI * d)).ln()
}

pub const MAX_JITTER_REJECTIONS: usize = 10_000;

/// Displaces `s_true` according to the scheme, resampling until the result
/// lies in the same administrative region.
pub fn sample_jitter<R: Rng + ?Sized>(
    s_true: &PointKm,
    urban: bool,
    admin: &AdminMap,
    scheme: &JitterScheme,
    rng: &mut R,
) -> Result<PointKm> {
    let region = admin
        .region_of(s_true)
        .ok_or_else(|| Error::InvalidInput(format!("true location ({}, {}) is in no admin region", s_true.x, s_true.y)))?;
    if scheme.is_none() {
        return Ok(*s_true);
    }
    for _ in 0..MAX_JITTER_REJECTIONS {
        let max = if urban {
            scheme.urban_max
        } else if rng.random::<f64>() < scheme.tail_prob {
            scheme.rural_max_tail
        } else {
            scheme.rural_max_main
        };
        let angle = rng.random::<f64>() * 2.0 * PI;
        let dist = rng.random::<f64>() * max;
        let candidate = s_true.polar_offset(dist, angle);
        if admin.region_of(&candidate) == Some(region) {
            return Ok(candidate);
        }
    }
    Err(Error::JitterRejection {
        attempts: MAX_JITTER_REJECTIONS,
    })
}

/// Ring counts of the integration design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationSettings {
    pub rings_urban: usize,
    pub rings_rural: usize,
    pub points_per_ring: usize,
}

impl Default for IntegrationSettings {
    fn default() -> Self {
        IntegrationSettings {
            rings_urban: 5,
            rings_rural: 10,
            points_per_ring: 15,
        }
    }
}

impl IntegrationSettings {
    /// Double the rings and the points per ring.
    pub fn refined(&self) -> Self {
        IntegrationSettings {
            rings_urban: 2 * self.rings_urban,
            rings_rural: 2 * self.rings_rural,
            points_per_ring: 2 * self.points_per_ring,
        }
    }
}

/// Candidate true locations and normalised weights for one cluster. The
/// first point is the observed location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDesign {
    pub points: Vec<PointKm>,
    pub weights: Vec<f64>,
    pub urban: bool,
}

impl ClusterDesign {
    pub fn single(p: PointKm, urban: bool) -> Self {
        ClusterDesign {
            points: vec![p],
            weights: vec![1.0],
            urban,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Zeroes the weights flagged in `drop` and renormalises; returns `false`
    /// if nothing is left.
    pub fn drop_points(&mut self, drop: &[bool]) -> bool {
        for (w, &d) in self.weights.iter_mut().zip(drop) {
            if d {
                *w = 0.0;
            }
        }
        let total: f64 = self.weights.iter().sum();
        if total <= 0.0 {
            return false;
        }
        self.weights.iter_mut().for_each(|w| *w /= total);
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrationDesign {
    pub clusters: Vec<ClusterDesign>,
}

/// Ring design for one cluster.
///
/// With `m` rings of width `Δ = d_max / m`, ring `j` sits at radius
/// `(j − ½)Δ`. The centre point carries the displacement mass of the disc of
/// radius `Δ/4`, ring 1 the annulus `[Δ/4, Δ]` and ring `j ≥ 2` the annulus
/// `[(j−1)Δ, jΔ]`, split evenly over its points. Candidates outside the
/// observed location's region get zero weight.
pub fn cluster_design(
    s_obs: &PointKm,
    urban: bool,
    admin: &AdminMap,
    scheme: &JitterScheme,
    settings: &IntegrationSettings,
) -> Result<ClusterDesign> {
    let region = admin
        .region_of(s_obs)
        .ok_or_else(|| Error::InvalidInput(format!("observed location ({}, {}) is in no admin region", s_obs.x, s_obs.y)))?;
    let rings = if urban { settings.rings_urban } else { settings.rings_rural };
    let d_max = scheme.max_radius(urban);
    if rings == 0 || settings.points_per_ring == 0 || d_max <= 0.0 {
        return Ok(ClusterDesign::single(*s_obs, urban));
    }
    let delta = d_max / rings as f64;
    let k = settings.points_per_ring;
    let mut points = Vec::with_capacity(1 + rings * k);
    let mut weights = Vec::with_capacity(1 + rings * k);
    points.push(*s_obs);
    weights.push(scheme.radial_cdf(0.25 * delta, urban));
    for j in 1..=rings {
        let inner = if j == 1 { 0.25 * delta } else { (j - 1) as f64 * delta };
        let outer = j as f64 * delta;
        let mass = scheme.radial_cdf(outer, urban) - scheme.radial_cdf(inner, urban);
        let radius = (j as f64 - 0.5) * delta;
        for a in 0..k {
            let angle = 2.0 * PI * a as f64 / k as f64;
            let p = s_obs.polar_offset(radius, angle);
            let same = admin.region_of(&p) == Some(region);
            points.push(p);
            weights.push(if same { mass / k as f64 } else { 0.0 });
        }
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateDesign { cluster: 0 });
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(ClusterDesign { points, weights, urban })
}

pub fn integration_design(
    s_obs: &[PointKm],
    urban: &[bool],
    admin: &AdminMap,
    scheme: &JitterScheme,
    settings: &IntegrationSettings,
) -> Result<IntegrationDesign> {
    if s_obs.len() != urban.len() {
        return Err(Error::InvalidInput("locations and urban flags differ in length".into()));
    }
    scheme.validate()?;
    let clusters = s_obs
        .par_iter()
        .zip(urban.par_iter())
        .enumerate()
        .map(|(c, (s, &u))| {
            cluster_design(s, u, admin, scheme, settings).map_err(|e| match e {
                Error::DegenerateDesign { .. } => Error::DegenerateDesign { cluster: c },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IntegrationDesign { clusters })
}

/// Single-point design at the given locations (no adjustment).
pub fn point_design(s_obs: &[PointKm], urban: &[bool]) -> IntegrationDesign {
    IntegrationDesign {
        clusters: s_obs
            .iter()
            .zip(urban)
            .map(|(p, &u)| ClusterDesign::single(*p, u))
            .collect(),
    }
}

impl IntegrationDesign {
    /// Text table `cluster point x_km y_km weight`.
    pub fn to_table(&self) -> String {
        let mut out = String::from("cluster\tpoint\tx_km\ty_km\tweight\n");
        for (c, cl) in self.clusters.iter().enumerate() {
            for (k, (p, w)) in cl.points.iter().zip(&cl.weights).enumerate() {
                let _ = writeln!(out, "{c}\t{k}\t{}\t{}\t{w:e}", p.x, p.y);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn admin_text_round_trip_and_errors() {
        let bbox = BoundingBox {
            min: PointKm::new(0.0, 0.0),
            max: PointKm::new(20.0, 10.0),
        };
        let map = AdminMap::grid(&bbox, 10.0).unwrap();
        let back = AdminMap::parse(&map.to_text(), "admin").unwrap();
        assert_eq!(back.regions().len(), 2);
        assert_eq!(back.region_of(&PointKm::new(15.0, 5.0)), Some(2));
        let err = AdminMap::parse("REGION 1\n0 0\n1 x\n", "a.txt").unwrap_err().to_string();
        assert!(err.starts_with("a.txt:3:"), "{err}");
        assert!(AdminMap::parse("0 0\n", "a.txt").is_err());
    }
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn huge() -> AdminMap {
        AdminMap::new(vec![(7, Polygon::rectangle(-1e4, -1e4, 1e4, 1e4).unwrap())]).unwrap()
    }

    #[test]
    fn density_reference_values() {
        let admin = huge();
        let s = PointKm::new(0.0, 0.0);
        let scheme = JitterScheme::default();
        let u1 = jitter_logdensity(&s, &PointKm::new(1.0, 0.0), true, &admin, &scheme).exp();
        assert!((u1 - 1.0 / (4.0 * PI)).abs() < 1e-12);
        assert_eq!(jitter_logdensity(&s, &PointKm::new(3.0, 0.0), true, &admin, &scheme), f64::NEG_INFINITY);
        let r7 = jitter_logdensity(&s, &PointKm::new(0.0, 7.0), false, &admin, &scheme).exp();
        assert!((r7 - 0.01 * 0.1 / (2.0 * PI * 7.0)).abs() < 1e-15);
        assert!((r7 - 2.274e-5).abs() < 1e-8);
        assert_eq!(jitter_logdensity(&s, &s, true, &admin, &scheme), f64::INFINITY);
    }

    #[test]
    fn density_vanishes_across_regions() {
        let admin = AdminMap::grid(&BoundingBox { min: PointKm::new(0.0, 0.0), max: PointKm::new(20.0, 10.0) }, 10.0).unwrap();
        let scheme = JitterScheme::default();
        let a = PointKm::new(9.5, 5.0);
        let b = PointKm::new(10.5, 5.0);
        assert_eq!(jitter_logdensity(&a, &b, true, &admin, &scheme), f64::NEG_INFINITY);
    }

    #[test]
    fn design_counts_and_normalisation() {
        let admin = huge();
        let scheme = JitterScheme::default();
        let settings = IntegrationSettings::default();
        let s = PointKm::new(3.0, 4.0);
        let u = cluster_design(&s, true, &admin, &scheme, &settings).unwrap();
        assert_eq!(u.len(), 76);
        assert_eq!(u.points[0], s);
        let r = cluster_design(&s, false, &admin, &scheme, &settings).unwrap();
        assert_eq!(r.len(), 151);
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (p, w) in r.points.iter().zip(&r.weights) {
            assert!(*w >= 0.0);
            assert!(p.distance(&s) <= 10.0);
        }
    }

    #[test]
    fn clipped_half_disc_gets_no_weight() {
        // region boundary at x = 0 passes through the observed point's neighbourhood
        let admin = AdminMap::new(vec![
            (1, Polygon::rectangle(-50.0, -50.0, 0.0, 50.0).unwrap()),
            (2, Polygon::rectangle(0.0, -50.0, 50.0, 50.0).unwrap()),
        ])
        .unwrap();
        let s = PointKm::new(-1e-3, 0.0);
        let d = cluster_design(&s, false, &admin, &JitterScheme::default(), &IntegrationSettings::default()).unwrap();
        for (p, w) in d.points.iter().zip(&d.weights) {
            if p.x > 0.0 {
                assert_eq!(*w, 0.0);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let j = sample_jitter(&s, false, &admin, &JitterScheme::default(), &mut rng).unwrap();
            assert!(j.x <= 0.0);
        }
    }

    #[test]
    fn sampler_respects_region_and_fails_on_tiny_regions() {
        let admin = AdminMap::new(vec![(1, Polygon::rectangle(0.0, 0.0, 1e-6, 1e-6).unwrap())]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = sample_jitter(&PointKm::new(5e-7, 5e-7), true, &admin, &JitterScheme::default(), &mut rng).unwrap_err();
        assert!(matches!(err, Error::JitterRejection { .. }));
    }

    #[test]
    fn no_jitter_scheme_collapses_design() {
        let admin = huge();
        let d = integration_design(&[PointKm::new(1.0, 1.0)], &[false], &admin, &JitterScheme::none(), &IntegrationSettings::default()).unwrap();
        assert_eq!(d.clusters[0].len(), 1);
        assert_eq!(d.clusters[0].weights, vec![1.0]);
    }

    #[test]
    fn urban_distances_are_uniform() {
        let admin = huge();
        let scheme = JitterScheme::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = PointKm::new(0.0, 0.0);
        let n = 10_000;
        let mut d: Vec<f64> = (0..n)
            .map(|_| sample_jitter(&s, true, &admin, &scheme, &mut rng).unwrap().distance(&s))
            .collect();
        d.sort_by(f64::total_cmp);
        let ks = d
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = x / 2.0;
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.02, "KS statistic {ks}");
    }
}
