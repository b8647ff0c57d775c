//! Planar geometry in kilometre coordinates: points, polygons with holes and
//! the line-oriented polygon file format.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A location in planar kilometre coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointKm {
    pub x: f64,
    pub y: f64,
}

impl PointKm {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &PointKm) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn offset(&self, dx: f64, dy: f64) -> PointKm {
        PointKm::new(self.x + dx, self.y + dy)
    }

    /// Point at `radius` km in direction `angle` (radians) from `self`.
    pub fn polar_offset(&self, radius: f64, angle: f64) -> PointKm {
        PointKm::new(self.x + radius * angle.cos(), self.y + radius * angle.sin())
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: PointKm,
    pub max: PointKm,
}

impl BoundingBox {
    pub fn of_points<'a>(points: impl IntoIterator<Item = &'a PointKm>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut bb = BoundingBox { min: *first, max: *first };
        for p in it {
            bb.min.x = bb.min.x.min(p.x);
            bb.min.y = bb.min.y.min(p.y);
            bb.max.x = bb.max.x.max(p.x);
            bb.max.y = bb.max.y.max(p.y);
        }
        Some(bb)
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn contains(&self, p: &PointKm) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn expanded(&self, by: f64) -> Self {
        BoundingBox {
            min: self.min.offset(-by, -by),
            max: self.max.offset(by, by),
        }
    }
}

/// Polygon with one exterior ring and optional holes. Rings are stored open
/// (the closing vertex is not repeated).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    exterior: Vec<PointKm>,
    holes: Vec<Vec<PointKm>>,
    #[serde(skip)]
    bbox: Option<BoundingBox>,
}

fn open_ring(mut ring: Vec<PointKm>) -> Vec<PointKm> {
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    ring
}

fn ring_signed_area(ring: &[PointKm]) -> f64 {
    let n = ring.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    0.5 * acc
}

fn orient(a: &PointKm, b: &PointKm, c: &PointKm) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn segments_cross(a: &PointKm, b: &PointKm, c: &PointKm, d: &PointKm) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

fn ring_self_intersects(ring: &[PointKm]) -> bool {
    let n = ring.len();
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (c, d) = (ring[j], ring[(j + 1) % n]);
            if segments_cross(&a, &b, &c, &d) {
                return true;
            }
        }
    }
    false
}

/// Squared distance from `p` to the segment `a`-`b`.
pub(crate) fn segment_distance_sq(p: &PointKm, a: &PointKm, b: &PointKm) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.x + t * dx - p.x, a.y + t * dy - p.y);
    qx * qx + qy * qy
}

const ON_EDGE_TOL: f64 = 1e-9;

fn ring_contains(ring: &[PointKm], p: &PointKm) -> RingHit {
    let n = ring.len();
    let mut inside = false;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        if segment_distance_sq(p, &a, &b) <= ON_EDGE_TOL * ON_EDGE_TOL {
            return RingHit::Edge;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x_cross {
                inside = !inside;
            }
        }
    }
    if inside {
        RingHit::Inside
    } else {
        RingHit::Outside
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RingHit {
    Inside,
    Edge,
    Outside,
}

impl Polygon {
    pub fn new(exterior: Vec<PointKm>, holes: Vec<Vec<PointKm>>) -> Result<Self> {
        let exterior = open_ring(exterior);
        let holes: Vec<_> = holes.into_iter().map(open_ring).collect();
        if exterior.len() < 3 {
            return Err(Error::InvalidInput("polygon exterior needs at least 3 vertices".into()));
        }
        if exterior.iter().chain(holes.iter().flatten()).any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("polygon has non-finite coordinates".into()));
        }
        if ring_self_intersects(&exterior) {
            return Err(Error::InvalidInput("polygon exterior ring self-intersects".into()));
        }
        let mut poly = Polygon {
            exterior,
            holes,
            bbox: None,
        };
        let area = poly.area();
        let scale = poly.compute_bbox().width().max(poly.compute_bbox().height()).max(1e-300);
        if !(area > 1e-12 * scale * scale) {
            return Err(Error::InvalidInput(format!("degenerate polygon (area {area:e})")));
        }
        poly.bbox = Some(poly.compute_bbox());
        Ok(poly)
    }

    /// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Polygon::new(
            vec![
                PointKm::new(x0, y0),
                PointKm::new(x1, y0),
                PointKm::new(x1, y1),
                PointKm::new(x0, y1),
            ],
            vec![],
        )
    }

    pub fn exterior(&self) -> &[PointKm] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<PointKm>] {
        &self.holes
    }

    fn compute_bbox(&self) -> BoundingBox {
        BoundingBox::of_points(&self.exterior).expect("non-empty ring")
    }

    pub fn bbox(&self) -> BoundingBox {
        self.bbox.unwrap_or_else(|| self.compute_bbox())
    }

    pub fn area(&self) -> f64 {
        ring_signed_area(&self.exterior).abs()
            - self.holes.iter().map(|h| ring_signed_area(h).abs()).sum::<f64>()
    }

    /// Point-in-polygon by ray casting; points on any edge count as inside.
    pub fn contains(&self, p: &PointKm) -> bool {
        if !self.bbox().expanded(ON_EDGE_TOL).contains(p) {
            return false;
        }
        match ring_contains(&self.exterior, p) {
            RingHit::Outside => false,
            RingHit::Edge => true,
            RingHit::Inside => self.holes.iter().all(|h| ring_contains(h, p) != RingHit::Inside),
        }
    }

    /// Distance from `p` to the polygon (zero inside).
    pub fn distance(&self, p: &PointKm) -> f64 {
        if self.contains(p) {
            0.0
        } else {
            self.boundary_distance(p)
        }
    }

    /// Distance from `p` to the nearest boundary edge.
    pub fn boundary_distance(&self, p: &PointKm) -> f64 {
        std::iter::once(&self.exterior)
            .chain(self.holes.iter())
            .flat_map(|ring| {
                let n = ring.len();
                (0..n).map(move |i| segment_distance_sq(p, &ring[i], &ring[(i + 1) % n]))
            })
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }

    /// Parses the polygon text format: one ring per block of `x y` lines,
    /// blocks separated by blank lines, first block exterior, rest holes.
    /// Lines starting with `#` are comments.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut rings: Vec<Vec<PointKm>> = Vec::new();
        let mut current: Vec<PointKm> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.starts_with('#') {
                continue;
            }
            if line.is_empty() {
                if !current.is_empty() {
                    rings.push(std::mem::take(&mut current));
                }
                continue;
            }
            let mut parts = line.split_whitespace();
            let parse = |s: Option<&str>| -> Result<f64> {
                s.ok_or_else(|| Error::parse(source, lineno + 1, "expected `x y`"))?
                    .parse::<f64>()
                    .map_err(|e| Error::parse(source, lineno + 1, e.to_string()))
            };
            let x = parse(parts.next())?;
            let y = parse(parts.next())?;
            if parts.next().is_some() {
                return Err(Error::parse(source, lineno + 1, "expected exactly two numbers"));
            }
            current.push(PointKm::new(x, y));
        }
        if !current.is_empty() {
            rings.push(current);
        }
        let mut rings = rings.into_iter();
        let exterior = rings
            .next()
            .ok_or_else(|| Error::parse(source, 0, "no rings found"))?;
        Polygon::new(exterior, rings.collect())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Polygon::parse(&text, &path.display().to_string())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, ring) in std::iter::once(&self.exterior).chain(self.holes.iter()).enumerate() {
            if i > 0 {
                out.push('\n');
            }
            for p in ring {
                let _ = writeln!(out, "{} {}", p.x, p.y);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_area_and_containment() {
        let sq = Polygon::rectangle(0.0, 0.0, 10.0, 10.0).unwrap();
        assert_eq!(sq.area(), 100.0);
        assert!(sq.contains(&PointKm::new(5.0, 5.0)));
        assert!(sq.contains(&PointKm::new(10.0, 5.0)), "edge counts as inside");
        assert!(sq.contains(&PointKm::new(0.0, 0.0)), "vertex counts as inside");
        assert!(!sq.contains(&PointKm::new(10.01, 5.0)));
        assert!((sq.distance(&PointKm::new(13.0, 14.0)) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn holes_are_excluded() {
        let poly = Polygon::new(
            vec![
                PointKm::new(0.0, 0.0),
                PointKm::new(10.0, 0.0),
                PointKm::new(10.0, 10.0),
                PointKm::new(0.0, 10.0),
            ],
            vec![vec![
                PointKm::new(4.0, 4.0),
                PointKm::new(6.0, 4.0),
                PointKm::new(6.0, 6.0),
                PointKm::new(4.0, 6.0),
            ]],
        )
        .unwrap();
        assert_eq!(poly.area(), 96.0);
        assert!(!poly.contains(&PointKm::new(5.0, 5.0)));
        assert!(poly.contains(&PointKm::new(4.0, 5.0)));
        assert!(poly.contains(&PointKm::new(2.0, 2.0)));
    }

    #[test]
    fn degenerate_polygons_are_rejected() {
        let flat = Polygon::new(
            vec![PointKm::new(0.0, 0.0), PointKm::new(1.0, 1.0), PointKm::new(2.0, 2.0)],
            vec![],
        );
        assert!(matches!(flat, Err(Error::InvalidInput(_))));
        let bowtie = Polygon::new(
            vec![
                PointKm::new(0.0, 0.0),
                PointKm::new(1.0, 1.0),
                PointKm::new(1.0, 0.0),
                PointKm::new(0.0, 1.0),
            ],
            vec![],
        );
        assert!(bowtie.is_err());
    }

    #[test]
    fn text_format_round_trip() {
        let text = "# square\n0 0\n4 0\n4 4\n0 4\n0 0\n\n1 1\n2 1\n2 2\n1 2\n";
        let poly = Polygon::parse(text, "mem").unwrap();
        assert_eq!(poly.exterior().len(), 4);
        assert_eq!(poly.holes().len(), 1);
        let again = Polygon::parse(&poly.to_text(), "mem").unwrap();
        assert_eq!(again.exterior(), poly.exterior());
        assert_eq!(again.holes(), poly.holes());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = Polygon::parse("0 0\n1 x\n", "bad.poly").unwrap_err();
        assert!(err.to_string().starts_with("bad.poly:2:"), "{err}");
    }
}
