//! Triangulation of the study domain plus an extension band.
//!
//! The mesh is a graded tensor-product grid: lines are spaced at most
//! `max_edge_interior` apart across the domain's bounding box and at most
//! `max_edge_exterior` apart in the extension band. Every rectangle is split
//! into two counter-clockwise triangles and rectangles farther than the
//! extension width from the domain are dropped.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, PointKm, Polygon};

#[derive(Debug, Clone)]
pub struct TriangulationMesh {
    nodes: Vec<PointKm>,
    triangles: Vec<[usize; 3]>,
    interior_domain: Polygon,
    extension_width: f64,
    locator: TriangleLocator,
}

/// Uniform bucket grid over the mesh bounding box for triangle lookup.
#[derive(Debug, Clone)]
struct TriangleLocator {
    bbox: BoundingBox,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
}

/// Barycentric tolerance used when deciding whether a point is in a triangle.
const BARY_TOL: f64 = 1e-12;

impl TriangleLocator {
    fn build(nodes: &[PointKm], triangles: &[[usize; 3]]) -> Self {
        let bbox = BoundingBox::of_points(nodes).expect("mesh has nodes");
        let target = (triangles.len() as f64 / 2.0).sqrt().ceil().max(1.0);
        let aspect = (bbox.width() / bbox.height().max(1e-300)).clamp(1e-3, 1e3);
        let nx = ((target * aspect.sqrt()).ceil() as usize).clamp(1, 4096);
        let ny = ((target / aspect.sqrt()).ceil() as usize).clamp(1, 4096);
        let mut buckets = vec![Vec::new(); nx * ny];
        let cw = bbox.width() / nx as f64;
        let ch = bbox.height() / ny as f64;
        for (t, tri) in triangles.iter().enumerate() {
            let tb = BoundingBox::of_points(tri.iter().map(|&i| &nodes[i])).unwrap();
            let ix0 = (((tb.min.x - bbox.min.x) / cw).floor().max(0.0) as usize).min(nx - 1);
            let ix1 = (((tb.max.x - bbox.min.x) / cw).floor().max(0.0) as usize).min(nx - 1);
            let iy0 = (((tb.min.y - bbox.min.y) / ch).floor().max(0.0) as usize).min(ny - 1);
            let iy1 = (((tb.max.y - bbox.min.y) / ch).floor().max(0.0) as usize).min(ny - 1);
            for iy in iy0..=iy1 {
                for ix in ix0..=ix1 {
                    buckets[iy * nx + ix].push(t as u32);
                }
            }
        }
        TriangleLocator { bbox, nx, ny, buckets }
    }

    fn candidates(&self, p: &PointKm) -> &[u32] {
        if !self.bbox.expanded(1e-9).contains(p) {
            return &[];
        }
        let cw = self.bbox.width() / self.nx as f64;
        let ch = self.bbox.height() / self.ny as f64;
        let ix = (((p.x - self.bbox.min.x) / cw).floor().max(0.0) as usize).min(self.nx - 1);
        let iy = (((p.y - self.bbox.min.y) / ch).floor().max(0.0) as usize).min(self.ny - 1);
        &self.buckets[iy * self.nx + ix]
    }
}

fn signed_area(a: &PointKm, b: &PointKm, c: &PointKm) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
}

/// Grid line positions over `[lo, hi]` (spacing ≤ `h_in`) padded by `ext` on
/// both sides (spacing ≤ `h_out`).
fn graded_lines(lo: f64, hi: f64, h_in: f64, h_out: f64, ext: f64) -> Vec<f64> {
    let n_in = (((hi - lo) / h_in).ceil() as usize).max(1);
    let n_out = if ext > 0.0 { ((ext / h_out).ceil() as usize).max(1) } else { 0 };
    let mut lines = Vec::with_capacity(n_in + 2 * n_out + 1);
    for k in 0..n_out {
        lines.push(lo - ext + ext * k as f64 / n_out as f64);
    }
    for k in 0..=n_in {
        lines.push(lo + (hi - lo) * k as f64 / n_in as f64);
    }
    for k in 1..=n_out {
        lines.push(hi + ext * k as f64 / n_out as f64);
    }
    lines
}

/// Builds a triangulation covering `domain` plus an extension band of width
/// `extension_width`.
pub fn build_mesh(
    domain: &Polygon,
    max_edge_interior: f64,
    max_edge_exterior: f64,
    extension_width: f64,
) -> Result<TriangulationMesh> {
    if !(max_edge_interior > 0.0) || !max_edge_interior.is_finite() {
        return Err(Error::InvalidInput("max_edge_interior must be positive".into()));
    }
    if !(extension_width >= 0.0) || !extension_width.is_finite() {
        return Err(Error::InvalidInput("extension_width must be non-negative".into()));
    }
    if domain.area() <= 0.0 {
        return Err(Error::InvalidInput("degenerate domain polygon".into()));
    }
    let h_out = if max_edge_exterior > 0.0 {
        max_edge_exterior.max(max_edge_interior)
    } else {
        max_edge_interior
    };
    let bb = domain.bbox();
    let xs = graded_lines(bb.min.x, bb.max.x, max_edge_interior, h_out, extension_width);
    let ys = graded_lines(bb.min.y, bb.max.y, max_edge_interior, h_out, extension_width);
    let (nx, ny) = (xs.len(), ys.len());

    let mut keep = vec![false; (nx - 1) * (ny - 1)];
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let center = PointKm::new(0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1]));
            let half_diag = 0.5 * (xs[i + 1] - xs[i]).hypot(ys[j + 1] - ys[j]);
            keep[j * (nx - 1) + i] = domain.distance(&center) <= extension_width + half_diag;
        }
    }

    let mut node_id = vec![usize::MAX; nx * ny];
    let mut nodes = Vec::new();
    let mut triangles = Vec::new();
    let mut id = |i: usize, j: usize, nodes: &mut Vec<PointKm>| -> usize {
        let slot = &mut node_id[j * nx + i];
        if *slot == usize::MAX {
            *slot = nodes.len();
            nodes.push(PointKm::new(xs[i], ys[j]));
        }
        *slot
    };
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            if !keep[j * (nx - 1) + i] {
                continue;
            }
            let a = id(i, j, &mut nodes);
            let b = id(i + 1, j, &mut nodes);
            let c = id(i + 1, j + 1, &mut nodes);
            let d = id(i, j + 1, &mut nodes);
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    TriangulationMesh::new(nodes, triangles, domain.clone(), extension_width)
}

impl TriangulationMesh {
    /// Assembles a mesh from raw parts, normalising triangle orientation to
    /// counter-clockwise.
    pub fn new(
        nodes: Vec<PointKm>,
        mut triangles: Vec<[usize; 3]>,
        interior_domain: Polygon,
        extension_width: f64,
    ) -> Result<Self> {
        if nodes.is_empty() || triangles.is_empty() {
            return Err(Error::InvalidInput("mesh needs nodes and triangles".into()));
        }
        if nodes.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("mesh node with non-finite coordinates".into()));
        }
        for (t, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&i| i >= nodes.len()) {
                return Err(Error::InvalidInput(format!("triangle {t} has node index out of range")));
            }
            let area = signed_area(&nodes[tri[0]], &nodes[tri[1]], &nodes[tri[2]]);
            if area == 0.0 {
                return Err(Error::DegenerateTriangle { index: t });
            }
            if area < 0.0 {
                tri.swap(1, 2);
            }
        }
        let locator = TriangleLocator::build(&nodes, &triangles);
        Ok(TriangulationMesh {
            nodes,
            triangles,
            interior_domain,
            extension_width,
            locator,
        })
    }

    pub fn nodes(&self) -> &[PointKm] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn interior_domain(&self) -> &Polygon {
        &self.interior_domain
    }

    pub fn extension_width(&self) -> f64 {
        self.extension_width
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(&self.nodes[a], &self.nodes[b], &self.nodes[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Triangle containing `p` together with its barycentric coordinates.
    pub fn locate(&self, p: &PointKm) -> Option<(usize, [f64; 3])> {
        for &t in self.locator.candidates(p) {
            let t = t as usize;
            let [a, b, c] = self.triangles[t];
            let (pa, pb, pc) = (&self.nodes[a], &self.nodes[b], &self.nodes[c]);
            let area = signed_area(pa, pb, pc);
            let l0 = signed_area(p, pb, pc) / area;
            let l1 = signed_area(pa, p, pc) / area;
            let l2 = 1.0 - l0 - l1;
            if l0 >= -BARY_TOL && l1 >= -BARY_TOL && l2 >= -BARY_TOL {
                let clamp = |v: f64| v.max(0.0);
                let (l0, l1, l2) = (clamp(l0), clamp(l1), clamp(l2));
                let s = l0 + l1 + l2;
                return Some((t, [l0 / s, l1 / s, l2 / s]));
            }
        }
        None
    }

    /// Longest edge over triangles whose centroid lies inside the domain.
    pub fn max_interior_edge(&self) -> f64 {
        self.triangles
            .iter()
            .filter(|tri| {
                let c = self.centroid(tri);
                self.interior_domain.contains(&c)
            })
            .flat_map(|tri| {
                (0..3).map(move |k| self.nodes[tri[k]].distance(&self.nodes[tri[(k + 1) % 3]]))
            })
            .fold(0.0, f64::max)
    }

    fn centroid(&self, tri: &[usize; 3]) -> PointKm {
        let (a, b, c) = (self.nodes[tri[0]], self.nodes[tri[1]], self.nodes[tri[2]]);
        PointKm::new((a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0)
    }

    /// Debug export with `NODES` and `TRIANGLES` sections.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# geojitter mesh, coordinates in km");
        let _ = writeln!(out, "EXTENSION {}", self.extension_width);
        let _ = writeln!(out, "NODES {}", self.nodes.len());
        for p in &self.nodes {
            let _ = writeln!(out, "{} {}", p.x, p.y);
        }
        let _ = writeln!(out, "TRIANGLES {}", self.triangles.len());
        for t in &self.triangles {
            let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
        }
        out
    }

    pub fn parse(text: &str, source: &str, interior_domain: Polygon) -> Result<Self> {
        enum Section {
            None,
            Nodes,
            Triangles,
        }
        let mut section = Section::None;
        let mut extension = 0.0;
        let mut nodes = Vec::new();
        let mut triangles = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            let lineno = k + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let head = parts.next().unwrap();
            let bad = |m: String| Error::parse(source, lineno, m);
            match head {
                "EXTENSION" => {
                    extension = parts
                        .next()
                        .ok_or_else(|| bad("missing extension width".into()))?
                        .parse()
                        .map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?;
                }
                "NODES" => section = Section::Nodes,
                "TRIANGLES" => section = Section::Triangles,
                _ => match section {
                    Section::Nodes => {
                        let xy: Vec<f64> = line
                            .split_whitespace()
                            .map(str::parse)
                            .collect::<std::result::Result<_, _>>()
                            .map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?;
                        if xy.len() != 2 {
                            return Err(bad("node line needs `x y`".into()));
                        }
                        nodes.push(PointKm::new(xy[0], xy[1]));
                    }
                    Section::Triangles => {
                        let ijk: Vec<usize> = line
                            .split_whitespace()
                            .map(str::parse)
                            .collect::<std::result::Result<_, _>>()
                            .map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
                        if ijk.len() != 3 {
                            return Err(bad("triangle line needs three indices".into()));
                        }
                        triangles.push([ijk[0], ijk[1], ijk[2]]);
                    }
                    Section::None => return Err(bad(format!("unexpected line `{line}`"))),
                },
            }
        }
        TriangulationMesh::new(nodes, triangles, interior_domain, extension)
    }

    pub fn read(path: impl AsRef<Path>, interior_domain: Polygon) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TriangulationMesh::parse(&text, &path.display().to_string(), interior_domain)
    }
}
