//! Piecewise-linear finite elements on a [`TriangulationMesh`]: lumped mass
//! matrix, stiffness matrix and barycentric projection of query points.

use crate::error::{Error, Result};
use crate::geometry::PointKm;
use crate::mesh::TriangulationMesh;
use crate::sparse::CsrMatrix;

/// Lumped mass `C` (stored as its diagonal) and stiffness `G`.
#[derive(Debug, Clone)]
pub struct FemMatrices {
    pub c_diag: Vec<f64>,
    pub g: CsrMatrix,
}

impl FemMatrices {
    pub fn dim(&self) -> usize {
        self.c_diag.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.c_diag.iter().sum()
    }
}

pub fn fem_matrices(mesh: &TriangulationMesh) -> Result<FemMatrices> {
    let m = mesh.num_nodes();
    let nodes = mesh.nodes();
    let mut c_diag = vec![0.0; m];
    let mut triplets = Vec::with_capacity(9 * mesh.triangles().len());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let p = [nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]];
        let area = 0.5 * ((p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[2].x - p[0].x) * (p[1].y - p[0].y));
        if !(area.abs() > 0.0) {
            return Err(Error::DegenerateTriangle { index: t });
        }
        let area = area.abs();
        // edge opposite vertex k
        let e: [(f64, f64); 3] = std::array::from_fn(|k| {
            let (a, b) = (p[(k + 1) % 3], p[(k + 2) % 3]);
            (b.x - a.x, b.y - a.y)
        });
        for a in 0..3 {
            c_diag[tri[a]] += area / 3.0;
            for b in 0..3 {
                let g = (e[a].0 * e[b].0 + e[a].1 * e[b].1) / (4.0 * area);
                triplets.push((tri[a], tri[b], g));
            }
        }
    }
    let g = CsrMatrix::from_triplets(m, m, &triplets);
    Ok(FemMatrices { c_diag, g })
}

/// Sparse basis evaluation rows: `ũ(s) = a(s)ᵀ w`.
#[derive(Debug, Clone)]
pub struct BasisProjection {
    pub rows: CsrMatrix,
    /// `true` where the query point lies outside the mesh (all-zero row).
    pub outside: Vec<bool>,
}

impl BasisProjection {
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        self.rows.row(i)
    }
}

/// Barycentric weights of `p` as `(node, weight)` pairs, or `None` outside the mesh.
pub fn project_point(mesh: &TriangulationMesh, p: &PointKm) -> Option<[(usize, f64); 3]> {
    let (t, bary) = mesh.locate(p)?;
    let tri = mesh.triangles()[t];
    Some([(tri[0], bary[0]), (tri[1], bary[1]), (tri[2], bary[2])])
}

pub fn project(mesh: &TriangulationMesh, points: &[PointKm]) -> BasisProjection {
    let mut triplets = Vec::with_capacity(3 * points.len());
    let mut outside = vec![false; points.len()];
    for (i, p) in points.iter().enumerate() {
        match project_point(mesh, p) {
            Some(entries) => {
                for (node, w) in entries {
                    if w > 0.0 {
                        triplets.push((i, node, w));
                    }
                }
            }
            None => outside[i] = true,
        }
    }
    BasisProjection {
        rows: CsrMatrix::from_triplets(points.len(), mesh.num_nodes(), &triplets),
        outside,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polygon;
    use crate::mesh::build_mesh;
    use proptest::prelude::*;

    fn mesh() -> TriangulationMesh {
        build_mesh(&Polygon::rectangle(0.0, 0.0, 50.0, 40.0).unwrap(), 7.0, 12.0, 15.0).unwrap()
    }

    #[test]
    fn single_right_triangle_mass() {
        let nodes = vec![PointKm::new(0.0, 0.0), PointKm::new(1.0, 0.0), PointKm::new(0.0, 1.0)];
        let domain = Polygon::rectangle(0.0, 0.0, 1.0, 1.0).unwrap();
        let m = TriangulationMesh::new(nodes, vec![[0, 1, 2]], domain, 0.0).unwrap();
        let fem = fem_matrices(&m).unwrap();
        assert!((fem.total_mass() - 0.5).abs() < 1e-15);
        // stiffness of the reference triangle
        assert!((fem.g.get(0, 0) - 1.0).abs() < 1e-15);
        assert!((fem.g.get(1, 1) - 0.5).abs() < 1e-15);
        assert!((fem.g.get(0, 1) + 0.5).abs() < 1e-15);
        assert!(fem.g.get(1, 2).abs() < 1e-15);
    }

    #[test]
    fn mass_equals_area_and_constants_in_nullspace() {
        let m = mesh();
        let fem = fem_matrices(&m).unwrap();
        let area = m.total_area();
        assert!(((fem.total_mass() - area) / area).abs() < 1e-8);
        assert!(fem.c_diag.iter().all(|&c| c > 0.0));
        assert!(fem.g.is_symmetric(1e-14));
        let g1 = fem.g.mul_vec(&vec![1.0; m.num_nodes()]);
        assert!(g1.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn node_and_centroid_projection() {
        let m = mesh();
        let i = 17;
        let proj = project(&m, &[m.nodes()[i]]);
        let (cols, vals) = proj.row(0);
        assert_eq!(cols, &[i]);
        assert!((vals[0] - 1.0).abs() < 1e-12);

        let tri = m.triangles()[5];
        let c = PointKm::new(
            tri.iter().map(|&k| m.nodes()[k].x).sum::<f64>() / 3.0,
            tri.iter().map(|&k| m.nodes()[k].y).sum::<f64>() / 3.0,
        );
        let proj = project(&m, &[c]);
        let (cols, vals) = proj.row(0);
        assert_eq!(cols.len(), 3);
        assert!(vals.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn outside_points_are_flagged() {
        let m = mesh();
        let proj = project(&m, &[PointKm::new(-1000.0, 0.0)]);
        assert!(proj.outside[0]);
        assert_eq!(proj.row(0).0.len(), 0);
    }

    proptest! {
        #[test]
        fn affine_functions_are_reproduced(
            x in -15.0f64..65.0, y in -15.0f64..55.0,
            a in -5.0f64..5.0, b in -1.0f64..1.0, c in -1.0f64..1.0,
        ) {
            let m = mesh();
            let f = |p: &PointKm| a + b * p.x + c * p.y;
            let nodal: Vec<f64> = m.nodes().iter().map(f).collect();
            let p = PointKm::new(x, y);
            let proj = project(&m, &[p]);
            prop_assert!(!proj.outside[0]);
            let (cols, vals) = proj.row(0);
            prop_assert!(cols.len() <= 3);
            prop_assert!(vals.iter().all(|&v| v >= 0.0));
            prop_assert!((vals.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let recon: f64 = cols.iter().zip(vals).map(|(&j, &v)| v * nodal[j]).sum();
            prop_assert!((recon - f(&p)).abs() < 1e-10);
            // x + 2y exactly
            let lin: f64 = cols.iter().zip(vals).map(|(&j, &v)| v * (m.nodes()[j].x + 2.0 * m.nodes()[j].y)).sum();
            prop_assert!((lin - (x + 2.0 * y)).abs() < 1e-12 * (1.0 + x.abs() + 2.0 * y.abs()) * 10.0);
        }
    }
}
