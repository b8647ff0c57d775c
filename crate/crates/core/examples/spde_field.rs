//! Builds the SPDE precision for a chosen range and variance and compares
//! the marginal variance and correlation at the centre of the domain with
//! the Matérn values.

use geojitter::fem::{fem_matrices, project_point};
use geojitter::geometry::{PointKm, Polygon};
use geojitter::mesh::build_mesh;
use geojitter::spde::{matern_correlation, precision, Hyperparameters};

fn main() -> geojitter::Result<()> {
    let (sigma2, rho) = (1.0, 60.0);
    let domain = Polygon::rectangle(0.0, 0.0, 300.0, 300.0)?;
    let mesh = build_mesh(&domain, 8.0, 30.0, 2.0 * rho)?;
    let fem = fem_matrices(&mesh)?;
    let q = precision(&fem, &Hyperparameters::from_natural(sigma2, rho))?;
    let centre = PointKm::new(150.0, 150.0);
    let a0 = project_point(&mesh, &centre).unwrap();
    let var = q.chol.quad_form_inverse(&a0);
    println!("nodes {}, log det Q {:.2}", mesh.num_nodes(), q.log_det());
    println!("variance at centre {var:.3} (target {sigma2})");
    let column = |a: &[(usize, f64)]| {
        let mut e = vec![0.0; mesh.num_nodes()];
        for &(j, w) in a {
            e[j] = w;
        }
        q.chol.solve(&e)
    };
    let sigma_a0 = column(&a0);
    for d in [10.0, 30.0, 60.0, 100.0] {
        let a = project_point(&mesh, &centre.offset(d, 0.0)).unwrap();
        let cov: f64 = a.iter().map(|&(j, w)| w * sigma_a0[j]).sum();
        let var_d = q.chol.quad_form_inverse(&a);
        println!("lag {d:>5} km: correlation {:.3}, Matérn {:.3}", cov / (var * var_d).sqrt(), matern_correlation(d, rho));
    }
    Ok(())
}
