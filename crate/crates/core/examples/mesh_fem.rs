//! Triangulates a 200 km square with an outer extension and prints the
//! finite-element summary. Arguments: interior and exterior edge length.

use geojitter::fem::fem_matrices;
use geojitter::geometry::Polygon;
use geojitter::mesh::build_mesh;

fn main() -> geojitter::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<f64>().ok());
    let inner = args.next().flatten().unwrap_or(10.0);
    let outer = args.next().flatten().unwrap_or(30.0);
    let domain = Polygon::rectangle(0.0, 0.0, 200.0, 200.0)?;
    let mesh = build_mesh(&domain, inner, outer, 60.0)?;
    let fem = fem_matrices(&mesh)?;
    println!("nodes {}, triangles {}", mesh.num_nodes(), mesh.triangles().len());
    println!("longest interior edge {:.2} km", mesh.max_interior_edge());
    // lumped mass sums to the meshed area
    println!("mesh area {:.1} km², total mass {:.1}", mesh.total_area(), fem.total_mass());
    let row_sum = (0..fem.dim()).map(|i| fem.g.row(i).1.iter().sum::<f64>().abs()).fold(0.0, f64::max);
    println!("largest |stiffness row sum| {row_sum:.2e}");
    Ok(())
}
