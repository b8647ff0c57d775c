//! Parameter bias and RMSE and predictive CRPS on a handful of numbers.

use geojitter::evaluate::{bias_rmse, crps_gaussian, prediction_scores};

fn main() -> geojitter::Result<()> {
    let (bias, rmse) = bias_rmse(&[138.0, 171.0, 155.0, 162.0], 160.0)?;
    println!("range: bias {bias:.2} km, rmse {rmse:.2} km");
    for sd in [0.1, 0.5, 1.0, 2.0] {
        println!("CRPS of N(0, {sd}²) at 0.5: {:.4}", crps_gaussian(0.0, sd, 0.5)?);
    }
    let s = prediction_scores(&[0.1, -0.4, 1.2], &[0.3, 0.3, 0.5], &[0.0, -0.1, 1.5])?;
    println!("prediction rmse {:.4}, crps {:.4}", s.rmse, s.crps);
    Ok(())
}
