use geojitter::inference::{LatentModel, PriorPrecision};

/// Relative errors of the analytic gradient and Hessian of the negative log
/// joint against central differences (of the value and of the gradient).
pub fn derivative_errors(model: &LatentModel, prior: &PriorPrecision, x: &[f64]) -> (f64, f64) {
    let ev = model.neg_log_joint(prior, x).unwrap();
    let n = x.len();
    let mut fd_grad = vec![0.0; n];
    let mut fd_hess = Vec::with_capacity(n * n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = 1e-5 * (1.0 + x[j].abs());
        xp[j] = x[j] + h;
        let up = model.neg_log_joint(prior, &xp).unwrap();
        xp[j] = x[j] - h;
        let down = model.neg_log_joint(prior, &xp).unwrap();
        xp[j] = x[j];
        fd_grad[j] = (up.value - down.value) / (2.0 * h);
        fd_hess.extend(up.gradient.iter().zip(&down.gradient).map(|(a, b)| (a - b) / (2.0 * h)));
    }
    // column j of the difference quotient is row j of the symmetric Hessian
    let dense = ev.hessian.to_dense();
    let analytic: Vec<f64> = dense.into_iter().flatten().collect();
    (super::rel_error(&ev.gradient, &fd_grad), super::rel_error(&analytic, &fd_hess))
}
