//! Box-constrained quasi-Newton minimisation with finite-difference
//! gradients, for low-dimensional smooth objectives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundedOptions {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub max_evaluations: usize,
    /// Stop when the projected gradient max-norm falls below this.
    pub gradient_tol: f64,
    /// Finite-difference step.
    pub step: f64,
    /// Largest move per iteration in any coordinate.
    pub max_move: f64,
}

impl BoundedOptions {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        BoundedOptions {
            lower,
            upper,
            max_evaluations: 200,
            gradient_tol: 1e-3,
            step: 1e-3,
            max_move: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// Every evaluated point with its value, in order.
    pub trace: Vec<(Vec<f64>, f64)>,
}

struct Counter<'a, F> {
    f: F,
    evaluations: usize,
    max: usize,
    trace: &'a mut Vec<(Vec<f64>, f64)>,
}

impl<F: FnMut(&[f64]) -> Result<f64>> Counter<'_, F> {
    fn call(&mut self, x: &[f64]) -> Result<f64> {
        if self.evaluations >= self.max {
            return Err(Error::OuterConvergence {
                evaluations: self.evaluations,
                trace: format_trace(self.trace),
            });
        }
        self.evaluations += 1;
        let v = (self.f)(x);
        let shown = match &v {
            Ok(v) => *v,
            Err(_) => f64::NAN,
        };
        self.trace.push((x.to_vec(), shown));
        v
    }
}

fn format_trace(trace: &[(Vec<f64>, f64)]) -> String {
    let tail = trace.len().saturating_sub(5);
    trace[tail..]
        .iter()
        .map(|(x, v)| format!("{x:.4?}->{v:.6}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

/// Central differences, one-sided at active bounds.
fn gradient<F: FnMut(&[f64]) -> Result<f64>>(c: &mut Counter<'_, F>, x: &[f64], fx: f64, o: &BoundedOptions) -> Result<Vec<f64>> {
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        let h = o.step;
        let up = x[i] + h <= o.upper[i];
        let down = x[i] - h >= o.lower[i];
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        g[i] = if up && down {
            xp[i] += h;
            xm[i] -= h;
            (c.call(&xp)? - c.call(&xm)?) / (2.0 * h)
        } else if up {
            xp[i] += h;
            (c.call(&xp)? - fx) / h
        } else {
            xm[i] -= h;
            (fx - c.call(&xm)?) / h
        };
    }
    Ok(g)
}

fn projected_gradient(x: &[f64], g: &[f64], o: &BoundedOptions) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            if (x[i] <= o.lower[i] && g[i] > 0.0) || (x[i] >= o.upper[i] && g[i] < 0.0) {
                0.0
            } else {
                g[i]
            }
        })
        .collect()
}

/// Projected BFGS. Objective failures at trial points are treated as
/// infeasible and backtracked from; a failure at the start is returned.
pub fn minimize_bounded<F: FnMut(&[f64]) -> Result<f64>>(f: F, x0: &[f64], o: &BoundedOptions) -> Result<OptimResult> {
    let n = x0.len();
    if o.lower.len() != n || o.upper.len() != n || (0..n).any(|i| !(o.lower[i] <= o.upper[i])) {
        return Err(Error::InvalidInput("inconsistent bounds".into()));
    }
    let mut trace = Vec::new();
    let mut c = Counter {
        f,
        evaluations: 0,
        max: o.max_evaluations,
        trace: &mut trace,
    };
    let mut x = x0.to_vec();
    project(&mut x, &o.lower, &o.upper);
    let mut fx = c.call(&x)?;
    let mut g = gradient(&mut c, &x, fx, o)?;
    let mut inv_h: Vec<f64> = (0..n * n).map(|k| if k % (n + 1) == 0 { 1.0 } else { 0.0 }).collect();
    let mut scaled = false;
    let mut iterations = 0;
    let mut reset = false;
    loop {
        let pg = projected_gradient(&x, &g, o);
        let pg_norm = pg.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if pg_norm < o.gradient_tol {
            break;
        }
        iterations += 1;
        let free: Vec<bool> = pg.iter().zip(&g).map(|(p, gi)| *p != 0.0 || *gi == 0.0).collect();
        let mut d = vec![0.0; n];
        for i in 0..n {
            if !free[i] {
                continue;
            }
            for j in 0..n {
                if free[j] {
                    d[i] -= inv_h[i * n + j] * g[j];
                }
            }
        }
        let mut slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            d = pg.iter().map(|v| -v).collect();
            slope = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        }
        let biggest = d.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let mut t = if biggest > o.max_move { o.max_move / biggest } else { 1.0 };
        let mut accepted = None;
        for _ in 0..30 {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            project(&mut trial, &o.lower, &o.upper);
            let moved: f64 = trial.iter().zip(&x).zip(&g).map(|((a, b), gi)| (a - b) * gi).sum();
            if trial == x {
                break;
            }
            match c.call(&trial) {
                Ok(v) if v <= fx + 1e-4 * moved.min(0.0) && v.is_finite() => {
                    accepted = Some((trial, v));
                    break;
                }
                Err(e @ Error::OuterConvergence { .. }) => return Err(e),
                _ => t *= 0.5,
            }
        }
        let Some((x_new, f_new)) = accepted else {
            if reset {
                // no further progress is possible from this point
                break;
            }
            reset = true;
            inv_h = (0..n * n).map(|k| if k % (n + 1) == 0 { 1.0 } else { 0.0 }).collect();
            scaled = false;
            continue;
        };
        reset = false;
        let g_new = gradient(&mut c, &x_new, f_new, o)?;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let small_change = (fx - f_new).abs() < 1e-10 * (1.0 + fx.abs()) && s.iter().all(|v| v.abs() < 1e-7);
        if sy > 1e-12 {
            if !scaled {
                let yy: f64 = y.iter().map(|v| v * v).sum();
                let gamma = sy / yy;
                inv_h.iter_mut().for_each(|v| *v *= gamma);
                scaled = true;
            }
            // H⁺ = (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| inv_h[i * n + j] * y[j]).sum()).collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    inv_h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        x = x_new;
        fx = f_new;
        g = g_new;
        if small_change {
            break;
        }
    }
    let pg = projected_gradient(&x, &g, o);
    let evaluations = c.evaluations;
    Ok(OptimResult {
        gradient_norm: pg.iter().fold(0.0f64, |a, b| a.max(b.abs())),
        x,
        value: fx,
        evaluations,
        iterations,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_interior_minimum() {
        let f = |x: &[f64]| Ok((x[0] - 1.0).powi(2) + 3.0 * (x[1] + 0.5).powi(2) + 0.5 * x[0] * x[1]);
        let o = BoundedOptions::new(vec![-5.0, -5.0], vec![5.0, 5.0]);
        let r = minimize_bounded(f, &[3.0, 3.0], &o).unwrap();
        // stationary point of the quadratic
        let (a, b) = (1.0f64, -0.5f64);
        let det = 2.0 * 6.0 - 0.25;
        let x0 = (6.0 * 2.0 * a - 0.5 * 6.0 * b) / det;
        let x1 = (2.0 * 6.0 * b - 0.5 * 2.0 * a) / det;
        assert!((r.x[0] - x0).abs() < 1e-3 && (r.x[1] - x1).abs() < 1e-3, "{:?}", r.x);
    }

    #[test]
    fn minimum_on_the_bound() {
        let f = |x: &[f64]| Ok((x[0] + 3.0).powi(2) + (x[1] - 0.2).powi(2));
        let o = BoundedOptions::new(vec![0.0, -1.0], vec![2.0, 1.0]);
        let r = minimize_bounded(f, &[1.5, 0.9], &o).unwrap();
        assert_eq!(r.x[0], 0.0);
        assert!((r.x[1] - 0.2).abs() < 1e-3);
    }

    #[test]
    fn rosenbrock_within_budget() {
        let f = |x: &[f64]| Ok((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2));
        let mut o = BoundedOptions::new(vec![-2.0, -2.0], vec![2.0, 2.0]);
        o.max_evaluations = 2000;
        o.gradient_tol = 1e-5;
        let r = minimize_bounded(f, &[-1.2, 1.0], &o).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-2 && (r.x[1] - 1.0).abs() < 2e-2, "{:?}", r.x);
    }

    #[test]
    fn evaluation_budget_is_enforced() {
        let f = |x: &[f64]| Ok((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2));
        let mut o = BoundedOptions::new(vec![-2.0, -2.0], vec![2.0, 2.0]);
        o.max_evaluations = 10;
        o.gradient_tol = 1e-12;
        match minimize_bounded(f, &[-1.2, 1.0], &o) {
            Err(Error::OuterConvergence { evaluations, .. }) => assert_eq!(evaluations, 10),
            other => panic!("expected budget error, got {other:?}"),
        }
    }
}
