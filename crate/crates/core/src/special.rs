//! Scalar special functions.

/// Modified Bessel function of the first kind, order one, for `|x| ≤ 3.75`
/// (Abramowitz & Stegun 9.8.3).
fn bessel_i1_small(x: f64) -> f64 {
    let t = x / 3.75;
    let t2 = t * t;
    x * (0.5
        + t2 * (0.878_905_94
            + t2 * (0.514_988_69 + t2 * (0.150_849_34 + t2 * (0.026_587_33 + t2 * (0.003_015_32 + t2 * 0.000_324_11))))))
}

/// Modified Bessel function of the second kind, order one, `x > 0`
/// (Abramowitz & Stegun 9.8.7 and 9.8.8; relative error below 3e-7).
pub fn bessel_k1(x: f64) -> f64 {
    assert!(x > 0.0, "bessel_k1 requires x > 0");
    if x <= 2.0 {
        let y = x * x / 4.0;
        let poly = 1.0
            + y * (0.154_431_44
                + y * (-0.672_785_79
                    + y * (-0.181_568_97 + y * (-0.019_194_02 + y * (-0.001_104_04 + y * (-0.000_046_86))))));
        (poly + x * (x / 2.0).ln() * bessel_i1_small(x)) / x
    } else {
        let y = 2.0 / x;
        let poly = 1.253_314_14
            + y * (0.234_986_19
                + y * (-0.036_556_20
                    + y * (0.015_042_68 + y * (-0.007_803_53 + y * (0.003_256_14 + y * (-0.000_682_45))))));
        poly * (-x).exp() / x.sqrt()
    }
}

/// `x · K₁(x)` with the limit 1 at `x = 0`.
pub fn x_bessel_k1(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        x * bessel_k1(x)
    }
}

pub fn inv_logit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `log(1 + eˣ)` without overflow.
pub fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Standard normal density.
pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `K₁(x) = ∫₀^∞ exp(−x cosh t) cosh t dt` by composite Simpson.
    fn k1_quadrature(x: f64) -> f64 {
        let upper = (60.0 / x).max(1.0).acosh() + 1.0;
        let n = 20_000;
        let h = upper / n as f64;
        let f = |t: f64| (-x * t.cosh()).exp() * t.cosh();
        let mut s = f(0.0) + f(upper);
        for k in 1..n {
            s += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn k1_matches_integral_representation() {
        for &x in &[0.01, 0.1, 0.5, 1.0, 1.9, 2.0, 2.1, std::f64::consts::SQRT_2 * 2.0, 5.0, 12.0, 28.0] {
            let approx = bessel_k1(x);
            let oracle = k1_quadrature(x);
            assert!(((approx - oracle) / oracle).abs() < 1e-6, "x={x}: {approx} vs {oracle}");
        }
    }

    #[test]
    fn logistic_helpers_are_stable() {
        assert!((inv_logit(0.0) - 0.5).abs() < 1e-15);
        assert_eq!(inv_logit(-800.0), 0.0);
        assert_eq!(inv_logit(800.0), 1.0);
        assert!((logit(inv_logit(1.3)) - 1.3).abs() < 1e-12);
        assert!((log1p_exp(800.0) - 800.0).abs() < 1e-12);
        assert!((log1p_exp(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert!((std_normal_cdf(0.0) - 0.5).abs() < 1e-15);
        let v = std_normal_cdf(1.959_963_984_540_054);
        assert!((v - 0.975).abs() < 1e-11, "{v}");
    }
}
