//! Reference computations independent of the library's MVN engine.
#![allow(dead_code)]

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over [a, b].
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// P(lower < X < upper) for X ~ N(mean, cov), 2×2, by integrating the
/// conditional probability of the second coordinate against the first.
pub fn bivariate_rectangle(mean: [f64; 2], cov: [[f64; 2]; 2], lower: [f64; 2], upper: [f64; 2]) -> f64 {
    let n = std_normal();
    let (s1, s2) = (cov[0][0].sqrt(), cov[1][1].sqrt());
    let rho = cov[0][1] / (s1 * s2);
    let a1 = ((lower[0] - mean[0]) / s1).max(-12.0);
    let b1 = ((upper[0] - mean[0]) / s1).min(12.0);
    if a1 >= b1 {
        return 0.0;
    }
    let a2 = (lower[1] - mean[1]) / s2;
    let b2 = (upper[1] - mean[1]) / s2;
    let r = (1.0 - rho * rho).sqrt();
    let f = |x: f64| n.pdf(x) * (n.cdf((b2 - rho * x) / r) - n.cdf((a2 - rho * x) / r));
    integrate(&f, a1, b1, 1e-12)
}

/// Π_i P(lower_i < X_i < upper_i) for independent normals.
pub fn independent_rectangle(mean: &[f64], var: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    let n = std_normal();
    (0..mean.len())
        .map(|i| {
            let s = var[i].sqrt();
            n.cdf((upper[i] - mean[i]) / s) - n.cdf((lower[i] - mean[i]) / s)
        })
        .product()
}

pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

#[test]
fn oracle_self_check() {
    // P(X>0, Y>0) = 1/4 + asin(ρ)/(2π)
    let rho: f64 = 0.6;
    let got = bivariate_rectangle([0.0; 2], [[1.0, rho], [rho, 1.0]], [0.0, 0.0], [f64::INFINITY; 2]);
    let exact = 0.25 + rho.asin() / (2.0 * std::f64::consts::PI);
    assert!((got - exact).abs() < 1e-9, "{got} vs {exact}");
    let ind = independent_rectangle(&[0.0; 2], &[1.0; 2], &[-1.959963984540054; 2], &[1.959963984540054; 2]);
    assert!((ind - 0.9025).abs() < 1e-9, "{ind}");
}
