//! Multivariate normal probabilities of axis-aligned rectangles.
//!
//! The probability is written as an integral over the unit cube by the Genz
//! separation-of-variables transform (after greedy variable reordering) and
//! integrated with a randomly shifted lattice rule. The spread of the per-shift
//! estimates gives the error estimate; the lattice size doubles until the
//! estimate meets the tolerance or the point budget runs out.

mod cholesky;
mod lattice;
mod normal;

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cholesky::{cholesky_reordered, ReorderedCholesky};
pub use lattice::MAX_DIM;
pub use normal::{std_normal_cdf, std_normal_pdf, std_normal_quantile};

use crate::linalg::Matrix;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvnSettings {
    /// Target for `error_estimate` (three standard errors across shifts).
    pub abs_tol: f64,
    pub shifts: usize,
    pub min_points: u64,
    pub max_points: u64,
}

impl Default for MvnSettings {
    fn default() -> Self {
        Self {
            abs_tol: 5e-4,
            shifts: 12,
            min_points: 1 << 10,
            max_points: 1 << 19,
        }
    }
}

impl MvnSettings {
    pub fn with_tolerance(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MvnProblem<T> {
    pub mean: Vec<T>,
    pub covariance: Matrix<T>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Scalar> MvnProblem<T> {
    pub fn new(mean: Vec<T>, covariance: Matrix<T>, lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        let problem = Self {
            mean,
            covariance,
            lower,
            upper,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn p(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.mean.len();
        if p == 0 {
            return Err(Error::MvnProblem("empty problem".into()));
        }
        if p > MAX_DIM {
            return Err(Error::MvnProblem(format!("dimension {p} exceeds {MAX_DIM}")));
        }
        if self.covariance.rows() != p || self.covariance.cols() != p || self.lower.len() != p || self.upper.len() != p {
            return Err(Error::MvnProblem("dimension mismatch between mean, covariance and bounds".into()));
        }
        if self.mean.iter().any(|m| !m.is_finite()) || !self.covariance.all_finite() {
            return Err(Error::MvnProblem("non-finite mean or covariance".into()));
        }
        if !self.covariance.is_symmetric(T::lit(1e-10)) {
            return Err(Error::MvnProblem("covariance is not symmetric".into()));
        }
        for (i, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(lo < hi) {
                return Err(Error::MvnProblem(format!("bound {i}: lower {lo} is not below upper {hi}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MvnResult {
    pub probability: f64,
    /// Three times the standard error across random shifts.
    pub error_estimate: f64,
    /// Integrand evaluations (lattice size × shifts).
    pub points_used: u64,
    /// False when the point budget ran out before `error_estimate ≤ abs_tol`.
    pub converged: bool,
}

/// A factorized problem with fixed random shifts, reusable across different
/// bounds. Reusing one integrator (same ordering, same shifts) is what makes
/// repeated evaluations with moving bounds smooth and monotone-consistent.
#[derive(Debug, Clone)]
pub struct RectangleIntegrator {
    permutation: Vec<usize>,
    factor: Vec<f64>,
    p: usize,
    shifts: Vec<Vec<f64>>,
    settings: MvnSettings,
}

impl RectangleIntegrator {
    /// Orders variables for the given (zero-mean) bounds and draws the shifts
    /// from `seed`.
    pub fn new<T: Scalar>(
        covariance: &Matrix<T>,
        lower: &[T],
        upper: &[T],
        settings: MvnSettings,
        seed: u64,
    ) -> Result<Self> {
        let p = covariance.rows();
        if p > MAX_DIM {
            return Err(Error::MvnProblem(format!("dimension {p} exceeds {MAX_DIM}")));
        }
        let ReorderedCholesky { permutation, factor } = cholesky_reordered(covariance, lower, upper)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shifts = (0..settings.shifts.max(2))
            .map(|_| (0..p.saturating_sub(1)).map(|_| rng.random::<f64>()).collect())
            .collect();
        Ok(Self {
            permutation,
            factor: factor.as_slice().iter().map(|x| x.as_f64()).collect(),
            p,
            shifts,
            settings,
        })
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    fn permuted_bounds<T: Scalar>(&self, lower: &[T], upper: &[T]) -> (Vec<f64>, Vec<f64>) {
        let a = self.permutation.iter().map(|&i| lower[i].as_f64()).collect();
        let b = self.permutation.iter().map(|&i| upper[i].as_f64()).collect();
        (a, b)
    }

    fn integrand(&self, a: &[f64], b: &[f64], w: &[f64], y: &mut [f64]) -> f64 {
        let p = self.p;
        let l = &self.factor;
        let mut d = std_normal_cdf(a[0] / l[0]);
        let mut e = std_normal_cdf(b[0] / l[0]);
        let mut f = e - d;
        for i in 1..p {
            if f <= 0.0 {
                return 0.0;
            }
            let u = (d + w[i - 1] * (e - d)).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
            y[i - 1] = normal::quantile_approx(u);
            let row = &l[i * p..i * p + i];
            let s: f64 = row.iter().zip(y.iter()).map(|(lik, yk)| lik * yk).sum();
            let lii = l[i * p + i];
            d = std_normal_cdf((a[i] - s) / lii);
            e = std_normal_cdf((b[i] - s) / lii);
            f *= e - d;
        }
        f.max(0.0)
    }

    fn accumulate(&self, a: &[f64], b: &[f64], range: Range<u64>, sums: &mut [f64]) {
        let dims = self.p - 1;
        self.shifts.par_iter().zip(sums.par_iter_mut()).for_each(|(shift, sum)| {
            let mut w = vec![0.0; dims];
            let mut y = vec![0.0; dims];
            let mut acc = 0.0;
            for k in range.clone() {
                lattice::point(k, shift, &mut w);
                acc += self.integrand(a, b, &w, &mut y);
            }
            *sum += acc;
        });
    }

    fn summarize(&self, sums: &[f64], n: u64) -> (f64, f64) {
        let r = sums.len() as f64;
        let estimates: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
        let mean = estimates.iter().sum::<f64>() / r;
        let var = estimates.iter().map(|q| (q - mean) * (q - mean)).sum::<f64>() / (r - 1.0);
        (mean.clamp(0.0, 1.0), 3.0 * (var / r).sqrt())
    }

    fn exact_univariate(&self, a: &[f64], b: &[f64]) -> MvnResult {
        let sd = self.factor[0];
        MvnResult {
            probability: (std_normal_cdf(b[0] / sd) - std_normal_cdf(a[0] / sd)).clamp(0.0, 1.0),
            error_estimate: 0.0,
            points_used: 0,
            converged: true,
        }
    }

    /// Adaptive evaluation: doubles the lattice from `min_points` until the
    /// error estimate is within `abs_tol` or `max_points` is reached.
    pub fn probability<T: Scalar>(&self, lower: &[T], upper: &[T]) -> MvnResult {
        let (a, b) = self.permuted_bounds(lower, upper);
        if self.p == 1 {
            return self.exact_univariate(&a, &b);
        }
        let mut sums = vec![0.0; self.shifts.len()];
        let mut done = 0;
        let mut target = self.settings.min_points.max(2);
        loop {
            self.accumulate(&a, &b, done..target, &mut sums);
            done = target;
            let (prob, err) = self.summarize(&sums, done);
            let converged = err <= self.settings.abs_tol;
            if converged || done >= self.settings.max_points {
                return MvnResult {
                    probability: prob,
                    error_estimate: err,
                    points_used: done * self.shifts.len() as u64,
                    converged,
                };
            }
            target = (done * 2).min(self.settings.max_points);
        }
    }

    /// Evaluation with a fixed lattice size.
    pub fn probability_with_points<T: Scalar>(&self, lower: &[T], upper: &[T], points: u64) -> MvnResult {
        let (a, b) = self.permuted_bounds(lower, upper);
        if self.p == 1 {
            return self.exact_univariate(&a, &b);
        }
        let mut sums = vec![0.0; self.shifts.len()];
        let points = points.max(2);
        self.accumulate(&a, &b, 0..points, &mut sums);
        let (prob, err) = self.summarize(&sums, points);
        MvnResult {
            probability: prob,
            error_estimate: err,
            points_used: points * self.shifts.len() as u64,
            converged: err <= self.settings.abs_tol,
        }
    }

    /// Lattice size (per shift) that an adaptive run ended with.
    pub fn lattice_size(&self, result: &MvnResult) -> u64 {
        result.points_used / self.shifts.len() as u64
    }
}

/// P(lower ≤ U ≤ upper) for U ~ N(mean, covariance).
pub fn mvn_rectangle_probability<T: Scalar>(problem: &MvnProblem<T>, abs_tol: f64, seed: u64) -> Result<MvnResult> {
    mvn_rectangle_probability_with(problem, MvnSettings::with_tolerance(abs_tol), seed)
}

pub fn mvn_rectangle_probability_with<T: Scalar>(
    problem: &MvnProblem<T>,
    settings: MvnSettings,
    seed: u64,
) -> Result<MvnResult> {
    problem.validate()?;
    let lower: Vec<T> = problem.lower.iter().zip(&problem.mean).map(|(&l, &m)| l - m).collect();
    let upper: Vec<T> = problem.upper.iter().zip(&problem.mean).map(|(&u, &m)| u - m).collect();
    let integrator = RectangleIntegrator::new(&problem.covariance, &lower, &upper, settings, seed)?;
    Ok(integrator.probability(&lower, &upper))
}
