//! Hyperrectangular confidence regions `ν̂_i ± z·√(Σ_ii/n)`.
//!
//! * uncorrected: `z = z_{1−α/2}`, simultaneous coverage at most 1 − α;
//! * Bonferroni: `z = z_{1−α/(2p)}`, coverage at least 1 − α;
//! * simultaneous: `z*` between the two, found by bisection so that the
//!   plug-in normal law puts probability 1 − α on the rectangle.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::covariance::AsymptoticCovariance;
use crate::estimation::JointEstimate;
use crate::mvn::{std_normal_quantile, MvnResult, MvnSettings, RectangleIntegrator};
use crate::{Error, Result, Scalar, Warning};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionMethod {
    Uncorrected,
    Simultaneous,
    Bonferroni,
}

impl RegionMethod {
    pub const ALL: [Self; 3] = [Self::Uncorrected, Self::Simultaneous, Self::Bonferroni];

    /// Short tag: LB, SI, UB.
    pub fn tag(self) -> &'static str {
        match self {
            Self::Uncorrected => "LB",
            Self::Simultaneous => "SI",
            Self::Bonferroni => "UB",
        }
    }
}

impl fmt::Display for RegionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Uncorrected => "uncorrected",
            Self::Simultaneous => "simultaneous",
            Self::Bonferroni => "bonferroni",
        })
    }
}

impl FromStr for RegionMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uncorrected" | "lb" => Ok(Self::Uncorrected),
            "simultaneous" | "si" => Ok(Self::Simultaneous),
            "bonferroni" | "ub" => Ok(Self::Bonferroni),
            other => Err(Error::Config(format!("unknown region method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionOptions {
    pub mvn: MvnSettings,
    /// Bisection stops once |coverage − (1 − α)| ≤ cov_tol.
    pub cov_tol: f64,
    pub seed: u64,
}

impl Default for RegionOptions {
    fn default() -> Self {
        Self {
            mvn: MvnSettings::default(),
            cov_tol: 1e-3,
            seed: 0,
        }
    }
}

impl RegionOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceRegion<T> {
    pub method: RegionMethod,
    pub alpha: f64,
    pub z: T,
    /// (lower, upper) per coordinate, in estimate order.
    pub intervals: Vec<(T, T)>,
    pub half_widths: Vec<T>,
    /// Probability of the rectangle under N(ν̂, Σ̂/n).
    pub achieved_coverage: MvnResult,
    pub warnings: Vec<Warning>,
}

impl<T: Scalar> ConfidenceRegion<T> {
    pub fn contains(&self, point: &[T]) -> bool {
        point.len() == self.intervals.len()
            && point
                .iter()
                .zip(&self.intervals)
                .all(|(&x, &(lo, hi))| lo <= x && x <= hi)
    }

    pub fn p(&self) -> usize {
        self.intervals.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionSet<T> {
    pub uncorrected: ConfidenceRegion<T>,
    pub simultaneous: ConfidenceRegion<T>,
    pub bonferroni: ConfidenceRegion<T>,
}

impl<T: Scalar> RegionSet<T> {
    pub fn get(&self, method: RegionMethod) -> &ConfidenceRegion<T> {
        match method {
            RegionMethod::Uncorrected => &self.uncorrected,
            RegionMethod::Simultaneous => &self.simultaneous,
            RegionMethod::Bonferroni => &self.bonferroni,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &ConfidenceRegion<T>> {
        [&self.uncorrected, &self.simultaneous, &self.bonferroni].into_iter()
    }
}

pub fn uncorrected_z(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    std_normal_quantile(1.0 - alpha / 2.0)
}

pub fn bonferroni_z(alpha: f64, p: usize) -> Result<f64> {
    check_alpha(alpha)?;
    std_normal_quantile(1.0 - alpha / (2.0 * p.max(1) as f64))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Region(format!("alpha {alpha} is not inside (0, 1)")))
    }
}

/// The standardized problem: coverage of `C(z)` is `P(|Y_i| ≤ z ∀i)` with
/// `Y ~ N(0, R)`, R the correlation matrix of the assembled covariance.
struct Calibrator<'a, T> {
    estimate: &'a JointEstimate<T>,
    standard_errors: Vec<T>,
    integrator: RectangleIntegrator,
    p: usize,
}

impl<'a, T: Scalar> Calibrator<'a, T> {
    fn new(
        estimate: &'a JointEstimate<T>,
        acov: &AsymptoticCovariance<T>,
        order_at_z: f64,
        options: &RegionOptions,
    ) -> Result<Self> {
        let p = estimate.p();
        if acov.p() != p || acov.assembled.rows() != p {
            return Err(Error::Region(format!(
                "estimate has {p} coordinates, covariance has {}",
                acov.assembled.rows()
            )));
        }
        if acov.n != estimate.n {
            return Err(Error::Region(format!(
                "estimate uses n = {}, covariance n = {}",
                estimate.n, acov.n
            )));
        }
        let standard_errors = acov.standard_errors();
        if let Some(i) = standard_errors.iter().position(|s| !(*s > T::zero() && s.is_finite())) {
            return Err(Error::Region(format!(
                "coordinate {i} has non-positive asymptotic variance {}",
                acov.assembled[(i, i)]
            )));
        }
        let (corr, _) = acov.assembled.to_correlation();
        let z = T::lit(order_at_z);
        let integrator = RectangleIntegrator::new(&corr, &vec![-z; p], &vec![z; p], options.mvn, options.seed)
            .map_err(|e| match e {
                Error::Factorization { pivot, value } => Error::Region(format!(
                    "assembled covariance is not positive definite (coordinate {pivot}, pivot {value:e})"
                )),
                other => other,
            })?;
        Ok(Self {
            estimate,
            standard_errors,
            integrator,
            p,
        })
    }

    fn bounds(&self, z: f64) -> (Vec<f64>, Vec<f64>) {
        (vec![-z; self.p], vec![z; self.p])
    }

    fn coverage(&self, z: f64) -> MvnResult {
        let (lo, hi) = self.bounds(z);
        self.integrator.probability(&lo, &hi)
    }

    fn coverage_with_points(&self, z: f64, points: u64) -> MvnResult {
        let (lo, hi) = self.bounds(z);
        self.integrator.probability_with_points(&lo, &hi, points)
    }

    fn region(&self, method: RegionMethod, alpha: f64, z: f64, coverage: MvnResult) -> ConfidenceRegion<T> {
        let zt = T::lit(z);
        let half_widths: Vec<T> = self.standard_errors.iter().map(|&s| zt * s).collect();
        let intervals = self
            .estimate
            .nu_hat
            .iter()
            .zip(&half_widths)
            .map(|(&c, &h)| (c - h, c + h))
            .collect();
        let mut warnings = Vec::new();
        if !coverage.converged {
            warnings.push(Warning::new(
                "region",
                format!(
                    "{method} coverage: MVN error estimate {:.2e} above tolerance",
                    coverage.error_estimate
                ),
            ));
        }
        ConfidenceRegion {
            method,
            alpha,
            z: zt,
            intervals,
            half_widths,
            achieved_coverage: coverage,
            warnings,
        }
    }

    fn fixed(&self, method: RegionMethod, alpha: f64, z: f64) -> ConfidenceRegion<T> {
        self.region(method, alpha, z, self.coverage(z))
    }

    fn simultaneous(&self, alpha: f64, options: &RegionOptions) -> Result<ConfidenceRegion<T>> {
        if options.cov_tol < 2.0 * options.mvn.abs_tol {
            return Err(Error::Region(format!(
                "coverage tolerance {} must be at least twice the MVN tolerance {}",
                options.cov_tol, options.mvn.abs_tol
            )));
        }
        let target = 1.0 - alpha;
        let z_lo = uncorrected_z(alpha)?;
        let z_hi = bonferroni_z(alpha, self.p)?;
        if self.p == 1 {
            return Ok(self.fixed(RegionMethod::Simultaneous, alpha, z_lo));
        }
        // Fix the lattice size once so every bisection step integrates the same
        // points: the estimated coverage is then a smooth function of z.
        let at_lo = self.coverage(z_lo);
        let at_hi = self.coverage(z_hi);
        let points = self
            .integrator
            .lattice_size(&at_lo)
            .max(self.integrator.lattice_size(&at_hi));
        let f_lo = self.coverage_with_points(z_lo, points);
        if f_lo.probability >= target - options.cov_tol {
            return Ok(self.region(RegionMethod::Simultaneous, alpha, z_lo, f_lo));
        }
        let (mut lo, mut hi) = (z_lo, z_hi);
        let mut best = None;
        while hi - lo >= 1e-6 {
            let mid = 0.5 * (lo + hi);
            let f = self.coverage_with_points(mid, points);
            if (f.probability - target).abs() <= options.cov_tol {
                best = Some((mid, f));
                break;
            }
            if f.probability < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (z, f) = best.unwrap_or_else(|| (hi, self.coverage_with_points(hi, points)));
        Ok(self.region(RegionMethod::Simultaneous, alpha, z, f))
    }
}

pub fn uncorrected_region<T: Scalar>(
    estimate: &JointEstimate<T>,
    acov: &AsymptoticCovariance<T>,
    alpha: f64,
    options: &RegionOptions,
) -> Result<ConfidenceRegion<T>> {
    let z = uncorrected_z(alpha)?;
    let cal = Calibrator::new(estimate, acov, z, options)?;
    Ok(cal.fixed(RegionMethod::Uncorrected, alpha, z))
}

pub fn bonferroni_region<T: Scalar>(
    estimate: &JointEstimate<T>,
    acov: &AsymptoticCovariance<T>,
    alpha: f64,
    options: &RegionOptions,
) -> Result<ConfidenceRegion<T>> {
    let z = bonferroni_z(alpha, estimate.p())?;
    let cal = Calibrator::new(estimate, acov, z, options)?;
    Ok(cal.fixed(RegionMethod::Bonferroni, alpha, z))
}

pub fn simultaneous_region<T: Scalar>(
    estimate: &JointEstimate<T>,
    acov: &AsymptoticCovariance<T>,
    alpha: f64,
    options: &RegionOptions,
) -> Result<ConfidenceRegion<T>> {
    let z = uncorrected_z(alpha)?;
    let cal = Calibrator::new(estimate, acov, z, options)?;
    cal.simultaneous(alpha, options)
}

/// All three regions, sharing one factorization and one set of shifts.
pub fn build_regions<T: Scalar>(
    estimate: &JointEstimate<T>,
    acov: &AsymptoticCovariance<T>,
    alpha: f64,
    options: &RegionOptions,
) -> Result<RegionSet<T>> {
    let z_lo = uncorrected_z(alpha)?;
    let z_hi = bonferroni_z(alpha, estimate.p())?;
    let cal = Calibrator::new(estimate, acov, z_lo, options)?;
    Ok(RegionSet {
        uncorrected: cal.fixed(RegionMethod::Uncorrected, alpha, z_lo),
        simultaneous: cal.simultaneous(alpha, options)?,
        bonferroni: cal.fixed(RegionMethod::Bonferroni, alpha, z_hi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::EstimandSpec;
    use crate::linalg::Matrix;

    fn setup(cov: Vec<Vec<f64>>, n: usize) -> (JointEstimate<f64>, AsymptoticCovariance<f64>) {
        let p = cov.len();
        let spec = EstimandSpec::means((0..p).map(|_| "x"));
        let assembled = Matrix::from_rows(&cov).unwrap();
        let estimate = JointEstimate {
            nu_hat: (0..p).map(|i| i as f64).collect(),
            n,
            spec,
        };
        let acov = AsymptoticCovariance {
            sigma_hat: assembled.clone(),
            lambda_inv: vec![1.0; p],
            assembled,
            n,
        };
        (estimate, acov)
    }

    fn identity(p: usize) -> Vec<Vec<f64>> {
        (0..p).map(|i| (0..p).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
    }

    #[test]
    fn z_values() {
        assert!((uncorrected_z(0.10).unwrap() - 1.644_854).abs() < 1e-5);
        assert!((bonferroni_z(0.10, 3).unwrap() - 2.128_045).abs() < 1e-5);
        assert!(uncorrected_z(0.0).is_err());
        assert!(uncorrected_z(1.0).is_err());
    }

    #[test]
    fn univariate_regions_coincide() {
        let (e, a) = setup(vec![vec![4.0]], 100);
        let set = build_regions(&e, &a, 0.1, &RegionOptions::default()).unwrap();
        assert_eq!(set.uncorrected.intervals, set.bonferroni.intervals);
        assert_eq!(set.uncorrected.intervals, set.simultaneous.intervals);
        assert!((set.uncorrected.achieved_coverage.probability - 0.9).abs() < 1e-12);
        // half width = z·√(4/100)
        assert!((set.uncorrected.half_widths[0] - 1.644_853_626_951_472_7 * 0.2).abs() < 1e-12);
    }

    #[test]
    fn independent_triple() {
        let (e, a) = setup(identity(3), 50);
        let set = build_regions(&e, &a, 0.1, &RegionOptions::default()).unwrap();
        assert!((set.uncorrected.achieved_coverage.probability - 0.729).abs() < 2e-3);
        let bonf = (1.0f64 - 0.1 / 3.0).powi(3);
        assert!((set.bonferroni.achieved_coverage.probability - bonf).abs() < 2e-3);
        assert!(set.bonferroni.achieved_coverage.probability > 0.90);
        assert!((set.simultaneous.achieved_coverage.probability - 0.9).abs() <= 1e-3);
    }

    #[test]
    fn independent_pair_closed_form() {
        let (e, a) = setup(identity(2), 10);
        let r = simultaneous_region(&e, &a, 0.1, &RegionOptions::default()).unwrap();
        // Φ⁻¹((1 + √0.9)/2)
        let exact = 1.948_821_862_507_058_6;
        assert!((r.z - exact).abs() < 5e-3, "z* = {}", r.z);
        assert!((r.achieved_coverage.probability - 0.9).abs() <= 1e-3);
    }

    #[test]
    fn near_perfect_correlation() {
        let (e, a) = setup(vec![vec![1.0, 0.9999], vec![0.9999, 1.0]], 10);
        let r = simultaneous_region(&e, &a, 0.1, &RegionOptions::default()).unwrap();
        assert!((r.z - uncorrected_z(0.1).unwrap()).abs() < 1e-2);
    }

    #[test]
    fn nesting() {
        let (e, a) = setup(
            vec![vec![2.0, 0.6, -0.3], vec![0.6, 1.0, 0.2], vec![-0.3, 0.2, 0.5]],
            1000,
        );
        let set = build_regions(&e, &a, 0.2, &RegionOptions::with_seed(7)).unwrap();
        assert!(set.uncorrected.z <= set.simultaneous.z && set.simultaneous.z <= set.bonferroni.z);
        for i in 0..3 {
            let (l0, u0) = set.uncorrected.intervals[i];
            let (l1, u1) = set.simultaneous.intervals[i];
            let (l2, u2) = set.bonferroni.intervals[i];
            assert!(l2 <= l1 && l1 <= l0 && u0 <= u1 && u1 <= u2);
        }
    }

    #[test]
    fn rejects_non_pd_and_bad_tolerances() {
        let (e, a) = setup(vec![vec![1.0, 1.0], vec![1.0, 1.0]], 10);
        assert!(matches!(
            uncorrected_region(&e, &a, 0.1, &RegionOptions::default()),
            Err(Error::Region(_))
        ));
        let (e, a) = setup(identity(2), 10);
        let opts = RegionOptions {
            cov_tol: 5e-4,
            ..RegionOptions::default()
        };
        assert!(simultaneous_region(&e, &a, 0.1, &opts).is_err());
        let (e, a) = setup(vec![vec![0.0, 0.0], vec![0.0, 1.0]], 10);
        assert!(uncorrected_region(&e, &a, 0.1, &RegionOptions::default()).is_err());
    }

    #[test]
    fn deterministic() {
        let (e, a) = setup(vec![vec![1.0, 0.3, 0.1], vec![0.3, 1.0, 0.4], vec![0.1, 0.4, 1.0]], 20);
        let x = build_regions(&e, &a, 0.1, &RegionOptions::with_seed(3)).unwrap();
        let y = build_regions(&e, &a, 0.1, &RegionOptions::with_seed(3)).unwrap();
        assert_eq!(x, y);
    }
}
