//! Estimation of the long-run covariance of the S-process and assembly of the
//! plug-in asymptotic covariance of the joint estimator.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::estimation::{
    build_s_process, estimate_density_at_quantiles, DensityAtQuantiles, EstimandSpec, JointEstimate,
    SampleMatrix,
};
use crate::linalg::Matrix;
use crate::{Error, Result, Scalar, Warning};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovMode {
    Iid,
    Mcmc,
}

impl FromStr for CovMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "iid" => Ok(Self::Iid),
            "mcmc" => Ok(Self::Mcmc),
            other => Err(Error::Config(format!("unknown mode {other:?} (expected iid or mcmc)"))),
        }
    }
}

impl fmt::Display for CovMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Iid => "iid",
            Self::Mcmc => "mcmc",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchSize {
    /// ⌊√n⌋
    Auto,
    Fixed(usize),
}

impl FromStr for BatchSize {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Self::Auto);
        }
        s.parse::<usize>()
            .map(Self::Fixed)
            .map_err(|_| Error::Config(format!("batch size must be 'auto' or an integer, got {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovModeConfig {
    pub mode: CovMode,
    pub batch_size: BatchSize,
}

impl CovModeConfig {
    pub const IID: Self = Self {
        mode: CovMode::Iid,
        batch_size: BatchSize::Auto,
    };

    pub const MCMC_AUTO: Self = Self {
        mode: CovMode::Mcmc,
        batch_size: BatchSize::Auto,
    };

    pub fn mcmc(batch_size: BatchSize) -> Self {
        Self {
            mode: CovMode::Mcmc,
            batch_size,
        }
    }

    /// Checks a user-supplied configuration against the sample size: explicit
    /// batch sizes must satisfy 2 ≤ b ≤ n/2.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.mode == CovMode::Mcmc {
            if let BatchSize::Fixed(b) = self.batch_size {
                if b < 2 || b > n / 2 {
                    return Err(Error::BatchConfig(format!(
                        "batch size {b} outside [2, n/2] for n = {n}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Resolved batch layout: a batches of b consecutive rows; the trailing
/// n − a·b rows are not used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchLayout {
    pub batch_size: usize,
    pub n_batches: usize,
    pub discarded: usize,
}

impl BatchLayout {
    pub fn resolve(n: usize, batch_size: BatchSize) -> Result<Self> {
        let b = match batch_size {
            BatchSize::Auto => n.isqrt(),
            BatchSize::Fixed(b) => b,
        };
        if b == 0 {
            return Err(Error::BatchConfig("batch size must be positive".into()));
        }
        let a = n / b;
        if a < 2 {
            return Err(Error::BatchConfig(format!(
                "batch size {b} leaves {a} batch(es) for n = {n}; need at least 2"
            )));
        }
        Ok(Self {
            batch_size: b,
            n_batches: a,
            discarded: n - a * b,
        })
    }

    /// Batch means is biased downward when p is large relative to the number of
    /// batches; rank deficient when a ≤ p.
    pub fn warnings(&self, p: usize) -> Vec<Warning> {
        let mut out = Vec::new();
        if self.n_batches <= p {
            out.push(Warning::new(
                "covariance",
                format!(
                    "{} batches for p = {p}: batch-means estimate is rank deficient; increase n or set an explicit batch size",
                    self.n_batches
                ),
            ));
        } else if p as f64 > self.n_batches as f64 / 20.0 {
            out.push(Warning::new(
                "covariance",
                format!(
                    "p = {p} exceeds a/20 with a = {} batches; batch means may be biased downward",
                    self.n_batches
                ),
            ));
        }
        out
    }
}

fn column_means<T: Scalar>(s: &Matrix<T>, rows: std::ops::Range<usize>) -> Vec<T> {
    let p = s.cols();
    let count = T::from_usize_lossy(rows.len());
    let mut acc = vec![T::zero(); p];
    for i in rows {
        for (a, &x) in acc.iter_mut().zip(s.row(i)) {
            *a += x;
        }
    }
    acc.into_iter().map(|a| a / count).collect()
}

fn centered_cross_products<'a, T: Scalar>(vectors: impl Iterator<Item = &'a [T]>, center: &[T]) -> Matrix<T> {
    let p = center.len();
    let mut out = Matrix::zeros(p, p);
    for v in vectors {
        for i in 0..p {
            let di = v[i] - center[i];
            for j in i..p {
                out[(i, j)] += di * (v[j] - center[j]);
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            out[(i, j)] = out[(j, i)];
        }
    }
    out
}

/// Unbiased (divisor n − 1) sample covariance of the rows.
pub fn sample_covariance_iid<T: Scalar>(s_process: &Matrix<T>) -> Result<Matrix<T>> {
    let n = s_process.rows();
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} row(s); need at least 2")));
    }
    let center = column_means(s_process, 0..n);
    Ok(centered_cross_products((0..n).map(|i| s_process.row(i)), &center).scale(T::one() / T::from_usize_lossy(n - 1)))
}

/// Batch means estimate `b/(a−1) Σ_k (S̄_k − S̄)(S̄_k − S̄)ᵀ`.
///
/// Accepts any batch size with at least two batches (b = 1 reproduces the
/// sample covariance); [`CovModeConfig::validate`] is the stricter user-facing
/// check.
pub fn batch_means_covariance<T: Scalar>(s_process: &Matrix<T>, batch_size: BatchSize) -> Result<Matrix<T>> {
    Ok(batch_means_with_layout(s_process, batch_size)?.0)
}

pub fn batch_means_with_layout<T: Scalar>(
    s_process: &Matrix<T>,
    batch_size: BatchSize,
) -> Result<(Matrix<T>, BatchLayout)> {
    let layout = BatchLayout::resolve(s_process.rows(), batch_size)?;
    let b = layout.batch_size;
    let a = layout.n_batches;
    let batch_means: Vec<Vec<T>> = (0..a).map(|k| column_means(s_process, k * b..(k + 1) * b)).collect();
    let p = s_process.cols();
    let mut grand = vec![T::zero(); p];
    for m in &batch_means {
        for (g, &x) in grand.iter_mut().zip(m) {
            *g += x;
        }
    }
    let a_t = T::from_usize_lossy(a);
    for g in &mut grand {
        *g /= a_t;
    }
    let factor = T::from_usize_lossy(b) / T::from_usize_lossy(a - 1);
    Ok((centered_cross_products(batch_means.iter().map(Vec::as_slice), &grand).scale(factor), layout))
}

/// Σ̂, Λ̂⁻¹ and the assembled Λ̂⁻¹Σ̂Λ̂⁻¹.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticCovariance<T> {
    pub sigma_hat: Matrix<T>,
    /// Diagonal of Λ̂⁻¹: ones for means, 1/f̂ for quantiles.
    pub lambda_inv: Vec<T>,
    pub assembled: Matrix<T>,
    pub n: usize,
}

impl<T: Scalar> AsymptoticCovariance<T> {
    pub fn p(&self) -> usize {
        self.lambda_inv.len()
    }

    /// √(assembled_ii / n) per coordinate.
    pub fn standard_errors(&self) -> Vec<T> {
        let n = T::from_usize_lossy(self.n);
        self.assembled.diagonal().into_iter().map(|v| (v / n).sqrt()).collect()
    }

    pub fn lambda_inv_matrix(&self) -> Matrix<T> {
        Matrix::from_diagonal(&self.lambda_inv)
    }
}

pub fn assemble_asymptotic_covariance<T: Scalar>(
    sigma_hat: &Matrix<T>,
    densities: &DensityAtQuantiles<T>,
    spec: &EstimandSpec,
    n: usize,
) -> Result<AsymptoticCovariance<T>> {
    let p = spec.p();
    if !sigma_hat.is_square() || sigma_hat.rows() != p {
        return Err(Error::Spec(format!(
            "sigma_hat is {}×{}, spec needs {p}×{p}",
            sigma_hat.rows(),
            sigma_hat.cols()
        )));
    }
    if densities.values.len() != spec.p2() {
        return Err(Error::Spec(format!(
            "{} density values for {} quantile targets",
            densities.values.len(),
            spec.p2()
        )));
    }
    if !sigma_hat.all_finite() {
        return Err(Error::Numeric {
            module: "covariance",
            detail: "sigma_hat has non-finite entries".into(),
        });
    }
    for (i, &f) in densities.values.iter().enumerate() {
        if !f.is_finite() {
            return Err(Error::Numeric {
                module: "covariance",
                detail: format!("density {i} is not finite"),
            });
        }
        if f <= T::zero() {
            return Err(Error::DegenerateDensity {
                index: i,
                value: f.as_f64(),
            });
        }
    }
    let lambda_inv: Vec<T> = std::iter::repeat(T::one())
        .take(spec.p1())
        .chain(densities.values.iter().map(|&f| T::one() / f))
        .collect();
    let mut assembled = sigma_hat.clone();
    for i in 0..p {
        for j in 0..p {
            assembled[(i, j)] = lambda_inv[i] * sigma_hat[(i, j)] * lambda_inv[j];
        }
    }
    let assembled = assembled.symmetrized();
    if !assembled.all_finite() {
        return Err(Error::Numeric {
            module: "covariance",
            detail: "assembled covariance has non-finite entries".into(),
        });
    }
    Ok(AsymptoticCovariance {
        sigma_hat: sigma_hat.clone(),
        lambda_inv,
        assembled,
        n,
    })
}

/// Everything computed on the way from samples to the assembled covariance.
#[derive(Debug, Clone)]
pub struct CovarianceFit<T> {
    pub acov: AsymptoticCovariance<T>,
    pub densities: DensityAtQuantiles<T>,
    pub layout: Option<BatchLayout>,
    pub warnings: Vec<Warning>,
}

/// S-process → Σ̂ (IID or batch means) → densities → assembled covariance.
pub fn fit_asymptotic_covariance<T: Scalar>(
    samples: &SampleMatrix<T>,
    spec: &EstimandSpec,
    estimate: &JointEstimate<T>,
    config: &CovModeConfig,
) -> Result<CovarianceFit<T>> {
    let s = build_s_process(samples, spec, estimate)?;
    let mut warnings = Vec::new();
    let (sigma_hat, layout) = match config.mode {
        CovMode::Iid => (sample_covariance_iid(&s)?, None),
        CovMode::Mcmc => {
            let (sigma, layout) = batch_means_with_layout(&s, config.batch_size)?;
            warnings.extend(layout.warnings(spec.p()));
            (sigma, Some(layout))
        }
    };
    let densities = if spec.p2() > 0 {
        estimate_density_at_quantiles(samples, spec, estimate)?
    } else {
        DensityAtQuantiles {
            values: Vec::new(),
            bandwidths: Vec::new(),
        }
    };
    let acov = assemble_asymptotic_covariance(&sigma_hat, &densities, spec, samples.n())?;
    Ok(CovarianceFit {
        acov,
        densities,
        layout,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn column(values: &[f64]) -> Matrix<f64> {
        Matrix::from_row_major(values.len(), 1, values.to_vec())
    }

    #[test]
    fn two_point_sample_covariance() {
        let s = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let c = sample_covariance_iid(&s).unwrap();
        assert_eq!(c.to_rows(), vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
    }

    #[test]
    fn constant_rows_give_zero() {
        let s = Matrix::from_rows(&vec![vec![3.0, -1.0]; 16]).unwrap();
        assert!(sample_covariance_iid(&s).unwrap().as_slice().iter().all(|&x| x == 0.0));
        assert!(batch_means_covariance(&s, BatchSize::Auto)
            .unwrap()
            .as_slice()
            .iter()
            .all(|&x| x == 0.0));
    }

    #[test]
    fn insufficient_rows() {
        assert!(matches!(
            sample_covariance_iid(&column(&[1.0])),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn hand_computed_batch_means() {
        // batch means (0, 1), overall 0.5: 2·(0.25 + 0.25)/1 = 1
        let c = batch_means_covariance(&column(&[0.0, 0.0, 1.0, 1.0]), BatchSize::Fixed(2)).unwrap();
        assert_eq!(c.as_slice(), &[1.0]);
    }

    #[test]
    fn trailing_rows_discarded() {
        let s = column(&[0.0, 0.0, 1.0, 1.0, 100.0]);
        let (c, layout) = batch_means_with_layout(&s, BatchSize::Fixed(2)).unwrap();
        assert_eq!(c.as_slice(), &[1.0]);
        assert_eq!(
            layout,
            BatchLayout {
                batch_size: 2,
                n_batches: 2,
                discarded: 1
            }
        );
    }

    #[test]
    fn batch_layout_errors_and_auto() {
        assert!(matches!(
            BatchLayout::resolve(5, BatchSize::Fixed(3)),
            Err(Error::BatchConfig(_))
        ));
        let l = BatchLayout::resolve(400, BatchSize::Auto).unwrap();
        assert_eq!((l.batch_size, l.n_batches), (20, 20));
        let l = BatchLayout::resolve(399, BatchSize::Auto).unwrap();
        assert_eq!((l.batch_size, l.n_batches, l.discarded), (19, 21, 0));
        assert!(CovModeConfig::mcmc(BatchSize::Fixed(1)).validate(100).is_err());
        assert!(CovModeConfig::mcmc(BatchSize::Fixed(51)).validate(100).is_err());
        assert!(CovModeConfig::mcmc(BatchSize::Fixed(50)).validate(100).is_ok());
    }

    #[test]
    fn warns_when_p_large() {
        let l = BatchLayout::resolve(400, BatchSize::Auto).unwrap();
        assert!(l.warnings(1).is_empty());
        assert_eq!(l.warnings(2).len(), 1);
        assert!(l.warnings(20)[0].message.contains("rank deficient"));
    }

    fn spec(p1: usize, qs: &[f64]) -> EstimandSpec {
        let mut s = EstimandSpec::means((0..p1).map(|_| "x"));
        for &q in qs {
            s = s.quantile("x", q);
        }
        s
    }

    #[test]
    fn assemble_without_quantiles_is_identity() {
        let sigma = Matrix::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
        let dens = DensityAtQuantiles {
            values: vec![],
            bandwidths: vec![],
        };
        let a = assemble_asymptotic_covariance(&sigma, &dens, &spec(2, &[]), 10).unwrap();
        assert_eq!(a.assembled, sigma);
    }

    #[test]
    fn assemble_classical_quantile_variance() {
        let q = 0.3;
        let f = 0.25;
        let sigma = Matrix::from_rows(&[vec![q * (1.0 - q)]]).unwrap();
        let dens = DensityAtQuantiles {
            values: vec![f],
            bandwidths: vec![0.1],
        };
        let a = assemble_asymptotic_covariance(&sigma, &dens, &spec(0, &[q]), 10).unwrap();
        assert!((a.assembled[(0, 0)] - q * (1.0 - q) / (f * f)).abs() < 1e-15);
    }

    #[test]
    fn unit_densities_leave_sigma() {
        let sigma = Matrix::from_rows(&[vec![2.0, 0.3, 0.1], vec![0.3, 1.0, 0.2], vec![0.1, 0.2, 0.5]]).unwrap();
        let dens = DensityAtQuantiles {
            values: vec![1.0, 1.0],
            bandwidths: vec![0.1, 0.1],
        };
        let a = assemble_asymptotic_covariance(&sigma, &dens, &spec(1, &[0.1, 0.9]), 10).unwrap();
        assert_eq!(a.assembled, sigma);
    }

    #[test]
    fn assemble_rejects_bad_densities() {
        let sigma = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let zero = DensityAtQuantiles {
            values: vec![0.0],
            bandwidths: vec![1.0],
        };
        assert!(matches!(
            assemble_asymptotic_covariance(&sigma, &zero, &spec(0, &[0.5]), 10),
            Err(Error::DegenerateDensity { .. })
        ));
        let inf = DensityAtQuantiles {
            values: vec![f64::INFINITY],
            bandwidths: vec![1.0],
        };
        assert!(matches!(
            assemble_asymptotic_covariance(&sigma, &inf, &spec(0, &[0.5]), 10),
            Err(Error::Numeric { .. })
        ));
    }

    #[test]
    fn assemble_invariant_to_quantile_order() {
        let sigma = Matrix::from_rows(&[vec![2.0, 0.3, 0.1], vec![0.3, 1.0, 0.2], vec![0.1, 0.2, 0.5]]).unwrap();
        let dens = DensityAtQuantiles {
            values: vec![0.2, 0.7],
            bandwidths: vec![0.1, 0.1],
        };
        let a = assemble_asymptotic_covariance(&sigma, &dens, &spec(1, &[0.1, 0.9]), 10).unwrap();
        let perm = [0, 2, 1];
        let dens_p = DensityAtQuantiles {
            values: vec![0.7, 0.2],
            bandwidths: vec![0.1, 0.1],
        };
        let b = assemble_asymptotic_covariance(&sigma.permuted(&perm), &dens_p, &spec(1, &[0.9, 0.1]), 10).unwrap();
        assert_eq!(b.assembled, a.assembled.permuted(&perm));
    }

    proptest! {
        #[test]
        fn unit_batches_equal_sample_covariance(
            rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 2..120)
        ) {
            let s = Matrix::from_rows(&rows).unwrap();
            let a = sample_covariance_iid(&s).unwrap();
            let b = batch_means_covariance(&s, BatchSize::Fixed(1)).unwrap();
            let scale = a.as_slice().iter().fold(1e-300f64, |m, x| m.max(x.abs()));
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-10 * scale);
            }
        }

        #[test]
        fn outputs_symmetric_with_nonnegative_diagonal(
            rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 2), 8..120),
            b in 1usize..4,
        ) {
            let s = Matrix::from_rows(&rows).unwrap();
            for c in [sample_covariance_iid(&s).unwrap(), batch_means_covariance(&s, BatchSize::Fixed(b)).unwrap()] {
                prop_assert_eq!(c.asymmetry(), 0.0);
                prop_assert!(c.diagonal().iter().all(|&d| d >= 0.0));
            }
        }
    }
}
