//! Joint point estimates of means and quantiles, and the auxiliary quantities
//! the asymptotic covariance needs: the mean/indicator process `S_j` and kernel
//! density values at the estimated quantiles.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::summation::{pairwise_mean, pairwise_sum};
use crate::{Error, Result, Scalar};

/// n draws × d coordinates, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix<T> {
    n: usize,
    d: usize,
    data: Vec<T>,
    column_names: Option<Vec<String>>,
}

impl<T: Scalar> SampleMatrix<T> {
    pub fn from_columns(columns: Vec<Vec<T>>, column_names: Option<Vec<String>>) -> Result<Self> {
        let d = columns.len();
        if d == 0 {
            return Err(Error::Samples("no columns".into()));
        }
        let n = columns[0].len();
        if let Some(j) = columns.iter().position(|c| c.len() != n) {
            return Err(Error::Samples(format!(
                "column {j} has {} rows, expected {n}",
                columns[j].len()
            )));
        }
        if n < 2 {
            return Err(Error::Samples(format!("need at least 2 draws, got {n}")));
        }
        for (j, col) in columns.iter().enumerate() {
            if let Some(i) = col.iter().position(|x| !x.is_finite()) {
                return Err(Error::Samples(format!("non-finite entry at row {i}, column {j}")));
            }
        }
        if let Some(names) = &column_names {
            if names.len() != d {
                return Err(Error::Samples(format!(
                    "{} column names for {d} columns",
                    names.len()
                )));
            }
            let mut seen = HashSet::new();
            if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
                return Err(Error::Samples(format!("duplicate column name {dup:?}")));
            }
        }
        Ok(Self {
            n,
            d,
            data: columns.into_iter().flatten().collect(),
            column_names,
        })
    }

    pub fn from_rows(rows: &[Vec<T>], column_names: Option<Vec<String>>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::Samples(format!("row {i} has {} entries, expected {d}", rows[i].len())));
        }
        let columns = (0..d).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Self::from_columns(columns, column_names)
    }

    pub fn univariate(values: Vec<T>) -> Result<Self> {
        Self::from_columns(vec![values], None)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn column(&self, j: usize) -> &[T] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    pub fn column_names(&self) -> Option<&[String]> {
        self.column_names.as_deref()
    }

    pub fn column_label(&self, j: usize) -> String {
        match &self.column_names {
            Some(names) => names[j].clone(),
            None => format!("c{}", j + 1),
        }
    }

    /// Drops the first `k` rows.
    pub fn skip_rows(&self, k: usize) -> Result<Self> {
        let columns = (0..self.d)
            .map(|j| self.column(j).iter().skip(k).copied().collect())
            .collect();
        Self::from_columns(columns, self.column_names.clone())
    }

    pub fn map_column(&self, j: usize, f: impl Fn(T) -> T) -> Result<Self> {
        let columns = (0..self.d)
            .map(|c| {
                let col = self.column(c).iter().copied();
                if c == j {
                    col.map(&f).collect()
                } else {
                    col.collect()
                }
            })
            .collect();
        Self::from_columns(columns, self.column_names.clone())
    }
}

/// A column picked by 0-based index or by name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnSelector {
    Index(usize),
    Name(String),
}

impl ColumnSelector {
    /// Names take precedence; a string that matches no name but parses as an
    /// integer is treated as a 0-based index.
    pub fn resolve<T: Scalar>(&self, samples: &SampleMatrix<T>) -> Result<usize> {
        match self {
            Self::Index(j) if *j < samples.d() => Ok(*j),
            Self::Index(j) => Err(Error::Spec(format!(
                "column index {j} out of range for {} columns",
                samples.d()
            ))),
            Self::Name(name) => {
                if let Some(names) = samples.column_names() {
                    if let Some(j) = names.iter().position(|n| n == name) {
                        return Ok(j);
                    }
                }
                match name.parse::<usize>() {
                    Ok(j) => Self::Index(j).resolve(samples),
                    Err(_) => Err(Error::Spec(format!("unknown column {name:?}"))),
                }
            }
        }
    }
}

impl fmt::Display for ColumnSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Index(j) => write!(f, "{j}"),
            Self::Name(n) => f.write_str(n),
        }
    }
}

impl From<&str> for ColumnSelector {
    fn from(s: &str) -> Self {
        Self::Name(s.to_string())
    }
}

impl From<usize> for ColumnSelector {
    fn from(j: usize) -> Self {
        Self::Index(j)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTarget {
    pub column: ColumnSelector,
    pub q: f64,
}

/// Which means and quantiles to estimate. The estimate vector is ordered means
/// first, then quantiles, each in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimandSpec {
    pub means: Vec<ColumnSelector>,
    pub quantiles: Vec<QuantileTarget>,
}

/// Column indices after resolving an [`EstimandSpec`] against a sample matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedSpec {
    pub mean_columns: Vec<usize>,
    pub quantile_columns: Vec<usize>,
    pub quantile_levels: Vec<f64>,
}

impl ResolvedSpec {
    pub fn p1(&self) -> usize {
        self.mean_columns.len()
    }

    pub fn p2(&self) -> usize {
        self.quantile_columns.len()
    }

    pub fn p(&self) -> usize {
        self.p1() + self.p2()
    }
}

impl EstimandSpec {
    pub fn new(means: Vec<ColumnSelector>, quantiles: Vec<QuantileTarget>) -> Result<Self> {
        let spec = Self { means, quantiles };
        spec.validate()?;
        Ok(spec)
    }

    /// Convenience constructor: `means(["x"]).quantile("x", 0.1)`.
    pub fn means<S: Into<ColumnSelector>>(cols: impl IntoIterator<Item = S>) -> Self {
        Self {
            means: cols.into_iter().map(Into::into).collect(),
            quantiles: Vec::new(),
        }
    }

    pub fn quantile(mut self, col: impl Into<ColumnSelector>, q: f64) -> Self {
        self.quantiles.push(QuantileTarget {
            column: col.into(),
            q,
        });
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.p() == 0 {
            return Err(Error::Spec("no mean or quantile targets".into()));
        }
        if let Some(t) = self.quantiles.iter().find(|t| !(t.q > 0.0 && t.q < 1.0)) {
            return Err(Error::Spec(format!(
                "quantile level {} for column {} is not inside (0, 1)",
                t.q, t.column
            )));
        }
        Ok(())
    }

    pub fn p1(&self) -> usize {
        self.means.len()
    }

    pub fn p2(&self) -> usize {
        self.quantiles.len()
    }

    pub fn p(&self) -> usize {
        self.p1() + self.p2()
    }

    pub fn resolve<T: Scalar>(&self, samples: &SampleMatrix<T>) -> Result<ResolvedSpec> {
        self.validate()?;
        Ok(ResolvedSpec {
            mean_columns: self
                .means
                .iter()
                .map(|c| c.resolve(samples))
                .collect::<Result<_>>()?,
            quantile_columns: self
                .quantiles
                .iter()
                .map(|t| t.column.resolve(samples))
                .collect::<Result<_>>()?,
            quantile_levels: self.quantiles.iter().map(|t| t.q).collect(),
        })
    }

    /// Human-readable labels in estimate order, e.g. `mean(x)`, `q0.1(x)`.
    pub fn labels(&self) -> Vec<String> {
        self.means
            .iter()
            .map(|c| format!("mean({c})"))
            .chain(self.quantiles.iter().map(|t| format!("q{}({})", t.q, t.column)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointEstimate<T> {
    /// Means first, then quantiles.
    pub nu_hat: Vec<T>,
    pub n: usize,
    pub spec: EstimandSpec,
}

impl<T: Scalar> JointEstimate<T> {
    pub fn p(&self) -> usize {
        self.nu_hat.len()
    }

    pub fn means(&self) -> &[T] {
        &self.nu_hat[..self.spec.p1()]
    }

    pub fn quantiles(&self) -> &[T] {
        &self.nu_hat[self.spec.p1()..]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityAtQuantiles<T> {
    pub values: Vec<T>,
    pub bandwidths: Vec<T>,
}

/// 1-based rank ⌈n·q⌉ of the order statistic that estimates the q-quantile.
///
/// `n·q` is snapped to the nearest integer when it is within a few ulps of it,
/// so `n = 10, q = 0.3` gives rank 3 even though `10.0 * 0.3 > 3.0` in binary.
pub fn order_statistic_rank(n: usize, q: f64) -> usize {
    let x = n as f64 * q;
    let nearest = x.round();
    let k = if (x - nearest).abs() <= 4.0 * f64::EPSILON * x.max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    (k as usize).clamp(1, n)
}

/// The k-th smallest value (1-based) of `values`.
pub fn order_statistic<T: Scalar>(values: &[T], k: usize) -> T {
    let mut buf = values.to_vec();
    let (_, kth, _) = buf.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).expect("finite samples"));
    *kth
}

pub fn sample_quantile<T: Scalar>(values: &[T], q: f64) -> T {
    order_statistic(values, order_statistic_rank(values.len(), q))
}

pub fn compute_means<T: Scalar>(samples: &SampleMatrix<T>, spec: &EstimandSpec) -> Result<Vec<T>> {
    let resolved = spec.resolve(samples)?;
    Ok(resolved
        .mean_columns
        .iter()
        .map(|&j| pairwise_mean(samples.column(j)))
        .collect())
}

pub fn compute_quantiles<T: Scalar>(samples: &SampleMatrix<T>, spec: &EstimandSpec) -> Result<Vec<T>> {
    let resolved = spec.resolve(samples)?;
    Ok(resolved
        .quantile_columns
        .iter()
        .zip(&resolved.quantile_levels)
        .map(|(&j, &q)| sample_quantile(samples.column(j), q))
        .collect())
}

pub fn estimate_joint<T: Scalar>(samples: &SampleMatrix<T>, spec: &EstimandSpec) -> Result<JointEstimate<T>> {
    let mut nu_hat = compute_means(samples, spec)?;
    nu_hat.extend(compute_quantiles(samples, spec)?);
    Ok(JointEstimate {
        nu_hat,
        n: samples.n(),
        spec: spec.clone(),
    })
}

fn check_estimate<T: Scalar>(
    samples: &SampleMatrix<T>,
    spec: &EstimandSpec,
    estimate: &JointEstimate<T>,
) -> Result<ResolvedSpec> {
    let resolved = spec.resolve(samples)?;
    if estimate.nu_hat.len() != resolved.p() || estimate.n != samples.n() || estimate.spec != *spec {
        return Err(Error::Spec(format!(
            "estimate (p = {}, n = {}) does not match spec (p = {}) and samples (n = {})",
            estimate.nu_hat.len(),
            estimate.n,
            resolved.p(),
            samples.n()
        )));
    }
    Ok(resolved)
}

/// Row j is `(g(X_j), I(h(X_j) > ξ̂))`: the selected mean columns followed by
/// strict-exceedance indicators of each quantile column.
pub fn build_s_process<T: Scalar>(
    samples: &SampleMatrix<T>,
    spec: &EstimandSpec,
    estimate: &JointEstimate<T>,
) -> Result<Matrix<T>> {
    let resolved = check_estimate(samples, spec, estimate)?;
    let p1 = resolved.p1();
    let p = resolved.p();
    let n = samples.n();
    let mut out = Matrix::zeros(n, p);
    for (k, &j) in resolved.mean_columns.iter().enumerate() {
        for (i, &v) in samples.column(j).iter().enumerate() {
            out[(i, k)] = v;
        }
    }
    for (k, &j) in resolved.quantile_columns.iter().enumerate() {
        let xi = estimate.nu_hat[p1 + k];
        for (i, &v) in samples.column(j).iter().enumerate() {
            out[(i, p1 + k)] = if v > xi { T::one() } else { T::zero() };
        }
    }
    Ok(out)
}

fn sample_sd<T: Scalar>(values: &[T]) -> T {
    let mean = pairwise_mean(values);
    let sq: Vec<T> = values.iter().map(|&v| (v - mean) * (v - mean)).collect();
    (pairwise_sum(&sq) / T::from_usize_lossy(values.len() - 1)).sqrt()
}

/// Silverman's rule of thumb, `0.9·min(sd, IQR/1.34)·n^(-1/5)`. Falls back to
/// the standard deviation when the IQR is zero. Returns zero for a constant
/// column.
pub fn silverman_bandwidth<T: Scalar>(values: &[T]) -> T {
    let sd = sample_sd(values);
    let iqr = sample_quantile(values, 0.75) - sample_quantile(values, 0.25);
    let mut spread = sd.min(iqr / T::lit(1.34));
    if spread <= T::zero() {
        spread = sd;
    }
    T::lit(0.9) * spread * T::from_usize_lossy(values.len()).powf(T::lit(-0.2))
}

/// Gaussian kernel density estimate of `values` at `x` with bandwidth `h`.
pub fn gaussian_kde_at<T: Scalar>(values: &[T], x: T, h: T) -> T {
    let half = T::lit(0.5);
    let terms: Vec<T> = values
        .iter()
        .map(|&v| {
            let u = (x - v) / h;
            (-half * u * u).exp()
        })
        .collect();
    let norm = T::from_usize_lossy(values.len()) * h * T::lit((2.0 * std::f64::consts::PI).sqrt());
    pairwise_sum(&terms) / norm
}

pub fn estimate_density_at_quantiles<T: Scalar>(
    samples: &SampleMatrix<T>,
    spec: &EstimandSpec,
    estimate: &JointEstimate<T>,
) -> Result<DensityAtQuantiles<T>> {
    let resolved = check_estimate(samples, spec, estimate)?;
    let p1 = resolved.p1();
    let mut values = Vec::with_capacity(resolved.p2());
    let mut bandwidths = Vec::with_capacity(resolved.p2());
    for (k, &j) in resolved.quantile_columns.iter().enumerate() {
        let col = samples.column(j);
        let h = silverman_bandwidth(col);
        if !(h > T::zero()) {
            return Err(Error::DegenerateDensity { index: k, value: 0.0 });
        }
        let f = gaussian_kde_at(col, estimate.nu_hat[p1 + k], h);
        // f·h is scale free: it is the average kernel weight.
        if !f.is_finite() || f * h <= T::epsilon() {
            return Err(Error::DegenerateDensity {
                index: k,
                value: f.as_f64(),
            });
        }
        values.push(f);
        bandwidths.push(h);
    }
    Ok(DensityAtQuantiles { values, bandwidths })
}
