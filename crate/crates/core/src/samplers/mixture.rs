use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::estimation::SampleMatrix;
use crate::mvn::{std_normal_cdf, std_normal_pdf};
use crate::samplers::stream_rng;
use crate::{Error, Result};

/// Finite mixture of univariate normals. Defaults to
/// 0.3·N(1, 2.5) + 0.5·N(5, 4) + 0.2·N(11, 3) (second argument a variance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        Self {
            weights: vec![0.3, 0.5, 0.2],
            means: vec![1.0, 5.0, 11.0],
            variances: vec![2.5, 4.0, 3.0],
        }
    }
}

impl MixtureSpec {
    /// Zero weights are allowed so a component can be switched off.
    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 || self.means.len() != k || self.variances.len() != k {
            return Err(Error::Sampler(format!(
                "mixture needs matching weights/means/variances, got {}/{}/{}",
                k,
                self.means.len(),
                self.variances.len()
            )));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Sampler("mixture weights must be finite and nonnegative".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Sampler(format!("mixture weights sum to {total}, not 1")));
        }
        if self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::Sampler("mixture means must be finite".into()));
        }
        if self.variances.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Sampler("mixture variances must be positive".into()));
        }
        Ok(())
    }

    fn components(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .map(|((&w, &m), &v)| (w, m, v.sqrt()))
    }

    pub fn density(&self, x: f64) -> f64 {
        self.components()
            .map(|(w, m, s)| w * std_normal_pdf((x - m) / s) / s)
            .sum()
    }

    /// log π(x), stable far in the tails.
    pub fn log_density(&self, x: f64) -> f64 {
        let terms: Vec<f64> = self
            .components()
            .filter(|&(w, _, _)| w > 0.0)
            .map(|(w, m, s)| {
                let z = (x - m) / s;
                w.ln() - s.ln() - 0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln()
            })
            .collect();
        let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.components().map(|(w, m, s)| w * std_normal_cdf((x - m) / s)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum()
    }

    /// Inverse CDF by bisection, bracket width below 1e-11.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Sampler(format!("quantile level {q} not inside (0, 1)")));
        }
        let (mut lo, mut hi) = self
            .components()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, m, s)| {
                (lo.min(m - 40.0 * s), hi.max(m + 40.0 * s))
            });
        for _ in 0..200 {
            if hi - lo <= 1e-11 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureTruth {
    pub mean: f64,
    pub quantiles: Vec<f64>,
}

impl MixtureTruth {
    /// (mean, quantiles...) in estimate order.
    pub fn as_vector(&self) -> Vec<f64> {
        std::iter::once(self.mean).chain(self.quantiles.iter().copied()).collect()
    }
}

pub fn mixture_truth(spec: &MixtureSpec, quantile_levels: &[f64]) -> Result<MixtureTruth> {
    spec.validate()?;
    Ok(MixtureTruth {
        mean: spec.mean(),
        quantiles: quantile_levels
            .iter()
            .map(|&q| spec.quantile(q))
            .collect::<Result<_>>()?,
    })
}

/// n IID draws with their component labels.
pub fn draw_mixture_iid<R: Rng + ?Sized>(spec: &MixtureSpec, n: usize, rng: &mut R) -> Result<(Vec<f64>, Vec<usize>)> {
    spec.validate()?;
    let pick = WeightedIndex::new(&spec.weights).map_err(|e| Error::Sampler(e.to_string()))?;
    let sds: Vec<f64> = spec.variances.iter().map(|v| v.sqrt()).collect();
    let mut values = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let k = pick.sample(rng);
        let z: f64 = rng.sample(StandardNormal);
        values.push(spec.means[k] + sds[k] * z);
        labels.push(k);
    }
    Ok((values, labels))
}

fn column_x(values: Vec<f64>) -> Result<SampleMatrix<f64>> {
    if values.len() < 2 {
        return Err(Error::Sampler(format!("need at least 2 draws, got {}", values.len())));
    }
    SampleMatrix::from_columns(vec![values], Some(vec!["x".to_string()]))
}

/// n×1 matrix with column `x`.
pub fn sample_mixture_iid(spec: &MixtureSpec, n: usize, seed: u64) -> Result<SampleMatrix<f64>> {
    let (values, _) = draw_mixture_iid(spec, n, &mut stream_rng(seed, 0))?;
    column_x(values)
}

pub fn sample_mixture_iid_labeled(spec: &MixtureSpec, n: usize, seed: u64) -> Result<(SampleMatrix<f64>, Vec<usize>)> {
    let (values, labels) = draw_mixture_iid(spec, n, &mut stream_rng(seed, 0))?;
    Ok((column_x(values)?, labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MhConfig {
    pub proposal_sd: f64,
    /// Rows kept after burn-in.
    pub n_draws: usize,
    pub seed: u64,
    pub initial_state: f64,
    pub burn_in: usize,
}

impl Default for MhConfig {
    fn default() -> Self {
        Self {
            proposal_sd: 3.0,
            n_draws: 10_000,
            seed: 0,
            initial_state: 5.0,
            burn_in: 0,
        }
    }
}

impl MhConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.proposal_sd.is_finite() && self.proposal_sd > 0.0) {
            return Err(Error::Sampler(format!("proposal sd {} must be positive", self.proposal_sd)));
        }
        if !self.initial_state.is_finite() {
            return Err(Error::Sampler("initial state must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MhOutput {
    pub samples: SampleMatrix<f64>,
    /// Accepted proposals over all proposals, burn-in included.
    pub acceptance_rate: f64,
}

/// min(1, π(x′)/π(x)).
pub fn mh_acceptance_probability(spec: &MixtureSpec, current: f64, proposal: f64) -> f64 {
    (spec.log_density(proposal) - spec.log_density(current)).min(0.0).exp()
}

/// Random-walk chain. The first stored row is the initial state when
/// `burn_in` is zero.
pub fn draw_mixture_mh<R: Rng + ?Sized>(spec: &MixtureSpec, config: &MhConfig, rng: &mut R) -> Result<(Vec<f64>, f64)> {
    spec.validate()?;
    config.validate()?;
    let total = config.burn_in + config.n_draws;
    let mut chain = Vec::with_capacity(config.n_draws);
    let mut x = config.initial_state;
    let mut log_pi = spec.log_density(x);
    let mut accepted = 0usize;
    for i in 0..total {
        if i > 0 {
            let step: f64 = rng.sample(StandardNormal);
            let proposal = x + config.proposal_sd * step;
            let log_pi_new = spec.log_density(proposal);
            let u: f64 = rng.random();
            if u < (log_pi_new - log_pi).min(0.0).exp() {
                x = proposal;
                log_pi = log_pi_new;
                accepted += 1;
            }
        }
        if i >= config.burn_in {
            chain.push(x);
        }
    }
    let rate = if total > 1 {
        accepted as f64 / (total - 1) as f64
    } else {
        0.0
    };
    Ok((chain, rate))
}

pub fn sample_mixture_mh(spec: &MixtureSpec, config: &MhConfig) -> Result<MhOutput> {
    let (chain, acceptance_rate) = draw_mixture_mh(spec, config, &mut stream_rng(config.seed, 0))?;
    Ok(MhOutput {
        samples: column_x(chain)?,
        acceptance_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{batch_means_covariance, BatchSize};
    use crate::estimation::sample_quantile;
    use crate::linalg::Matrix;
    use crate::samplers::gof::{ks_critical, ks_statistic};

    #[test]
    fn truth_values() {
        let t = mixture_truth(&MixtureSpec::default(), &[0.1, 0.9]).unwrap();
        assert_eq!(t.mean, 5.0);
        // reference values from 30-digit root finding on the mixture CDF
        assert!((t.quantiles[0] - 0.254_403_916_359_390_3).abs() < 1e-9);
        assert!((t.quantiles[1] - 11.014_311_439_305_13).abs() < 1e-9);
        let spec = MixtureSpec::default();
        for (q, x) in [0.1, 0.9].iter().zip(&t.quantiles) {
            assert!((spec.cdf(*x) - q).abs() < 1e-8);
        }
    }

    #[test]
    fn density_integrates_to_cdf() {
        let spec = MixtureSpec::default();
        // trapezoid over a wide grid
        let (a, b, m) = (-20.0, 30.0, 200_000);
        let h = (b - a) / m as f64;
        let mut acc = 0.0;
        for i in 0..=m {
            let w = if i == 0 || i == m { 0.5 } else { 1.0 };
            acc += w * spec.density(a + i as f64 * h);
        }
        assert!((acc * h - 1.0).abs() < 1e-9);
        assert!((spec.log_density(3.0) - spec.density(3.0).ln()).abs() < 1e-12);
        assert!(spec.log_density(1e4).is_finite());
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = MixtureSpec::default();
        s.weights = vec![0.5, 0.5, 0.5];
        assert!(s.validate().is_err());
        let mut s = MixtureSpec::default();
        s.variances[1] = 0.0;
        assert!(s.validate().is_err());
        let mut s = MixtureSpec::default();
        s.means.pop();
        assert!(s.validate().is_err());
        assert!(MixtureSpec::default().quantile(1.0).is_err());
    }

    #[test]
    fn single_component_reduction() {
        let spec = MixtureSpec {
            weights: vec![1.0, 0.0, 0.0],
            means: vec![0.0, 5.0, 11.0],
            variances: vec![1.0, 4.0, 3.0],
        };
        let s = sample_mixture_iid(&spec, 100_000, 3).unwrap();
        let mean = s.column(0).iter().sum::<f64>() / 1e5;
        assert!(mean.abs() < 0.02);
        let ks = ks_statistic(s.column(0).to_vec(), std_normal_cdf);
        assert!(ks < ks_critical(100_000));
    }

    #[test]
    fn iid_matches_truth() {
        let spec = MixtureSpec::default();
        let (s, labels) = sample_mixture_iid_labeled(&spec, 1_000_000, 11).unwrap();
        let x = s.column(0);
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 5.0).abs() < 3.0 * (var / n).sqrt());
        // quantile SE: √(q(1−q)/n)/f(ξ)
        let xi = 0.254_403_916_4;
        let se = (0.09 / n).sqrt() / spec.density(xi);
        assert!((sample_quantile(x, 0.1) - xi).abs() < 3.0 * se);
        for (k, &w) in spec.weights.iter().enumerate() {
            let freq = labels.iter().filter(|&&l| l == k).count() as f64 / n;
            assert!((freq - w).abs() < 3.0 * (w * (1.0 - w) / n).sqrt());
        }
        let ks = ks_statistic(x.to_vec(), |t| spec.cdf(t));
        assert!(ks < ks_critical(x.len()));
    }

    #[test]
    fn iid_reproducible() {
        let spec = MixtureSpec::default();
        assert_eq!(sample_mixture_iid(&spec, 1000, 5).unwrap(), sample_mixture_iid(&spec, 1000, 5).unwrap());
        assert_ne!(sample_mixture_iid(&spec, 1000, 5).unwrap(), sample_mixture_iid(&spec, 1000, 6).unwrap());
        assert!(sample_mixture_iid(&spec, 1, 5).is_err());
    }

    #[test]
    fn acceptance_rule() {
        let spec = MixtureSpec::default();
        assert_eq!(mh_acceptance_probability(&spec, 0.0, 5.0), 1.0);
        for (x, y) in [(5.0, 0.0), (5.0, 8.0), (1.0, -3.0), (11.0, 20.0)] {
            let direct = (spec.density(y) / spec.density(x)).min(1.0);
            assert!((mh_acceptance_probability(&spec, x, y) - direct).abs() < 1e-12 * direct.max(1e-300));
        }
    }

    #[test]
    fn mh_chain_targets_mixture() {
        let spec = MixtureSpec::default();
        let cfg = MhConfig {
            n_draws: 1_000_000,
            burn_in: 10_000,
            seed: 2,
            ..MhConfig::default()
        };
        let out = sample_mixture_mh(&spec, &cfg).unwrap();
        let x = out.samples.column(0);
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let s = Matrix::from_row_major(x.len(), 1, x.to_vec());
        let var = batch_means_covariance(&s, BatchSize::Auto).unwrap()[(0, 0)];
        let se = (var / x.len() as f64).sqrt();
        assert!((mean - 5.0).abs() < 4.0 * se, "mean {mean}, se {se}");
        assert!(out.acceptance_rate > 0.2 && out.acceptance_rate < 0.9);
    }

    #[test]
    fn mh_first_row_is_initial_state() {
        let cfg = MhConfig {
            n_draws: 50,
            initial_state: 2.5,
            ..MhConfig::default()
        };
        let out = sample_mixture_mh(&MixtureSpec::default(), &cfg).unwrap();
        assert_eq!(out.samples.column(0)[0], 2.5);
        assert_eq!(out.samples.n(), 50);
        assert_eq!(out, sample_mixture_mh(&MixtureSpec::default(), &cfg).unwrap());
    }

    #[test]
    fn overdispersed_proposal_rarely_accepts() {
        let cfg = MhConfig {
            proposal_sd: 1e4,
            n_draws: 20_000,
            ..MhConfig::default()
        };
        let out = sample_mixture_mh(&MixtureSpec::default(), &cfg).unwrap();
        assert!(out.acceptance_rate < 0.05);
        let bad = MhConfig {
            proposal_sd: 0.0,
            ..MhConfig::default()
        };
        assert!(sample_mixture_mh(&MixtureSpec::default(), &bad).is_err());
    }
}
