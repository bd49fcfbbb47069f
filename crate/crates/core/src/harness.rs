//! Empirical coverage study for the mixture experiment.
//!
//! Each replication draws `n_per_rep` values, estimates (mean, ξ.10, ξ.90),
//! builds the three regions at every alpha and records whether each region
//! contains the true vector. Replications run in parallel; replication `r`
//! draws from ChaCha8 stream `r` of `master_seed` and integrates with MVN seed
//! `master_seed + r`, so the report does not depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{fit_asymptotic_covariance, CovModeConfig};
use crate::estimation::{estimate_joint, ColumnSelector, EstimandSpec, SampleMatrix};
use crate::region::{
    bonferroni_z, build_regions, simultaneous_region, RegionMethod, RegionOptions,
};
use crate::samplers::mixture::draw_mixture_mh;
use crate::samplers::{draw_mixture_iid, mixture_truth, stream_rng, MhConfig, MixtureSpec};
use crate::{Error, Result, Warning};

pub const SCHEMA: &str = "1";
const QUANTILE_LEVELS: [f64; 2] = [0.1, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudySampler {
    IidMixture,
    MhMixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageStudyConfig {
    pub sampler: StudySampler,
    pub replications: usize,
    pub n_per_rep: usize,
    pub alphas: Vec<f64>,
    pub master_seed: u64,
    pub cov_mode: CovModeConfig,
    pub mixture: MixtureSpec,
    /// MH only.
    pub proposal_sd: f64,
    pub initial_state: f64,
    pub burn_in: usize,
    pub cov_tol: f64,
}

impl CoverageStudyConfig {
    /// Desk-scale defaults: 500 replications of 10⁴ draws, alphas 0.10 and
    /// 0.20. IID sampling pairs with the sample covariance, MH with batch
    /// means.
    pub fn new(sampler: StudySampler) -> Self {
        let mh = MhConfig::default();
        Self {
            sampler,
            replications: 500,
            n_per_rep: 10_000,
            alphas: vec![0.10, 0.20],
            master_seed: 0,
            cov_mode: match sampler {
                StudySampler::IidMixture => CovModeConfig::IID,
                StudySampler::MhMixture => CovModeConfig::MCMC_AUTO,
            },
            mixture: MixtureSpec::default(),
            proposal_sd: mh.proposal_sd,
            initial_state: mh.initial_state,
            burn_in: mh.burn_in,
            cov_tol: RegionOptions::default().cov_tol,
        }
    }

    /// The full-size study: 2000 replications.
    pub fn full_scale(sampler: StudySampler) -> Self {
        Self {
            replications: 2000,
            ..Self::new(sampler)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 2 {
            return Err(Error::Harness(format!("need at least 2 replications, got {}", self.replications)));
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(Error::Harness(format!("alphas {:?} must be non-empty and inside (0, 1)", self.alphas)));
        }
        self.mixture.validate()?;
        self.cov_mode.validate(self.n_per_rep)?;
        if self.sampler == StudySampler::MhMixture {
            self.mh_config(0).validate()?;
        }
        Ok(())
    }

    pub fn estimand(&self) -> EstimandSpec {
        QUANTILE_LEVELS
            .iter()
            .fold(EstimandSpec::means(["x"]), |s, &q| s.quantile("x", q))
    }

    /// (method, alpha) per outcome column: alphas outer, methods LB, SI, UB inner.
    pub fn cells(&self) -> Vec<(RegionMethod, f64)> {
        self.alphas
            .iter()
            .flat_map(|&a| RegionMethod::ALL.into_iter().map(move |m| (m, a)))
            .collect()
    }

    fn mh_config(&self, seed: u64) -> MhConfig {
        MhConfig {
            proposal_sd: self.proposal_sd,
            n_draws: self.n_per_rep,
            seed,
            initial_state: self.initial_state,
            burn_in: self.burn_in,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCell {
    pub method: RegionMethod,
    pub alpha: f64,
    pub hits: usize,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub replication: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyMeta {
    pub config: CoverageStudyConfig,
    pub labels: Vec<String>,
    pub truth: Vec<f64>,
    pub seed_rule: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub schema: String,
    pub cells: Vec<CoverageCell>,
    /// Successful replications in order.
    pub replication_ids: Vec<usize>,
    /// One row per successful replication, one 0/1 entry per cell.
    pub outcomes: Vec<Vec<u8>>,
    pub failures: Vec<ReplicationFailure>,
    pub meta: StudyMeta,
}

impl CoverageReport {
    pub fn cell_index(&self, method: RegionMethod, alpha: f64) -> Option<usize> {
        self.cells.iter().position(|c| c.method == method && c.alpha == alpha)
    }

    pub fn coverage(&self, method: RegionMethod, alpha: f64) -> Option<f64> {
        self.cell_index(method, alpha).map(|i| self.cells[i].coverage)
    }

    /// Per replication: LB ⇒ SI ⇒ UB at each alpha, and for each method a hit
    /// at a larger alpha implies a hit at every smaller alpha.
    pub fn check_nesting(&self) -> Result<()> {
        let mut alphas: Vec<f64> = self.cells.iter().map(|c| c.alpha).collect();
        alphas.sort_by(f64::total_cmp);
        alphas.dedup();
        let idx = |m, a| {
            self.cell_index(m, a)
                .ok_or_else(|| Error::Harness(format!("missing cell {m} at alpha {a}")))
        };
        for (row, rep) in self.outcomes.iter().zip(&self.replication_ids) {
            for &a in &alphas {
                let [lb, si, ub] = RegionMethod::ALL.map(|m| idx(m, a).map(|i| row[i]));
                let (lb, si, ub) = (lb?, si?, ub?);
                if lb > si || si > ub {
                    return Err(Error::Harness(format!(
                        "replication {rep}, alpha {a}: hits LB={lb} SI={si} UB={ub} are not nested"
                    )));
                }
            }
            for m in RegionMethod::ALL {
                for w in alphas.windows(2) {
                    if row[idx(m, w[1])?] > row[idx(m, w[0])?] {
                        return Err(Error::Harness(format!(
                            "replication {rep}, {m}: hit at alpha {} but not at {}",
                            w[1], w[0]
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn run_replication(config: &CoverageStudyConfig, spec: &EstimandSpec, truth: &[f64], rep: usize) -> Result<Vec<u8>> {
    let mut rng = stream_rng(config.master_seed, rep as u64);
    let values = match config.sampler {
        StudySampler::IidMixture => draw_mixture_iid(&config.mixture, config.n_per_rep, &mut rng)?.0,
        StudySampler::MhMixture => draw_mixture_mh(&config.mixture, &config.mh_config(config.master_seed), &mut rng)?.0,
    };
    let samples = SampleMatrix::from_columns(vec![values], Some(vec!["x".to_string()]))?;
    let estimate = estimate_joint(&samples, spec)?;
    let fit = fit_asymptotic_covariance(&samples, spec, &estimate, &config.cov_mode)?;
    let options = RegionOptions {
        cov_tol: config.cov_tol,
        ..RegionOptions::with_seed(config.master_seed.wrapping_add(rep as u64))
    };
    let mut row = Vec::with_capacity(3 * config.alphas.len());
    for &alpha in &config.alphas {
        let set = build_regions(&estimate, &fit.acov, alpha, &options)?;
        row.extend(RegionMethod::ALL.map(|m| u8::from(set.get(m).contains(truth))));
    }
    Ok(row)
}

pub fn run_coverage_study(config: &CoverageStudyConfig) -> Result<CoverageReport> {
    config.validate()?;
    let spec = config.estimand();
    let truth = mixture_truth(&config.mixture, &QUANTILE_LEVELS)?.as_vector();
    let results: Vec<Result<Vec<u8>>> = (0..config.replications)
        .into_par_iter()
        .map(|rep| run_replication(config, &spec, &truth, rep))
        .collect();

    let mut outcomes = Vec::with_capacity(results.len());
    let mut replication_ids = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (rep, r) in results.into_iter().enumerate() {
        match r {
            Ok(row) => {
                outcomes.push(row);
                replication_ids.push(rep);
            }
            Err(e) => failures.push(ReplicationFailure {
                replication: rep,
                error: e.to_string(),
            }),
        }
    }
    if failures.len() * 100 > config.replications {
        return Err(Error::Harness(format!(
            "{} of {} replications failed (first: replication {}: {})",
            failures.len(),
            config.replications,
            failures[0].replication,
            failures[0].error
        )));
    }

    let m = outcomes.len();
    let cells = config
        .cells()
        .into_iter()
        .enumerate()
        .map(|(k, (method, alpha))| {
            let hits = outcomes.iter().map(|row| row[k] as usize).sum();
            CoverageCell {
                method,
                alpha,
                hits,
                coverage: hits as f64 / m as f64,
            }
        })
        .collect();
    Ok(CoverageReport {
        schema: SCHEMA.to_string(),
        cells,
        replication_ids,
        outcomes,
        failures,
        meta: StudyMeta {
            config: config.clone(),
            labels: spec.labels(),
            truth,
            seed_rule: "replication r: ChaCha8(master_seed) stream r; MVN seed master_seed + r".to_string(),
            wall_clock_seconds: None,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub method: RegionMethod,
    pub alpha: f64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    /// All outcomes equal: no variance, the interval is the point itself.
    pub degenerate: bool,
}

/// Simultaneous intervals for the coverage probabilities of every cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub meta_alpha: f64,
    /// Region used for the non-degenerate cells.
    pub method: RegionMethod,
    pub z: Option<f64>,
    pub cells: Vec<SummaryCell>,
    pub warnings: Vec<Warning>,
}

pub fn summarize_coverage(report: &CoverageReport, meta_alpha: f64, seed: u64) -> Result<CoverageSummary> {
    let cells: Vec<(RegionMethod, f64)> = report.cells.iter().map(|c| (c.method, c.alpha)).collect();
    summarize_outcomes(&cells, &report.outcomes, meta_alpha, seed)
}

/// Treats the replications × cells 0/1 matrix as IID multivariate data:
/// means, sample covariance, simultaneous region at `meta_alpha`.
pub fn summarize_outcomes(
    cells: &[(RegionMethod, f64)],
    outcomes: &[Vec<u8>],
    meta_alpha: f64,
    seed: u64,
) -> Result<CoverageSummary> {
    let m = outcomes.len();
    if m < 2 {
        return Err(Error::Harness(format!("need at least 2 replications to summarize, got {m}")));
    }
    if let Some(r) = outcomes.iter().position(|row| row.len() != cells.len()) {
        return Err(Error::Harness(format!("outcome row {r} has the wrong length")));
    }
    let columns: Vec<Vec<f64>> = (0..cells.len())
        .map(|k| outcomes.iter().map(|row| f64::from(row[k])).collect())
        .collect();
    let estimates: Vec<f64> = columns.iter().map(|c| c.iter().sum::<f64>() / m as f64).collect();

    let mut warnings = Vec::new();
    // representative[k]: column whose interval cell k reuses
    let mut representative: Vec<Option<usize>> = vec![None; cells.len()];
    let mut kept: Vec<usize> = Vec::new();
    for k in 0..cells.len() {
        let col = &columns[k];
        if col.iter().all(|&v| v == col[0]) {
            warnings.push(Warning::new(
                "harness",
                format!("{} at alpha {}: all outcomes equal, zero variance", cells[k].0, cells[k].1),
            ));
            continue;
        }
        match kept.iter().position(|&j| columns[j] == *col) {
            Some(pos) => representative[k] = Some(pos),
            None => {
                representative[k] = Some(kept.len());
                kept.push(k);
            }
        }
    }

    let mut half = vec![0.0; kept.len()];
    let mut method = RegionMethod::Simultaneous;
    let mut z = None;
    if !kept.is_empty() {
        let names: Vec<String> = (0..kept.len()).map(|i| format!("cell{i}")).collect();
        let samples = SampleMatrix::from_columns(kept.iter().map(|&k| columns[k].clone()).collect(), Some(names))?;
        let spec = EstimandSpec::means((0..kept.len()).map(ColumnSelector::Index));
        let estimate = estimate_joint(&samples, &spec)?;
        let fit = fit_asymptotic_covariance(&samples, &spec, &estimate, &CovModeConfig::IID)?;
        match simultaneous_region(&estimate, &fit.acov, meta_alpha, &RegionOptions::with_seed(seed)) {
            Ok(region) => {
                warnings.extend(region.warnings);
                half = region.half_widths;
                z = Some(region.z);
            }
            Err(Error::Region(msg)) => {
                warnings.push(Warning::new("harness", format!("falling back to Bonferroni: {msg}")));
                let zb = bonferroni_z(meta_alpha, kept.len())?;
                half = fit.acov.standard_errors().into_iter().map(|s| zb * s).collect();
                method = RegionMethod::Bonferroni;
                z = Some(zb);
            }
            Err(e) => return Err(e),
        }
    }

    let cells = cells
        .iter()
        .enumerate()
        .map(|(k, &(m, alpha))| {
            let h = representative[k].map_or(0.0, |r| half[r]);
            SummaryCell {
                method: m,
                alpha,
                estimate: estimates[k],
                lower: estimates[k] - h,
                upper: estimates[k] + h,
                degenerate: representative[k].is_none(),
            }
        })
        .collect();
    Ok(CoverageSummary {
        meta_alpha,
        method,
        z,
        cells,
        warnings,
    })
}
