use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::covariance::{fit_asymptotic_covariance, BatchLayout, BatchSize, CovMode, CovModeConfig};
use crate::estimation::{estimate_joint, ColumnSelector, EstimandSpec, QuantileTarget, SampleMatrix};
use crate::mvn::MvnResult;
use crate::plotio::ingest::{ingest_with, IngestOptions, InputFormat};
use crate::region::{build_regions, ConfidenceRegion, RegionMethod, RegionOptions};
use crate::{Error, Result, Warning};

pub const REPORT_SCHEMA: &str = "1";

/// `x,y` → selectors.
pub fn parse_means(list: &str) -> Vec<ColumnSelector> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(ColumnSelector::from)
        .collect()
}

/// `x:0.1,x:0.9` → targets. The level follows the last colon.
pub fn parse_quantiles(list: &str) -> Result<Vec<QuantileTarget>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse_quantile)
        .collect()
}

fn parse_quantile(item: &str) -> Result<QuantileTarget> {
    let (col, q) = item
        .rsplit_once(':')
        .ok_or_else(|| Error::Config(format!("quantile target {item:?} is not column:level")))?;
    let q: f64 = q
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("quantile target {item:?}: bad level {q:?}")))?;
    Ok(QuantileTarget {
        column: ColumnSelector::from(col.trim()),
        q,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub input: PathBuf,
    pub format: Option<InputFormat>,
    pub has_header: bool,
    pub spec: EstimandSpec,
    pub mode: CovModeConfig,
    pub alpha: f64,
    pub burn_in: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub svg: Option<PathBuf>,
    /// Column for the density plot when the input has several.
    pub plot_column: Option<ColumnSelector>,
}

impl AnalysisConfig {
    pub fn new(input: impl Into<PathBuf>, spec: EstimandSpec) -> Self {
        Self {
            input: input.into(),
            format: None,
            has_header: true,
            spec,
            mode: CovModeConfig::IID,
            alpha: 0.10,
            burn_in: 0,
            seed: 0,
            out: None,
            svg: None,
            plot_column: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input.as_os_str().is_empty() {
            return Err(Error::Config("input path is empty".into()));
        }
        for p in self.out.iter().chain(&self.svg) {
            if p.as_os_str().is_empty() {
                return Err(Error::Config("output path is empty".into()));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} is not inside (0, 1)", self.alpha)));
        }
        self.spec.validate()
    }
}

/// Optional settings read from a TOML file; command-line flags override them.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub input: Option<PathBuf>,
    pub format: Option<InputFormat>,
    pub no_header: Option<bool>,
    pub means: Option<Vec<String>>,
    pub quantiles: Option<Vec<String>>,
    pub alpha: Option<f64>,
    pub mode: Option<CovMode>,
    pub batch_size: Option<String>,
    pub burn_in: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub svg: Option<PathBuf>,
    pub column: Option<String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Relative paths are taken relative to the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.input, &mut cfg.out, &mut cfg.svg].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn batch_size(&self) -> Result<Option<BatchSize>> {
        self.batch_size.as_deref().map(str::parse).transpose()
    }

    pub fn quantile_targets(&self) -> Result<Option<Vec<QuantileTarget>>> {
        self.quantiles
            .as_ref()
            .map(|qs| qs.iter().map(|q| parse_quantile(q)).collect())
            .transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSummary {
    pub path: Option<String>,
    pub columns: Vec<String>,
    pub rows_read: usize,
    pub burn_in: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSection {
    pub labels: Vec<String>,
    pub spec: EstimandSpec,
    pub nu_hat: Vec<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSection {
    pub mode: CovModeConfig,
    /// √(assembled_ii / n).
    pub standard_errors: Vec<f64>,
    pub sigma_hat: Vec<Vec<f64>>,
    pub lambda_inv: Vec<f64>,
    pub assembled: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSection {
    pub method: RegionMethod,
    pub alpha: f64,
    pub z: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub half_widths: Vec<f64>,
    pub coverage: MvnResult,
    pub warnings: Vec<Warning>,
}

impl From<&ConfidenceRegion<f64>> for RegionSection {
    fn from(r: &ConfidenceRegion<f64>) -> Self {
        Self {
            method: r.method,
            alpha: r.alpha,
            z: r.z,
            lower: r.intervals.iter().map(|i| i.0).collect(),
            upper: r.intervals.iter().map(|i| i.1).collect(),
            half_widths: r.half_widths.clone(),
            coverage: r.achieved_coverage,
            warnings: r.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Kernel density at each estimated quantile.
    pub densities: Vec<f64>,
    pub bandwidths: Vec<f64>,
    pub batch: Option<BatchLayout>,
    pub mvn_error_estimates: Vec<f64>,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub input: InputSummary,
    pub alpha: f64,
    pub seed: u64,
    pub estimate: EstimateSection,
    pub covariance: CovarianceSection,
    /// Uncorrected, simultaneous, Bonferroni.
    pub regions: Vec<RegionSection>,
    pub diagnostics: Diagnostics,
}

impl Report {
    pub fn region(&self, method: RegionMethod) -> Option<&RegionSection> {
        self.regions.iter().find(|r| r.method == method)
    }

    /// Warnings from every stage.
    pub fn all_warnings(&self) -> Vec<&Warning> {
        self.diagnostics
            .warnings
            .iter()
            .chain(self.regions.iter().flat_map(|r| &r.warnings))
            .collect()
    }

    pub fn has_warnings(&self) -> bool {
        !self.all_warnings().is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        if r.schema != REPORT_SCHEMA {
            return Err(Error::Format(format!("unsupported report schema {:?}", r.schema)));
        }
        Ok(r)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Estimation, covariance and the three regions for in-memory samples.
pub fn analyze_samples(
    samples: &SampleMatrix<f64>,
    spec: &EstimandSpec,
    mode: &CovModeConfig,
    alpha: f64,
    seed: u64,
) -> Result<Report> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha {alpha} is not inside (0, 1)")));
    }
    mode.validate(samples.n())?;
    let estimate = estimate_joint(samples, spec)?;
    let fit = fit_asymptotic_covariance(samples, spec, &estimate, mode)?;
    let regions = build_regions(&estimate, &fit.acov, alpha, &RegionOptions::with_seed(seed))?;
    let regions: Vec<RegionSection> = regions.iter().map(RegionSection::from).collect();
    Ok(Report {
        schema: REPORT_SCHEMA.to_string(),
        input: InputSummary {
            path: None,
            columns: (0..samples.d()).map(|j| samples.column_label(j)).collect(),
            rows_read: samples.n(),
            burn_in: 0,
            n: samples.n(),
        },
        alpha,
        seed,
        estimate: EstimateSection {
            labels: spec.labels(),
            spec: spec.clone(),
            nu_hat: estimate.nu_hat.clone(),
            n: estimate.n,
        },
        covariance: CovarianceSection {
            mode: *mode,
            standard_errors: fit.acov.standard_errors(),
            sigma_hat: fit.acov.sigma_hat.to_rows(),
            lambda_inv: fit.acov.lambda_inv.clone(),
            assembled: fit.acov.assembled.to_rows(),
        },
        diagnostics: Diagnostics {
            densities: fit.densities.values.clone(),
            bandwidths: fit.densities.bandwidths.clone(),
            batch: fit.layout,
            mvn_error_estimates: regions.iter().map(|r| r.coverage.error_estimate).collect(),
            warnings: fit.warnings,
        },
        regions,
    })
}

/// Ingest, then [`analyze_samples`]. Returns the samples for plotting.
pub fn analyze(config: &AnalysisConfig) -> Result<(SampleMatrix<f64>, Report)> {
    config.validate()?;
    let ingested = ingest_with(
        &config.input,
        &IngestOptions {
            format: config.format,
            has_header: config.has_header,
            burn_in: config.burn_in,
        },
    )?;
    let mut report = analyze_samples(&ingested.samples, &config.spec, &config.mode, config.alpha, config.seed)?;
    report.input.path = Some(config.input.display().to_string());
    report.input.rows_read = ingested.rows_read;
    report.input.burn_in = config.burn_in;
    Ok((ingested.samples, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::{sample_mixture_iid, MixtureSpec};

    #[test]
    fn target_lists() {
        let q = parse_quantiles("x:0.1, y:z:0.9").unwrap();
        assert_eq!(q[0].column, ColumnSelector::from("x"));
        assert_eq!(q[1].column, ColumnSelector::from("y:z"));
        assert_eq!(q[1].q, 0.9);
        assert!(parse_quantiles("x").is_err());
        assert!(parse_quantiles("x:a").is_err());
        assert_eq!(parse_means("a, b,").len(), 2);
    }

    #[test]
    fn univariate_regions_identical() {
        let s = sample_mixture_iid(&MixtureSpec::default(), 5000, 1).unwrap();
        let r = analyze_samples(&s, &EstimandSpec::means(["x"]), &CovModeConfig::IID, 0.1, 0).unwrap();
        let lb = r.region(RegionMethod::Uncorrected).unwrap();
        for m in [RegionMethod::Simultaneous, RegionMethod::Bonferroni] {
            let other = r.region(m).unwrap();
            assert!((other.lower[0] - lb.lower[0]).abs() < 1e-12);
            assert!((other.upper[0] - lb.upper[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_layout_recorded() {
        let s = sample_mixture_iid(&MixtureSpec::default(), 400, 2).unwrap();
        let spec = EstimandSpec::means(["x"]).quantile("x", 0.5);
        let r = analyze_samples(&s, &spec, &CovModeConfig::MCMC_AUTO, 0.1, 0).unwrap();
        let b = r.diagnostics.batch.unwrap();
        assert_eq!((b.batch_size, b.n_batches), (20, 20));
    }

    #[test]
    fn json_round_trip() {
        let s = sample_mixture_iid(&MixtureSpec::default(), 3000, 3).unwrap();
        let spec = EstimandSpec::means(["x"]).quantile("x", 0.1).quantile(0usize, 0.9);
        let r = analyze_samples(&s, &spec, &CovModeConfig::MCMC_AUTO, 0.1, 5).unwrap();
        let text = r.to_json().unwrap();
        assert_eq!(Report::from_json(&text).unwrap(), r);
        assert!(Report::from_json(&text.replace("\"schema\": \"1\"", "\"schema\": \"9\"")).is_err());
    }

    #[test]
    fn config_file() {
        let c = ConfigFile::parse(
            "input = \"d.csv\"\nmeans = [\"x\"]\nquantiles = [\"x:0.1\"]\nmode = \"mcmc\"\nbatch_size = \"auto\"\nalpha = 0.2\n",
        )
        .unwrap();
        assert_eq!(c.mode, Some(CovMode::Mcmc));
        assert_eq!(c.batch_size().unwrap(), Some(BatchSize::Auto));
        assert_eq!(c.quantile_targets().unwrap().unwrap()[0].q, 0.1);
        assert!(ConfigFile::parse("bogus = 1").is_err());
    }

    #[test]
    fn validation() {
        let mut c = AnalysisConfig::new("", EstimandSpec::means(["x"]));
        assert!(c.validate().is_err());
        c.input = "a.csv".into();
        c.alpha = 1.5;
        assert!(c.validate().is_err());
    }
}
