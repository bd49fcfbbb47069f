//! File ingestion, configuration, JSON reports and SVG plots.

pub mod ingest;
pub mod report;
pub mod svg;

pub use ingest::{ingest, ingest_with, IngestOptions, Ingested, InputFormat};
pub use report::{
    analyze, analyze_samples, parse_means, parse_quantiles, AnalysisConfig, ConfigFile, Report, REPORT_SCHEMA,
};
pub use svg::{density_curve, plot_coverage_chart, plot_credible_panels, plot_density_bands};

use std::path::Path;

use crate::Result;

/// Writes `contents`, creating parent directories.
pub fn write_output(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}
