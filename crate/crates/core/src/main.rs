use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use simband::covariance::{BatchSize, CovMode, CovModeConfig};
use simband::estimation::{ColumnSelector, EstimandSpec, SampleMatrix};
use simband::harness::{run_coverage_study, summarize_coverage, CoverageReport, CoverageStudyConfig, StudySampler};
use simband::plotio::{
    analyze, analyze_samples, ingest_with, parse_means, parse_quantiles, plot_coverage_chart, plot_credible_panels,
    plot_density_bands, write_output, AnalysisConfig, ConfigFile, IngestOptions, InputFormat, Report,
};
use simband::region::RegionMethod;
use simband::samplers::{
    gibbs_eight_schools, mixture_truth, sample_mixture_iid, sample_mixture_mh, EightSchoolsData, GibbsConfig, MhConfig,
    MixtureSpec,
};
use simband::{Error, Result, Warning};

/// Seed for the `mixture-iid` preset.
const MIXTURE_PRESET_SEED: u64 = 20_240_601;

#[derive(Parser)]
#[command(name = "simband", version, about = "Simultaneous Monte Carlo error bands for means and quantiles")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate means and quantiles from a sample file and build the three regions.
    Analyze(AnalyzeArgs),
    /// Empirical coverage of the regions on the mixture experiment.
    CoverageStudy(CoverageArgs),
    /// Draw an SVG from a saved report.
    Plot(PlotArgs),
    /// Run a packaged experiment end to end.
    ReplicatePaper(ReplicateArgs),
}

#[derive(Args, Default)]
struct InputArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    /// csv or json (default: from the extension).
    #[arg(long)]
    format: Option<InputFormat>,
    /// CSV without a header row; columns become c1..cd.
    #[arg(long)]
    no_header: bool,
    #[arg(long)]
    burn_in: Option<usize>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// TOML file with any of the options below; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    input: InputArgs,
    /// Comma-separated columns whose means are estimated.
    #[arg(long)]
    means: Option<String>,
    /// Comma-separated column:level quantile targets, e.g. x:0.1,x:0.9.
    #[arg(long)]
    quantiles: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// iid or mcmc.
    #[arg(long)]
    mode: Option<CovMode>,
    /// auto or an integer (mcmc mode).
    #[arg(long)]
    batch_size: Option<BatchSize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report JSON (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Density plot with simultaneous bands.
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Column to plot when the input has several.
    #[arg(long)]
    column: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplerArg {
    Iid,
    Mh,
}

#[derive(Args)]
struct CoverageArgs {
    #[arg(long, value_enum, default_value = "iid")]
    sampler: SamplerArg,
    #[arg(long, default_value_t = 500)]
    replications: usize,
    /// Draws per replication.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value = "0.1,0.2")]
    alphas: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Default: iid for the IID sampler, mcmc for MH.
    #[arg(long)]
    mode: Option<CovMode>,
    #[arg(long)]
    batch_size: Option<BatchSize>,
    #[arg(long, default_value_t = 0)]
    burn_in: usize,
    #[arg(long, default_value_t = 3.0)]
    proposal_sd: f64,
    /// Level of the simultaneous intervals around the coverage estimates.
    #[arg(long, default_value_t = 0.05)]
    meta_alpha: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Coverage summary JSON.
    #[arg(long)]
    summary_out: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Record wall-clock time in the report.
    #[arg(long)]
    timing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotKind {
    Density,
    Panels,
    Coverage,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long, value_enum)]
    kind: PlotKind,
    /// Analysis report (density, panels) or coverage report (coverage).
    #[arg(long)]
    report: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    column: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    meta_alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    svg: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    MixtureIid,
    MixtureMh,
    Coverage,
    CoverageFull,
    EightSchools,
}

#[derive(Args)]
struct ReplicateArgs {
    #[arg(long, value_enum)]
    preset: Preset,
    /// Number of draws (per replication for the coverage presets).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
}

/// Whether warnings were reported.
type Outcome = Result<bool>;

fn report_warnings<'a>(warnings: impl IntoIterator<Item = &'a Warning>) -> bool {
    let mut any = false;
    for w in warnings {
        eprintln!("warning: {w}");
        any = true;
    }
    any
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_output(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn analysis_config(args: &AnalyzeArgs) -> Result<AnalysisConfig> {
    let file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let input = args
        .input
        .input
        .clone()
        .or(file.input.clone())
        .ok_or_else(|| Error::Config("no input file (use --input or the config file)".into()))?;
    let means = match &args.means {
        Some(m) => parse_means(m),
        None => file
            .means
            .clone()
            .unwrap_or_default()
            .iter()
            .map(|m| ColumnSelector::from(m.as_str()))
            .collect(),
    };
    let quantiles = match &args.quantiles {
        Some(q) => parse_quantiles(q)?,
        None => file.quantile_targets()?.unwrap_or_default(),
    };
    let mode = args.mode.or(file.mode).unwrap_or(CovMode::Iid);
    let batch_size = match args.batch_size {
        Some(b) => b,
        None => file.batch_size()?.unwrap_or(BatchSize::Auto),
    };
    let config = AnalysisConfig {
        input,
        format: args.input.format.or(file.format),
        has_header: !(args.input.no_header || file.no_header.unwrap_or(false)),
        spec: EstimandSpec::new(means, quantiles)?,
        mode: CovModeConfig { mode, batch_size },
        alpha: args.alpha.or(file.alpha).unwrap_or(0.10),
        burn_in: args.input.burn_in.or(file.burn_in).unwrap_or(0),
        seed: args.seed.or(file.seed).unwrap_or(0),
        out: args.out.clone().or(file.out),
        svg: args.svg.clone().or(file.svg),
        plot_column: args.column.clone().or(file.column).map(|c| ColumnSelector::from(c.as_str())),
    };
    config.validate()?;
    Ok(config)
}

fn run_analyze(args: &AnalyzeArgs) -> Outcome {
    let config = analysis_config(args)?;
    let (samples, report) = analyze(&config)?;
    emit(config.out.as_deref(), &report.to_json()?)?;
    if let Some(svg) = &config.svg {
        write_output(svg, &plot_density_bands(&samples, &report, config.plot_column.as_ref())?)?;
    }
    Ok(report_warnings(report.all_warnings()))
}

fn run_coverage(args: &CoverageArgs) -> Outcome {
    let sampler = match args.sampler {
        SamplerArg::Iid => StudySampler::IidMixture,
        SamplerArg::Mh => StudySampler::MhMixture,
    };
    let mut config = CoverageStudyConfig::new(sampler);
    config.replications = args.replications;
    config.n_per_rep = args.n;
    config.alphas = args
        .alphas
        .split(',')
        .map(|a| {
            a.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad alpha {a:?}")))
        })
        .collect::<Result<_>>()?;
    config.master_seed = args.seed;
    if let Some(mode) = args.mode {
        config.cov_mode.mode = mode;
    }
    if let Some(b) = args.batch_size {
        config.cov_mode.batch_size = b;
    }
    config.burn_in = args.burn_in;
    config.proposal_sd = args.proposal_sd;
    study_outputs(&config, args.meta_alpha, args.timing, args.out.as_deref(), args.summary_out.as_deref(), args.svg.as_deref())
}

fn study_outputs(
    config: &CoverageStudyConfig,
    meta_alpha: f64,
    timing: bool,
    out: Option<&Path>,
    summary_out: Option<&Path>,
    svg: Option<&Path>,
) -> Outcome {
    let start = Instant::now();
    let mut report = run_coverage_study(config)?;
    if timing {
        report.meta.wall_clock_seconds = Some(start.elapsed().as_secs_f64());
    }
    report.check_nesting()?;
    let summary = summarize_coverage(&report, meta_alpha, config.master_seed)?;
    emit(out, &to_json(&report)?)?;
    if let Some(p) = summary_out {
        write_output(p, &to_json(&summary)?)?;
    }
    if let Some(p) = svg {
        write_output(p, &plot_coverage_chart(&summary))?;
    }
    for c in &report.cells {
        eprintln!(
            "{} alpha={}: coverage {:.4} ({} / {})",
            c.method.tag(),
            c.alpha,
            c.coverage,
            c.hits,
            report.outcomes.len()
        );
    }
    let failures: Vec<Warning> = report
        .failures
        .iter()
        .map(|f| Warning::new("harness", format!("replication {} failed: {}", f.replication, f.error)))
        .collect();
    Ok(report_warnings(failures.iter().chain(&summary.warnings)))
}

fn load_samples(input: &InputArgs, report: &Report) -> Result<SampleMatrix<f64>> {
    let path = input
        .input
        .clone()
        .or_else(|| report.input.path.clone().map(PathBuf::from))
        .ok_or_else(|| Error::Config("no sample file (use --input)".into()))?;
    let options = IngestOptions {
        format: input.format,
        has_header: !input.no_header,
        burn_in: input.burn_in.unwrap_or(report.input.burn_in),
    };
    Ok(ingest_with(&path, &options)?.samples)
}

fn run_plot(args: &PlotArgs) -> Outcome {
    let svg = match args.kind {
        PlotKind::Coverage => {
            let report: CoverageReport = serde_json::from_str(&std::fs::read_to_string(&args.report)?)?;
            let summary = summarize_coverage(&report, args.meta_alpha, args.seed)?;
            report_warnings(&summary.warnings);
            plot_coverage_chart(&summary)
        }
        PlotKind::Density | PlotKind::Panels => {
            let report = Report::read(&args.report)?;
            let samples = load_samples(&args.input, &report)?;
            if matches!(args.kind, PlotKind::Density) {
                let column = args.column.as_deref().map(ColumnSelector::from);
                plot_density_bands(&samples, &report, column.as_ref())?
            } else {
                plot_credible_panels(&samples, &report, None)?
            }
        }
    };
    write_output(&args.svg, &svg)?;
    Ok(false)
}

fn mixture_spec() -> EstimandSpec {
    EstimandSpec::means(["x"]).quantile("x", 0.1).quantile("x", 0.9)
}

/// 0.10 and 0.90 quantiles of every θ_j.
fn eight_schools_spec(groups: usize) -> EstimandSpec {
    let empty = EstimandSpec {
        means: Vec::new(),
        quantiles: Vec::new(),
    };
    (1..=groups).fold(empty, |s, j| {
        let col = format!("theta{j}");
        s.quantile(col.as_str(), 0.1).quantile(col.as_str(), 0.9)
    })
}

fn check_truth(report: &Report, truth: &[f64]) {
    for r in &report.regions {
        let inside = truth
            .iter()
            .zip(r.lower.iter().zip(&r.upper))
            .all(|(t, (lo, hi))| lo <= t && t <= hi);
        eprintln!("{} region (z = {:.6}) contains the true values: {inside}", r.method, r.z);
    }
}

fn run_replicate(args: &ReplicateArgs) -> Outcome {
    let dir = &args.out_dir;
    std::fs::create_dir_all(dir)?;
    match args.preset {
        Preset::MixtureIid | Preset::MixtureMh => {
            let mixture = MixtureSpec::default();
            let n = args.n.unwrap_or(1_000_000);
            let seed = args.seed.unwrap_or(MIXTURE_PRESET_SEED);
            let (samples, mode) = if matches!(args.preset, Preset::MixtureIid) {
                (sample_mixture_iid(&mixture, n, seed)?, CovModeConfig::IID)
            } else {
                let cfg = MhConfig {
                    n_draws: n,
                    seed,
                    burn_in: args.burn_in.unwrap_or(0),
                    ..MhConfig::default()
                };
                let out = sample_mixture_mh(&mixture, &cfg)?;
                eprintln!("MH acceptance rate {:.4}", out.acceptance_rate);
                (out.samples, CovModeConfig::MCMC_AUTO)
            };
            let report = analyze_samples(&samples, &mixture_spec(), &mode, 0.10, seed)?;
            let truth = mixture_truth(&mixture, &[0.1, 0.9])?;
            check_truth(&report, &truth.as_vector());
            write_output(&dir.join("report.json"), &report.to_json()?)?;
            write_output(&dir.join("truth.json"), &to_json(&truth)?)?;
            write_output(&dir.join("density.svg"), &plot_density_bands(&samples, &report, None)?)?;
            Ok(report_warnings(report.all_warnings()))
        }
        Preset::Coverage | Preset::CoverageFull => {
            let mut config = if matches!(args.preset, Preset::Coverage) {
                CoverageStudyConfig::new(StudySampler::IidMixture)
            } else {
                CoverageStudyConfig::full_scale(StudySampler::IidMixture)
            };
            if let Some(n) = args.n {
                config.n_per_rep = n;
            }
            config.master_seed = args.seed.unwrap_or(0);
            study_outputs(
                &config,
                0.05,
                false,
                Some(&dir.join("coverage.json")),
                Some(&dir.join("summary.json")),
                Some(&dir.join("coverage.svg")),
            )
        }
        Preset::EightSchools => {
            let data = EightSchoolsData::rubin_1981();
            let mut gibbs = GibbsConfig::new(args.n.unwrap_or(100_000), args.seed.unwrap_or(0));
            if let Some(b) = args.burn_in {
                gibbs.burn_in = b;
            }
            let samples = gibbs_eight_schools(&data, &gibbs)?;
            let spec = eight_schools_spec(data.groups());
            let report = analyze_samples(&samples, &spec, &CovModeConfig::MCMC_AUTO, 0.10, gibbs.seed)?;
            let si = report.region(RegionMethod::Simultaneous).map(|r| r.z).unwrap_or_default();
            eprintln!("eight schools: n = {}, z* = {si:.6}", samples.n());
            write_output(&dir.join("report.json"), &report.to_json()?)?;
            write_output(&dir.join("panels.svg"), &plot_credible_panels(&samples, &report, None)?)?;
            Ok(report_warnings(report.all_warnings()))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match &cli.command {
        Command::Analyze(a) => run_analyze(a),
        Command::CoverageStudy(a) => run_coverage(a),
        Command::Plot(a) => run_plot(a),
        Command::ReplicatePaper(a) => run_replicate(a),
    };
    match outcome {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
