//! `conlab`: validate scenarios, run them, and recompute reports from traces.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use consensus_lab::config::ConfigError;
use consensus_lab::metrics::MetricsError;
use consensus_lab::trace::TraceError;
use consensus_lab::{compute_report, simnet, MetricsReport, ScenarioConfig, SimulationTrace};
use thiserror::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NO_PROGRESS: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "conlab", version, about = "Deterministic PoW / PoS consensus simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one or more scenarios and write trace, report and interval series.
    Run {
        /// Scenario file; repeat for a batch.
        #[arg(long = "scenario", required = true)]
        scenarios: Vec<PathBuf>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; batch runs get one subdirectory per scenario.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Override the slashing switch.
        #[arg(long)]
        slashing: Option<Switch>,
        /// Format of the summary printed to stdout.
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Scenarios to run concurrently in batch mode.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Recompute the report from a saved trace.
    Report {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Check a scenario file and list every problem found.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Config { path: PathBuf, source: ConfigError },
    #[error("{path}: {source}")]
    Trace { path: PathBuf, source: TraceError },
    #[error("{path}: {source}")]
    Metrics { path: PathBuf, source: MetricsError },
    #[error("scenario {0:?} made no progress: no block was produced before the bound")]
    NoProgress(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { source: ConfigError::Io { .. }, .. } => EXIT_IO,
            CliError::Config { .. } | CliError::Metrics { .. } => EXIT_CONFIG,
            CliError::Trace { source: TraceError::Io(_), .. } => EXIT_IO,
            CliError::Trace { .. } => EXIT_CONFIG,
            CliError::NoProgress(_) => EXIT_NO_PROGRESS,
            CliError::Io { .. } => EXIT_IO,
        }
    }
}

/// What a completed run wrote.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub trace_path: PathBuf,
    pub report_path: PathBuf,
    pub series_path: PathBuf,
    pub digest: String,
}

pub fn render(report: &MetricsReport, format: Format) -> String {
    match format {
        Format::Json => report.to_json(),
        Format::Text => report.to_text(),
        Format::Csv => report.to_csv(),
    }
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, CliError> {
    ScenarioConfig::load(path).map_err(|source| CliError::Config { path: path.to_path_buf(), source })
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// Runs one scenario and writes its outputs into `out_dir`.
pub fn run_scenario(
    path: &Path,
    seed: Option<u64>,
    slashing: Option<Switch>,
    out_dir: &Path,
) -> Result<RunOutput, CliError> {
    let mut cfg = load_scenario(path)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(s) = slashing {
        cfg.slashing = s == Switch::On;
    }
    std::fs::create_dir_all(out_dir).map_err(|source| CliError::Io { path: out_dir.to_path_buf(), source })?;

    let trace = simnet::run(&cfg);
    let text = trace.to_ndjson();
    // The report is computed from the serialized form so that `report` on
    // the saved file reproduces it exactly.
    let reparsed = SimulationTrace::parse(&text).expect("freshly written trace parses");
    let report = compute_report(&reparsed).map_err(|source| CliError::Metrics { path: path.to_path_buf(), source })?;

    let trace_path = out_dir.join(&cfg.outputs.trace);
    let report_path = out_dir.join(&cfg.outputs.report);
    let series_path = out_dir.join(&cfg.outputs.series);
    write(&trace_path, &text)?;
    write(&report_path, &report.to_json())?;
    write(&series_path, &report.windows_csv())?;

    if report.blocks_proposed == 0 {
        return Err(CliError::NoProgress(cfg.name));
    }
    let digest = report.trace_digest.clone();
    Ok(RunOutput { report, trace_path, report_path, series_path, digest })
}

pub fn report_from_trace(path: &Path) -> Result<MetricsReport, CliError> {
    let trace = SimulationTrace::read(path).map_err(|source| CliError::Trace { path: path.to_path_buf(), source })?;
    compute_report(&trace).map_err(|source| CliError::Metrics { path: path.to_path_buf(), source })
}

/// Runs scenarios on up to `jobs` threads; results come back in input order.
pub fn run_batch(
    scenarios: &[PathBuf],
    seed: Option<u64>,
    slashing: Option<Switch>,
    out_dir: &Path,
    jobs: usize,
) -> Vec<Result<RunOutput, CliError>> {
    let dir_for = |path: &Path| -> PathBuf {
        if scenarios.len() == 1 {
            out_dir.to_path_buf()
        } else {
            out_dir.join(path.file_stem().unwrap_or_default())
        }
    };
    let jobs = jobs.max(1).min(scenarios.len().max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut results: Vec<Option<Result<RunOutput, CliError>>> = (0..scenarios.len()).map(|_| None).collect();
    let slots = std::sync::Mutex::new(&mut results);
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                let Some(path) = scenarios.get(i) else { break };
                let result = run_scenario(path, seed, slashing, &dir_for(path));
                slots.lock().expect("no poisoned workers")[i] = Some(result);
            });
        }
    });
    results.into_iter().map(|r| r.expect("every scenario ran")).collect()
}

/// Executes a parsed command, writing user output to `out` and diagnostics to
/// `err`. Returns the process exit code.
pub fn execute(cli: Cli, out: &mut dyn std::io::Write, err: &mut dyn std::io::Write) -> i32 {
    match cli.command {
        Command::Run { scenarios, seed, out_dir, slashing, format, jobs } => {
            let mut code = 0;
            for (path, result) in scenarios.iter().zip(run_batch(&scenarios, seed, slashing, &out_dir, jobs)) {
                match result {
                    Ok(run) => {
                        let _ = write!(out, "{}", render(&run.report, format));
                        let _ = writeln!(
                            err,
                            "{}: trace {} sha256 {}",
                            path.display(),
                            run.trace_path.display(),
                            run.digest
                        );
                    }
                    Err(e) => {
                        let _ = writeln!(err, "error: {e}");
                        code = code.max(e.exit_code());
                    }
                }
            }
            code
        }
        Command::Report { trace, format } => match report_from_trace(&trace) {
            Ok(report) => {
                let _ = write!(out, "{}", render(&report, format));
                0
            }
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                e.exit_code()
            }
        },
        Command::Validate { scenario } => match load_scenario(&scenario) {
            Ok(cfg) => {
                let _ = writeln!(
                    out,
                    "ok: {} ({}, {} nodes, seed {})",
                    cfg.name,
                    cfg.consensus.name(),
                    cfg.nodes.len(),
                    cfg.seed
                );
                0
            }
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                e.exit_code()
            }
        },
    }
}
