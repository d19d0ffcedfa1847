//! Command-line interface: `test`, `simulate`, `oracle`, and
//! `bootstrap-draws`.
//!
//! Exit codes: 0 = completed (either decision), 2 = input error,
//! 3 = degenerate configuration. All randomness flows through the
//! required `--seed`; repeated invocations with identical inputs write
//! byte-identical outputs regardless of `--threads`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::hoeffding;
use crate::jmb::MultiplierDrawPlan;
use crate::kernels::SmoothingFamily;
use crate::sample::{self, SampleError};
use crate::sim::{self, SimError};
use crate::stattests::{self, Engine, Method, TestError, TestOptions, TestRun, ThetaGrid};

const EXIT_OK: i32 = 0;
const EXIT_INPUT: i32 = 2;
const EXIT_DEGENERATE: i32 = 3;

#[derive(Parser)]
#[command(
    name = "ujack",
    version,
    about = "Bootstrap-calibrated sup tests for localized U-statistics"
)]
struct Cli {
    /// Worker thread cap (default: machine parallelism; env fallback
    /// UJACK_THREADS). Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one hypothesis test on a CSV dataset and write a JSON report.
    Test(TestArgs),
    /// Monte Carlo size study of the monotonicity test on synthetic nulls.
    Simulate(SimulateArgs),
    /// Randomized exactness suites for the projection oracle.
    Oracle(OracleArgs),
    /// Emit raw bootstrap supremum draws, one float per line.
    BootstrapDraws(DrawsArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Test statistic: gsv, llw, aw-sign, aw-raw.
    #[arg(long)]
    method: String,
    /// Input CSV file with one header row.
    #[arg(long)]
    data: PathBuf,
    /// Covariate column names.
    #[arg(long, value_delimiter = ',', required = true)]
    x_cols: Vec<String>,
    /// Response column name.
    #[arg(long)]
    y_col: String,
    /// Single bandwidth.
    #[arg(long, conflicts_with = "bandwidth_set")]
    bandwidth: Option<f64>,
    /// Candidate bandwidth set for the uniform-in-bandwidth test.
    #[arg(long, value_delimiter = ',')]
    bandwidth_set: Vec<f64>,
    #[arg(long, default_value_t = 0.05)]
    grid_min: f64,
    #[arg(long, default_value_t = 0.95)]
    grid_max: f64,
    /// Number of design points per covariate axis.
    #[arg(long, default_value_t = 19)]
    grid_points: usize,
    /// Response thresholds (llw only).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    y_grid: Vec<f64>,
    /// Smoothing kernel: epanechnikov or uniform.
    #[arg(long, default_value = "epanechnikov")]
    smoothing: String,
    /// Bootstrap draw count.
    #[arg(long)]
    boot: usize,
    /// Master seed (all randomness derives from it).
    #[arg(long)]
    seed: u64,
    /// Test sup |.| instead of the one-sided sup.
    #[arg(long)]
    two_sided: bool,
    /// Opt in to the subsampled engine with this many tuples per cell.
    #[arg(long)]
    incomplete_terms: Option<usize>,
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Nominal size in (0, 1).
    #[arg(long)]
    alpha: f64,
    /// Report destination (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the sorted bootstrap draws, one float per line.
    #[arg(long)]
    emit_draws: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// key=value study configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Result JSON destination (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional rejection-curve CSV destination.
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    /// Suite to run: hoeffding, degeneracy, or all.
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long)]
    seed: u64,
    /// Number of randomized decomposition instances.
    #[arg(long, default_value_t = 20)]
    instances: usize,
    /// JSON destination (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DrawsArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Draws destination (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Input(String),
    Degenerate(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            Self::Input(_) => EXIT_INPUT,
            Self::Degenerate(_) => EXIT_DEGENERATE,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Input(m) | Self::Degenerate(m) => m,
        }
    }
}

impl From<TestError> for CliError {
    fn from(err: TestError) -> Self {
        match err {
            TestError::AllThetaDegenerate | TestError::DegenerateNormalizer { .. } => {
                Self::Degenerate(err.to_string())
            }
            other => Self::Input(other.to_string()),
        }
    }
}

impl From<SampleError> for CliError {
    fn from(err: SampleError) -> Self {
        Self::Input(err.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(err: SimError) -> Self {
        match err {
            SimError::Test(test) => test.into(),
            other => Self::Input(other.to_string()),
        }
    }
}

impl From<hoeffding::HoeffdingError> for CliError {
    fn from(err: hoeffding::HoeffdingError) -> Self {
        Self::Input(err.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        Self::Input(err.to_string())
    }
}

/// Parse `argv` and run one subcommand, returning the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            // clap renders its own help/version output with exit code 0.
            if err.use_stderr() {
                eprint!("{err}");
                return EXIT_INPUT;
            }
            print!("{err}");
            return EXIT_OK;
        }
    };
    let threads = cli.threads.or_else(|| {
        std::env::var("UJACK_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    let run = || match &cli.command {
        Command::Test(args) => run_test_command(args),
        Command::Simulate(args) => run_simulate_command(args),
        Command::Oracle(args) => run_oracle_command(args),
        Command::BootstrapDraws(args) => run_draws_command(args),
    };
    let outcome = match threads {
        Some(t) if t > 0 => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(run),
            Err(err) => Err(CliError::Input(format!("cannot build thread pool: {err}"))),
        },
        Some(_) => Err(CliError::Input("--threads must be at least 1".into())),
        None => run(),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(err) => {
            eprintln!("error: {}", err.message());
            err.exit_code()
        }
    }
}

fn emit(path: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match path {
        Some(path) => std::fs::write(path, contents)?,
        None => print!("{contents}"),
    }
    Ok(())
}

fn emit_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Input(format!("cannot serialize output: {e}")))?;
    text.push('\n');
    emit(path, &text)
}

fn bandwidths_from(args: &DataArgs) -> Result<Vec<f64>, CliError> {
    match (args.bandwidth, args.bandwidth_set.is_empty()) {
        (Some(b), true) => Ok(vec![b]),
        (None, false) => Ok(args.bandwidth_set.clone()),
        (None, true) => Err(CliError::Input(
            "pass either --bandwidth or --bandwidth-set".into(),
        )),
        (Some(_), false) => unreachable!("clap conflicts_with"),
    }
}

/// Full lattice of `grid_points` equidistant values per covariate axis.
fn design_lattice(m: usize, args: &DataArgs) -> Result<Vec<Vec<f64>>, CliError> {
    let axis: Vec<f64> = ThetaGrid::equidistant(args.grid_min, args.grid_max, args.grid_points)
        .map_err(CliError::from)?
        .into_iter()
        .map(|p| p[0])
        .collect();
    let mut points: Vec<Vec<f64>> = vec![vec![]];
    for _ in 0..m {
        points = points
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&c| {
                    let mut next = prefix.clone();
                    next.push(c);
                    next
                })
            })
            .collect();
    }
    Ok(points)
}

fn run_shared_test(args: &DataArgs, alpha: f64) -> Result<TestRun, CliError> {
    let method = Method::parse(&args.method)?;
    let smoothing =
        SmoothingFamily::parse(&args.smoothing).map_err(|e| CliError::Input(e.to_string()))?;
    let payload_cols: Vec<String> = args
        .x_cols
        .iter()
        .cloned()
        .chain(std::iter::once(args.y_col.clone()))
        .collect();
    let sample = sample::load_csv(&args.data, &args.x_cols, &payload_cols)?;
    let grid = ThetaGrid::new(
        method,
        design_lattice(sample.m(), args)?,
        bandwidths_from(args)?,
        args.y_grid.clone(),
        args.two_sided,
        smoothing,
    )?;
    let plan = MultiplierDrawPlan::new(args.boot, args.seed)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let options = TestOptions {
        engine: match args.incomplete_terms {
            Some(terms) => Engine::Incomplete {
                terms_per_cell: terms,
            },
            None => Engine::Complete,
        },
        centering: None,
    };
    let run = stattests::run_test_with(&sample, &grid, plan, alpha, &options)?;
    for warning in &run.warnings {
        eprintln!("warning: {warning}");
    }
    Ok(run)
}

fn draws_text(run: &TestRun) -> String {
    let mut text = String::new();
    for v in run.draws.values() {
        writeln!(text, "{v}").expect("write to string");
    }
    text
}

fn run_test_command(args: &TestArgs) -> Result<(), CliError> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::Input(format!(
            "--alpha must be in (0, 1), got {}",
            args.alpha
        )));
    }
    let run = run_shared_test(&args.data, args.alpha)?;
    if let Some(path) = &args.emit_draws {
        emit(Some(path), &draws_text(&run))?;
    }
    emit_json(args.out.as_deref(), &run.report)
}

fn run_simulate_command(args: &SimulateArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config)?;
    let config = sim::SimConfig::parse(&text)?;
    let result = sim::run_size_study(&config)?;
    eprintln!(
        "simulate: {} replications in {:.1}s ({} errors)",
        config.replications, result.runtime_seconds, result.n_errors
    );
    if let Some(curve) = &args.curve {
        emit(Some(curve), &sim::curve_csv(&result))?;
    }
    emit_json(args.out.as_deref(), &result)
}

#[derive(Serialize)]
struct OracleOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    hoeffding: Option<hoeffding::SuiteReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    degeneracy: Option<hoeffding::DegeneracyReport>,
}

fn run_oracle_command(args: &OracleArgs) -> Result<(), CliError> {
    let (run_hoeffding, run_degeneracy) = match args.suite.as_str() {
        "hoeffding" => (true, false),
        "degeneracy" => (false, true),
        "all" => (true, true),
        other => {
            return Err(CliError::Input(format!(
                "unknown suite '{other}'; valid suites: hoeffding, degeneracy, all"
            )));
        }
    };
    let output = OracleOutput {
        hoeffding: run_hoeffding
            .then(|| hoeffding::decomposition_suite(args.seed, args.instances))
            .transpose()?,
        degeneracy: run_degeneracy
            .then(|| hoeffding::degeneracy_suite(args.seed))
            .transpose()?,
    };
    emit_json(args.out.as_deref(), &output)
}

fn run_draws_command(args: &DrawsArgs) -> Result<(), CliError> {
    let run = run_shared_test(&args.data, 0.5)?;
    emit(args.out.as_deref(), &draws_text(&run))
}
