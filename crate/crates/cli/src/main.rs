//! `fsm-capra`: evaluate Capra conjugacy quantities, run the verification
//! suites and merge their outputs.

mod eval;
mod input;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fsm_capra::par::Execution;
use fsm_capra::verify::{run_suite, Suite, SuiteConfig};
use serde_json::Value;

pub const EXIT_VERIFY: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { code: EXIT_CONFIG, message: message.into() }
    }
}

impl From<fsm_capra::Error> for CliError {
    fn from(e: fsm_capra::Error) -> Self {
        use fsm_capra::Error as E;
        let code = match e {
            E::Solver(_) | E::SubgradientNotFound { .. } | E::CertificateMismatch { .. } | E::Infeasible(_) => EXIT_SOLVER,
            _ => EXIT_CONFIG,
        };
        CliError { code, message: e.to_string() }
    }
}

#[derive(Parser)]
#[command(name = "fsm-capra", version, about = "Capra conjugacy for functions of the support mapping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Operation {
    Conjugate,
    Biconjugate,
    L0f,
    Bounds,
    Subdiff,
    AggregateNorm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum UpperArg {
    ContainingSupport,
    AllK,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one operation at every point of a list.
    Eval {
        #[arg(value_enum)]
        op: Operation,
        /// Shorthand (`l2`, `linf`, ...), inline JSON or a JSON file.
        #[arg(long, default_value = "l2")]
        norm: String,
        /// Generator name, JSON value table or JSON object, inline or in a file.
        #[arg(long = "set-function", default_value = "cardinality")]
        set_function: String,
        /// JSON array of points, inline or in a file.
        #[arg(long)]
        points: String,
        #[arg(long)]
        d: Option<usize>,
        /// Dual vector for `subdiff`; a subgradient is constructed when absent.
        #[arg(long)]
        dual: Option<String>,
        #[arg(long, value_enum, default_value = "containing-support")]
        upper: UpperArg,
        /// JSON output; the CSV table goes next to it unless `--csv` is given.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run a verification suite on seeded random instances.
    Verify {
        /// theorem1, theorem2, appendixB, hidden-convexity, subdiff, bounds, conjugate-oracle
        suite: String,
        #[arg(long, default_value = "l2")]
        norm: String,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Replaces the tolerance of every claim.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        sequential: bool,
    },
    /// Merge earlier JSON outputs into one table, or tabulate values along a ray.
    Report {
        inputs: Vec<PathBuf>,
        /// Base point of the ray, e.g. `1,1`.
        #[arg(long)]
        ray: Option<String>,
        #[arg(long, default_value = "0.1..2")]
        scale: String,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        #[arg(long, default_value = "l2")]
        norm: String,
        #[arg(long = "set-function", default_value = "cardinality")]
        set_function: String,
        /// Summary table destination (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Ray CSV destination (stdout when absent).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339()
}

pub fn write_text(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::config(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn verify(
    suite: &str,
    norm: &str,
    d: usize,
    trials: Option<usize>,
    seed: u64,
    tol: Option<f64>,
    out: Option<&Path>,
    sequential: bool,
) -> Result<u8, CliError> {
    let suite = Suite::parse(suite).ok_or_else(|| CliError::config(format!("unknown suite {suite:?}")))?;
    if let Some(t) = tol {
        if !(t.is_finite() && t >= 0.0) {
            return Err(CliError::config("--tol must be a nonnegative number"));
        }
    }
    if trials == Some(0) {
        return Err(CliError::config("--trials must be positive"));
    }
    let mut cfg = SuiteConfig::new(suite, input::parse_norm(norm)?, d);
    cfg.trials = trials;
    cfg.seed = seed;
    cfg.tol = tol;
    cfg.exec = if sequential { Execution::Sequential } else { Execution::Parallel };
    let report = run_suite(&cfg)?;
    for c in &report.claims {
        eprintln!(
            "{} {} ({} instances, {} failures, max residual {:e}, tolerance {:e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.claim,
            c.instances,
            c.failures,
            c.max_residual,
            c.tolerance
        );
    }
    let mut doc = serde_json::to_value(&report).map_err(|e| CliError::config(e.to_string()))?;
    if let Value::Object(m) = &mut doc {
        m.insert("command".into(), "verify".into());
        m.insert("timestamp".into(), timestamp().into());
    }
    let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::config(e.to_string()))? + "\n";
    write_text(out, &text)?;
    Ok(if report.passed { 0 } else { EXIT_VERIFY })
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Eval { op, norm, set_function, points, d, dual, upper, out, csv } => {
            let args = eval::EvalArgs { op, norm, set_function, points, d, dual, upper, out, csv };
            eval::run(&args)
        }
        Command::Verify { suite, norm, d, trials, seed, tol, out, sequential } => {
            verify(&suite, &norm, d, trials, seed, tol, out.as_deref(), sequential)
        }
        Command::Report { inputs, ray, scale, steps, norm, set_function, out, csv } => {
            let args = report::ReportArgs { inputs, ray, scale, steps, norm, set_function, out, csv };
            report::run(&args)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
