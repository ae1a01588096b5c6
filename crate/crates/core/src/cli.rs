//! Command-line front end: `solve`, `classify`, `curve`, `witness`, `selftest`.
//!
//! Reports go to stdout in human form, or to `--out` in machine form (JSON,
//! or CSV for `curve`). Exit codes follow [`crate::report`]: 0 success,
//! 1 usage/config error, 2 ill-posed, 3 no multiplier / non-attainable,
//! 4 indeterminate, 5 selftest failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::classifier::{classify, classify_model};
use crate::config::RunConfig;
use crate::expectation::mc_expect;
use crate::numerics::Numerics;
use crate::report::{
    classification_report, solve_report, witness_report, write_curve_csv, EXIT_OK, EXIT_SELFTEST_FAILED, EXIT_USAGE,
};
use crate::selftest::selftest;
use crate::solver::{budget_integrand, estimate_lambda0, f_curve, optimal_solution_from, witness_unboundedness};

const DEFAULT_CURVE_POINTS: usize = 64;

#[derive(Debug, Parser)]
#[command(name = "wellposed", version, about = "Lagrange-method solver and well-posedness classifier for expected-utility maximization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Human,
    Json,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Budget a, overriding the config.
    #[arg(long)]
    pub budget: Option<f64>,
    /// Write the machine-format report here instead of printing.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Monte Carlo seed, overriding the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve f(λ) = a and report the optimal wealth and value.
    Solve(Common),
    /// Classify the model, or the model at the given budget.
    Classify(Common),
    /// Export the budget curve λ ↦ f(λ) as CSV.
    Curve {
        #[command(flatten)]
        common: Common,
        /// Geometric grid "a:b:n".
        #[arg(long)]
        grid: Option<String>,
    },
    /// Build a feasible wealth with expected utility above m·a.
    Witness {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10.0)]
        multiple: f64,
    },
    /// Run the canonical scenario table.
    Selftest {
        /// Take the numerics block from this config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Parse `argv` (including the program name), run, and return the exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    run_with_output(argv, &mut stdout.lock())
}

pub fn run_with_output<I, T>(argv: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command, stdout) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
    }
}

struct Loaded {
    cfg: RunConfig,
    out: Option<PathBuf>,
    format: Option<Format>,
}

fn load(common: Common) -> Result<Loaded, String> {
    let mut cfg = RunConfig::load(&common.config).map_err(|e| e.to_string())?;
    if let Some(a) = common.budget {
        cfg.budget = Some(a);
    }
    if let Some(seed) = common.seed {
        cfg.numerics.seed = seed;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    let out = common.out.or_else(|| cfg.out.clone());
    Ok(Loaded { cfg, out, format: common.format })
}

fn required_budget(cfg: &RunConfig) -> Result<f64, String> {
    cfg.budget.ok_or_else(|| "a budget is required: set `budget` in the config or pass --budget".into())
}

/// Machine format to a file, otherwise human (or JSON when asked) to stdout.
fn emit(
    stdout: &mut dyn Write,
    out: Option<&Path>,
    format: Option<Format>,
    human: impl FnOnce() -> String,
    json: impl FnOnce() -> String,
) -> Result<(), String> {
    match out {
        Some(path) => {
            let text = if format == Some(Format::Human) { human() } else { json() };
            std::fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
        }
        None => {
            let text = if format == Some(Format::Json) { json() } else { human() };
            stdout.write_all(text.as_bytes()).map_err(|e| e.to_string())
        }
    }
}

fn execute(command: Command, stdout: &mut dyn Write) -> Result<i32, String> {
    match command {
        Command::Solve(common) => {
            let Loaded { cfg, out, format } = load(common)?;
            let a = required_budget(&cfg)?;
            let (u, k, n) = (&cfg.utility, &cfg.kernel, &cfg.numerics);
            let est = estimate_lambda0(u, k, n);
            let result = optimal_solution_from(u, k, a, &est, n);
            // sampling needs a cheap inverse marginal
            let mc = match &result {
                Ok(s) if n.mc_n > 0 && u.analytic_inverse_marginal() => {
                    Some(mc_expect(k, &budget_integrand(u, s.lambda), n.mc_n, n.seed))
                }
                _ => None,
            };
            let report = solve_report(&result, a, &est, mc, u, k);
            emit(stdout, out.as_deref(), format, || report.to_human(), || report.to_json())?;
            Ok(report.exit_code)
        }
        Command::Classify(common) => {
            let Loaded { cfg, out, format } = load(common)?;
            let (u, k, n) = (&cfg.utility, &cfg.kernel, &cfg.numerics);
            let c = match cfg.budget {
                Some(a) => classify(u, k, a, n),
                None => classify_model(u, k, n),
            };
            let report = classification_report(&c, u, k);
            emit(stdout, out.as_deref(), format, || report.to_human(), || report.to_json())?;
            Ok(report.exit_code)
        }
        Command::Curve { common, grid } => {
            let Loaded { cfg, out, format } = load(common)?;
            let (u, k, n) = (&cfg.utility, &cfg.kernel, &cfg.numerics);
            let lambdas = match grid {
                Some(g) => parse_grid(&g)?,
                None => default_grid(estimate_lambda0(u, k, n).lambda0, DEFAULT_CURVE_POINTS),
            };
            let points = f_curve(u, k, &lambdas, n);
            let mut csv = Vec::new();
            write_curve_csv(&points, &mut csv).map_err(|e| e.to_string())?;
            let csv = String::from_utf8(csv).expect("ascii csv");
            let json = || serde_json::to_string_pretty(&points).expect("points serialize") + "\n";
            match (out, format) {
                (Some(path), Some(Format::Json)) => std::fs::write(&path, json()),
                (Some(path), _) => std::fs::write(&path, &csv),
                (None, Some(Format::Json)) => stdout.write_all(json().as_bytes()),
                (None, _) => stdout.write_all(csv.as_bytes()),
            }
            .map_err(|e| e.to_string())?;
            Ok(EXIT_OK)
        }
        Command::Witness { common, multiple } => {
            let Loaded { cfg, out, format } = load(common)?;
            let a = required_budget(&cfg)?;
            let (u, k, n) = (&cfg.utility, &cfg.kernel, &cfg.numerics);
            let result = witness_unboundedness(u, k, a, multiple, n);
            let report = witness_report(&result, a, u, k);
            emit(stdout, out.as_deref(), format, || report.to_human(), || report.to_json())?;
            Ok(report.exit_code)
        }
        Command::Selftest { config, out, format, seed } => {
            let mut numerics = match config {
                Some(path) => RunConfig::load(&path).map_err(|e| e.to_string())?.numerics,
                None => Numerics::default(),
            };
            if let Some(seed) = seed {
                numerics.seed = seed;
            }
            let report = selftest(&numerics);
            let json = || serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
            emit(stdout, out.as_deref(), format, || report.to_human(), json)?;
            for f in report.failures() {
                eprintln!("selftest failure: {}: expected {}, achieved {}", f.name, f.expected, f.achieved);
            }
            Ok(if report.passed { EXIT_OK } else { EXIT_SELFTEST_FAILED })
        }
    }
}

/// `"a:b:n"` → `n` geometric points from `a` to `b`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || format!("--grid expects \"a:b:n\" with 0 < a ≤ b and n ≥ 1, got {spec:?}");
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if !(a > 0.0 && b >= a && b.is_finite() && n >= 1) {
        return Err(bad());
    }
    Ok(geometric(a, b, n))
}

/// `n` points over `[λ₀/4, 4·max(λ₀, 1)]`; `[1/64, 4]` when `λ₀ = 0`, `[1/4, 4]` when `λ₀ = ∞`.
pub fn default_grid(lambda0: f64, n: usize) -> Vec<f64> {
    let (a, b) = if lambda0 == 0.0 {
        (1.0 / 64.0, 4.0)
    } else if lambda0.is_infinite() {
        (0.25, 4.0)
    } else {
        (lambda0 / 4.0, 4.0 * lambda0.max(1.0))
    };
    geometric(a, b, n)
}

fn geometric(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|i| match i {
            0 => a,
            i if i == n - 1 => b,
            i => (la + (lb - la) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}
