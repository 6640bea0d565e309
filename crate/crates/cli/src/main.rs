//! `exitduel`: compute thresholds, simulate games, audit the equilibrium and
//! emit CSV/JSON data products.
//!
//! Exit codes: 0 every check passed, 1 a check failed (for `audit`, a
//! profitable deviation), 2 the parameters violate a standing assumption,
//! 64 usage error.

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, ValueEnum};
use exitduel::equilibrium::Equilibrium;
use exitduel::payoffs::validate_assumptions;
use serde::Serialize;

use commands::{Check, Context, Outcome};
use config::Settings;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("assumption failure: {0}")]
    Assumption(String),
    #[error("{0}")]
    Runtime(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 64,
            CliError::Assumption(_) => 2,
            CliError::Runtime(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<exitduel::Error> for CliError {
    fn from(e: exitduel::Error) -> Self {
        use exitduel::Error as E;
        let msg = e.to_string();
        match e {
            E::RegimeViolated(_)
            | E::NoExitIncentive { .. }
            | E::BracketNotFound { .. }
            | E::NonMonotoneThreshold { .. } => CliError::Assumption(msg),
            E::InvalidParameter { .. }
            | E::OutsideDomain { .. }
            | E::TypeOutOfSupport { .. }
            | E::BadLadder
            | E::EmptyRuleSet
            | E::HorizonMismatch { .. } => CliError::Usage(msg),
            E::DomainExit { .. } | E::HorizonTooShort { .. } | E::LadderMonotonicity { .. } => CliError::Runtime(msg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    Thresholds,
    Simulate,
    Audit,
    Region,
    Special,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Thresholds => "thresholds",
            Command::Simulate => "simulate",
            Command::Audit => "audit",
            Command::Region => "region",
            Command::Special => "special",
        }
    }
}

/// Flags override keys read from `--config`, which override built-in defaults.
#[derive(Debug, Parser)]
#[command(
    name = "exitduel",
    version,
    about = "Equilibrium exit timing in a two-player stochastic duopoly"
)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Flat `key = value` file; `#` starts a comment.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    x0: Option<f64>,
    /// One type, or a comma-separated list for `audit`.
    #[arg(long)]
    theta: Option<String>,
    /// Opponent type for `simulate`; defaults to `--theta`.
    #[arg(long)]
    theta2: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Comma-separated: default, immediate, never, single, rect:XS:AS, shift:D, single_shift:D.
    #[arg(long)]
    deviations: Option<String>,
    /// `deterministic` or `degenerate`, for `special`.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    x_grid: Option<String>,
    #[arg(long)]
    a_grid: Option<String>,
    /// Any configuration key, as KEY=VALUE. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Args {
    fn settings(&self) -> Result<Settings, CliError> {
        let mut s = Settings::defaults();
        if let Some(path) = &self.config {
            s.merge_file(path)?;
        }
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            s.set(k, v)?;
        }
        let flags: [(&str, Option<String>); 12] = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
            ("dt", self.dt.map(|v| v.to_string())),
            ("paths", self.paths.map(|v| v.to_string())),
            ("x0", self.x0.map(|v| v.to_string())),
            ("theta", self.theta.clone()),
            ("theta2", self.theta2.map(|v| v.to_string())),
            ("horizon", self.horizon.map(|v| v.to_string())),
            ("deviations", self.deviations.clone()),
            ("mode", self.mode.clone()),
            ("x_grid", self.x_grid.clone()),
            ("a_grid", self.a_grid.clone()),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                s.set(k, &v)?;
            }
        }
        Ok(s)
    }
}

#[derive(Serialize)]
struct RunReport<'a> {
    command: &'a str,
    config_hash: String,
    config: &'a std::collections::BTreeMap<String, String>,
    wall_time_s: f64,
    exit_code: u8,
    error: Option<String>,
    checks: Vec<Check>,
    outputs: Vec<String>,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("EXITDUEL_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("EXITDUEL_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

/// Validate the configuration, then run the command. A failed assumption
/// aborts with every failing clause and its numbers.
fn execute(command: Command, settings: &Settings, out: &Path) -> Result<Outcome, CliError> {
    let prims = settings.primitives()?;
    let dist = settings.distribution()?;
    let report = validate_assumptions(&prims.model, &prims.profit, &prims.resolvents, &dist);
    if !report.passed() {
        let failed: Vec<String> = report
            .failures()
            .map(|c| format!("{} ({} vs {})", c.name, c.lhs, c.rhs))
            .collect();
        return Err(CliError::Assumption(failed.join("; ")));
    }
    let eq = Equilibrium::build(prims, dist)?;
    let ctx = Context {
        settings,
        eq: &eq,
        hash: settings.hash(command.name()),
        out,
    };
    match command {
        Command::Thresholds => commands::thresholds(&ctx),
        Command::Simulate => commands::simulate(&ctx),
        Command::Audit => commands::audit(&ctx),
        Command::Region => commands::region(&ctx),
        Command::Special => commands::special(&ctx),
    }
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let started = Instant::now();
    let settings = match args.settings().and_then(|s| configure_threads().map(|_| s)) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("exitduel: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let out = settings.out_dir();
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("exitduel: cannot create {}: {e}", out.display());
        return ExitCode::from(1);
    }

    let command = args.command;
    let (outcome, error) = match execute(command, &settings, &out) {
        Ok(o) => (o, None),
        Err(e) => (Outcome::default(), Some(e)),
    };
    let code = match &error {
        Some(e) => e.exit_code(),
        None if outcome.checks.iter().all(|c| c.passed) => 0,
        None => 1,
    };

    for c in &outcome.checks {
        println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if let Some(e) = &error {
        eprintln!("exitduel: {e}");
    }

    let report = RunReport {
        command: command.name(),
        config_hash: settings.hash(command.name()),
        config: settings.echo(),
        wall_time_s: started.elapsed().as_secs_f64(),
        exit_code: code,
        error: error.as_ref().map(ToString::to_string),
        checks: outcome.checks,
        outputs: outcome.outputs,
    };
    if let Err(e) = output::write_json(&out.join("report.json"), &report) {
        eprintln!("exitduel: {e}");
        return ExitCode::from(1);
    }
    ExitCode::from(code)
}
