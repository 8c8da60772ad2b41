//! `gqfim`: run QFIM, SLD and saturability estimators on scenario files.
//!
//! Exit codes: 0 success, 2 invalid input or violated method precondition,
//! 3 numerical failure. `GQFIM_THREADS` sets the worker thread count.

mod report;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::scenario::{ScenarioError, BUNDLED};

const EXIT_INVALID: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "gqfim", version, about = "Quantum Fisher information for Gaussian state families")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a scenario and print the report.
    Run {
        /// Scenario file, or the name of a bundled scenario.
        scenario: String,
        /// Comma-separated methods, overriding the scenario's list.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Machine-readable output.
        #[arg(long)]
        json: bool,
        /// Absolute remainder target for the series method.
        #[arg(long)]
        target_error: Option<f64>,
        /// Purity threshold on |lambda - 1|.
        #[arg(long)]
        pure_tol: Option<f64>,
    },
    /// Report every schema and physicality problem without running.
    Validate { scenario: String },
    /// List bundled scenarios.
    List,
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("GQFIM_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| format!("GQFIM_THREADS must be a positive integer, got `{v}`"))?;
    if n == 0 {
        return Err("GQFIM_THREADS must be at least 1".into());
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
    Ok(())
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn scenario_failure(e: ScenarioError) -> ExitCode {
    match e {
        ScenarioError::Invalid(v) => {
            for line in &v {
                eprintln!("violation: {line}");
            }
            ExitCode::from(EXIT_INVALID)
        }
        other => fail(EXIT_INVALID, other),
    }
}

fn run(
    source: &str,
    methods: Option<Vec<String>>,
    out: Option<PathBuf>,
    json: bool,
    target: Option<f64>,
    pure_tol: Option<f64>,
) -> ExitCode {
    let (_, sc) = match scenario::load(source) {
        Ok(x) => x,
        Err(e) => return scenario_failure(e),
    };
    let violations = sc.violations();
    if !violations.is_empty() {
        return scenario_failure(ScenarioError::Invalid(violations));
    }
    let methods = match methods {
        Some(m) => scenario::parse_methods(m.iter().map(String::as_str)),
        None => sc.methods(),
    };
    let methods = match methods {
        Ok(m) => m,
        Err(e) => return scenario_failure(e),
    };
    for (flag, v) in [("--target-error", target), ("--pure-tol", pure_tol)] {
        if v.is_some_and(|x| !(x > 0.0 && x.is_finite())) {
            return fail(EXIT_INVALID, format!("{flag} must be positive"));
        }
    }
    let opts = sc.qfim_options(target, pure_tol);
    let rep = match report::run(&sc, &methods, &opts, &sc.bundle_options(&methods)) {
        Ok(r) => r,
        Err(e) => {
            let code = if e.core().is_numerical() { EXIT_NUMERICAL } else { EXIT_INVALID };
            return fail(code, e);
        }
    };
    let text = if json { report::to_json(&rep) } else { report::to_table(&rep) };
    match out {
        Some(path) => {
            if let Err(e) = std::fs::write(&path, text) {
                return fail(EXIT_INVALID, format!("cannot write {}: {e}", path.display()));
            }
        }
        None => print!("{text}"),
    }
    ExitCode::SUCCESS
}

fn validate(source: &str) -> ExitCode {
    let (_, sc) = match scenario::load(source) {
        Ok(x) => x,
        Err(e) => return scenario_failure(e),
    };
    let v = sc.violations();
    if v.is_empty() {
        println!("{}: ok", sc.name);
        ExitCode::SUCCESS
    } else {
        scenario_failure(ScenarioError::Invalid(v))
    }
}

fn list() -> ExitCode {
    for (name, text) in BUNDLED {
        let about = scenario::parse(text).ok().and_then(|s| s.description).unwrap_or_default();
        println!("{name:<24} {about}");
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        return fail(EXIT_INVALID, e);
    }
    match cli.command {
        Command::Run { scenario, methods, out, json, target_error, pure_tol } => {
            run(&scenario, methods, out, json, target_error, pure_tol)
        }
        Command::Validate { scenario } => validate(&scenario),
        Command::List => list(),
    }
}
