//! Scenario runner: reads a TOML scenario, dispatches to the core modules and
//! writes `report.json` plus CSV, SVG and binary grid artifacts.

pub mod run;
pub mod scenario;
pub mod svg;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

pub use scenario::{Expect, Kind, Scenario};

/// Failure classes, each with its own exit status.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Unreadable file, malformed TOML, unknown keys, bad expressions or out-of-range parameters.
    Schema(String),
    /// Anything that goes wrong after validation.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Schema(m) => write!(f, "schema error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

pub(crate) fn schema(context: &str, e: impl fmt::Display) -> CliError {
    CliError::Schema(format!("{context}: {e}"))
}

pub(crate) fn runtime(context: &str, e: impl fmt::Display) -> CliError {
    CliError::Runtime(format!("{context}: {e}"))
}

/// What a runner hands back: a pass/fail verdict when the scenario has one,
/// module details for the report, and the artifacts it wrote.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub verdict: Option<bool>,
    pub details: Value,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Report<'a> {
    kind: Kind,
    name: Option<&'a str>,
    seed: u64,
    expect: Option<Expect>,
    verdict: Option<&'static str>,
    matches_expectation: Option<bool>,
    error: Option<String>,
    artifacts: Vec<String>,
    details: Value,
}

/// Options shared by every subcommand.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

/// Runs a scenario and returns the process exit status.
pub fn run_scenario(kind: Kind, opts: &RunOptions) -> i32 {
    match execute(kind, opts) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            // Best effort: the report records the failure too.
            let report = Report {
                kind,
                name: None,
                seed: opts.seed.unwrap_or(0),
                expect: None,
                verdict: None,
                matches_expectation: None,
                error: Some(e.to_string()),
                artifacts: vec![],
                details: Value::Null,
            };
            let _ = write_report(&opts.out, &report);
            e.exit_code()
        }
    }
}

fn execute(kind: Kind, opts: &RunOptions) -> Result<i32, CliError> {
    let text = std::fs::read_to_string(&opts.config).map_err(|e| schema(&opts.config.display().to_string(), e))?;
    let sc: Scenario = toml::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", opts.config.display())))?;
    if let Some(k) = sc.kind {
        if k != kind {
            return Err(CliError::Schema(format!("scenario declares kind `{}` but was run as `{}`", k.name(), kind.name())));
        }
    }
    let seed = opts.seed.or(sc.seed).unwrap_or(0);
    std::fs::create_dir_all(&opts.out).map_err(|e| runtime(&opts.out.display().to_string(), e))?;
    let outcome = run::dispatch(kind, &sc, seed, &opts.out)?;
    let matches = match (sc.expect, outcome.verdict) {
        (Some(e), Some(v)) => Some((e == Expect::Pass) == v),
        (Some(_), None) => return Err(CliError::Schema(format!("`expect` is set but `{}` scenarios have no verdict", kind.name()))),
        _ => None,
    };
    let report = Report {
        kind,
        name: sc.name.as_deref(),
        seed,
        expect: sc.expect,
        verdict: outcome.verdict.map(|v| if v { "pass" } else { "fail" }),
        matches_expectation: matches,
        error: None,
        artifacts: outcome.artifacts,
        details: outcome.details,
    };
    write_report(&opts.out, &report)?;
    Ok(if matches == Some(false) { 1 } else { 0 })
}

fn write_report(out: &Path, report: &Report) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| runtime(&out.display().to_string(), e))?;
    let mut text = serde_json::to_string_pretty(report).map_err(|e| runtime("report", e))?;
    text.push('\n');
    std::fs::write(out.join("report.json"), text).map_err(|e| runtime("report.json", e))
}
