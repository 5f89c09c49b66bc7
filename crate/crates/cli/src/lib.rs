//! Run configuration, validation and command execution for the `edg` binary.

use std::fmt;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use edg_core::postproc::{sample_field, Field, FieldEvaluator, SampleGrid};
use edg_core::problems::ProblemSpec;
use edg_core::spaces::{build_spaces, TraceVariant};
use edg_core::study::{convergence_study, mms_study, solve_level};
use edg_core::Mesh;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const DEFAULT_REFERENCE_LEVEL: u32 = 7;
pub const MAX_LEVEL: u32 = 10;
pub const THREADS_ENV: &str = "EDG_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Solve,
    Convergence,
    Mms,
    Dofs,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Convergence => "convergence",
            Command::Mms => "mms",
            Command::Dofs => "dofs",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Solver,
    Io,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Solver => 3,
            ErrorKind::Io => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Config => "config",
            ErrorKind::Solver => "solver",
            ErrorKind::Io => "io",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Config,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self {
            kind: ErrorKind::Io,
            message: format!("{}: {err}", path.display()),
        }
    }

    /// One-line JSON record for stderr.
    pub fn record(&self) -> String {
        json!({ "error": { "kind": self.kind.as_str(), "exit_code": self.kind.exit_code(), "message": self.message } })
            .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind.as_str(), self.message)
    }
}

impl std::error::Error for CliError {}

impl From<edg_core::Error> for CliError {
    fn from(e: edg_core::Error) -> Self {
        use edg_core::Error as E;
        let kind = match &e {
            E::Numerical(_) | E::Domain(_) | E::Structural(_) => ErrorKind::Solver,
            E::Io(_) => ErrorKind::Io,
            E::Capability(_) | E::Config(_) | E::Lookup(_) | E::Usage(_) | E::Json(_) => {
                ErrorKind::Config
            }
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Parses an inclusive `a..b` level range.
pub fn parse_levels(s: &str) -> CliResult<RangeInclusive<u32>> {
    let bad = || {
        CliError::config(format!(
            "invalid level range `{s}` (expected a..b with a < b, e.g. 1..4)"
        ))
    };
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let (a, b): (u32, u32) = (
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    );
    if a >= b {
        return Err(bad());
    }
    Ok(a..=b)
}

/// Settings from flags or a JSON config file. Every field is optional so the
/// two sources can be layered.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub method: Option<String>,
    pub degree: Option<usize>,
    pub level: Option<u32>,
    pub levels: Option<String>,
    pub reference_level: Option<u32>,
    pub problem: Option<String>,
    pub sample_grid: Option<usize>,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("config file {}: {e}", path.display())))
    }

    /// Fields set in `over` replace those in `self`.
    pub fn overlay(self, over: RunConfig) -> RunConfig {
        RunConfig {
            command: over.command.or(self.command),
            method: over.method.or(self.method),
            degree: over.degree.or(self.degree),
            level: over.level.or(self.level),
            levels: over.levels.or(self.levels),
            reference_level: over.reference_level.or(self.reference_level),
            problem: over.problem.or(self.problem),
            sample_grid: over.sample_grid.or(self.sample_grid),
            output: over.output.or(self.output),
        }
    }
}

/// A validated configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Run {
    pub command: Command,
    pub method: TraceVariant,
    pub degree: usize,
    pub level: Option<u32>,
    pub levels: Option<RangeInclusive<u32>>,
    pub reference_level: Option<u32>,
    pub problem: String,
    pub sample_grid: Option<usize>,
    pub output: Option<PathBuf>,
    pub threads: usize,
}

fn check_level(level: u32, what: &str) -> CliResult<()> {
    if level > MAX_LEVEL {
        return Err(CliError::config(format!(
            "{what} {level} exceeds the maximum level {MAX_LEVEL}"
        )));
    }
    Ok(())
}

fn reject(cmd: Command, set: bool, flag: &str) -> CliResult<()> {
    if set {
        return Err(CliError::config(format!(
            "--{flag} does not apply to `{}`",
            cmd.as_str()
        )));
    }
    Ok(())
}

/// Reads the worker thread count from `EDG_THREADS` (unset means serial).
pub fn threads_from_env() -> CliResult<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(v) => v.trim().parse().map_err(|_| {
            CliError::config(format!("{THREADS_ENV}=`{v}` is not a non-negative integer"))
        }),
    }
}

impl Run {
    pub fn validate(cmd: Command, cfg: RunConfig, threads: usize) -> CliResult<Run> {
        if let Some(c) = cfg.command {
            if c != cmd {
                return Err(CliError::config(format!(
                    "config file is for `{}` but the command is `{}`",
                    c.as_str(),
                    cmd.as_str()
                )));
            }
        }
        let method = cfg
            .method
            .as_deref()
            .unwrap_or("edg")
            .parse::<TraceVariant>()?;
        let degree = cfg.degree.unwrap_or(1);
        let levels = cfg.levels.as_deref().map(parse_levels).transpose()?;
        let needs_level = matches!(cmd, Command::Solve | Command::Dofs);
        reject(cmd, needs_level && levels.is_some(), "levels")?;
        reject(cmd, !needs_level && cfg.level.is_some(), "level")?;
        reject(
            cmd,
            cmd != Command::Convergence && cfg.reference_level.is_some(),
            "reference-level",
        )?;
        reject(
            cmd,
            cmd != Command::Solve && cfg.sample_grid.is_some(),
            "sample-grid",
        )?;
        reject(
            cmd,
            cmd == Command::Dofs && cfg.problem.is_some(),
            "problem",
        )?;

        let (level, levels, reference_level) = match cmd {
            Command::Solve | Command::Dofs => {
                let l = cfg.level.ok_or_else(|| {
                    CliError::config(format!("`{}` requires --level", cmd.as_str()))
                })?;
                check_level(l, "level")?;
                (Some(l), None, None)
            }
            Command::Convergence => {
                let r = levels.unwrap_or(1..=4);
                let reference = cfg.reference_level.unwrap_or(DEFAULT_REFERENCE_LEVEL);
                check_level(reference, "reference level")?;
                if reference <= *r.end() {
                    return Err(CliError::config(format!(
                        "--reference-level {reference} must exceed the finest study level {}",
                        r.end()
                    )));
                }
                (None, Some(r), Some(reference))
            }
            Command::Mms => {
                let r = levels.unwrap_or(2..=5);
                check_level(*r.end(), "level")?;
                (None, Some(r), None)
            }
        };
        if let Some(m) = cfg.sample_grid {
            if m < 2 {
                return Err(CliError::config(format!(
                    "--sample-grid {m} must be at least 2"
                )));
            }
        }
        let problem = cfg.problem.unwrap_or_else(|| {
            if cmd == Command::Mms {
                "mms-trig"
            } else {
                "example1-high"
            }
            .into()
        });
        Ok(Run {
            command: cmd,
            method,
            degree,
            level,
            levels,
            reference_level,
            problem,
            sample_grid: cfg.sample_grid,
            output: cfg.output,
            threads,
        })
    }
}

/// Files and messages produced by a run.
#[derive(Debug, Default)]
pub struct Outcome {
    /// Primary artifact printed to stdout when no output path is given.
    pub stdout: Option<String>,
    /// JSON summary; goes to stdout when the artifact went to a file, else stderr.
    pub summary: Value,
    pub files: Vec<(PathBuf, String)>,
}

fn grid_stats(g: &SampleGrid) -> Value {
    let finite = g.values.iter().all(|v| v.is_finite());
    let (lo, hi) = g
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    json!({ "min": lo, "max": hi, "finite": finite, "points": g.values.len() })
}

fn header(run: &Run) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("command".into(), json!(run.command.as_str()));
    m.insert("method".into(), json!(run.method.as_str()));
    m.insert("degree".into(), json!(run.degree));
    if run.command != Command::Dofs {
        m.insert("problem".into(), json!(run.problem));
    }
    m
}

/// Executes a validated run without touching the file system.
pub fn execute(run: &Run) -> CliResult<Outcome> {
    let mut summary = header(run);
    let spec = || ProblemSpec::catalog(&run.problem).map_err(CliError::from);
    let mut out = Outcome::default();
    match run.command {
        Command::Dofs => {
            let level = run.level.expect("validated");
            let mesh = Mesh::build_uniform_square(level);
            let report = build_spaces(&mesh, run.method, run.degree)?.report();
            let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
            summary.insert("level".into(), json!(level));
            match &run.output {
                Some(p) => out.files.push((p.clone(), text)),
                None => out.stdout = Some(text),
            }
        }
        Command::Convergence | Command::Mms => {
            let levels = run.levels.clone().expect("validated");
            let table = if run.command == Command::Convergence {
                let reference = run.reference_level.expect("validated");
                summary.insert("reference_level".into(), json!(reference));
                convergence_study(
                    &spec()?,
                    run.method,
                    run.degree,
                    levels.clone(),
                    reference,
                    run.threads,
                )?
            } else {
                mms_study(
                    &spec()?,
                    run.method,
                    run.degree,
                    levels.clone(),
                    run.threads,
                )?
            };
            summary.insert("levels".into(), json!([levels.start(), levels.end()]));
            let csv = table.to_csv();
            match &run.output {
                Some(p) => out.files.push((p.clone(), csv)),
                None => out.stdout = Some(csv),
            }
        }
        Command::Solve => {
            let level = run.level.expect("validated");
            let d = solve_level(&spec()?, run.method, run.degree, level, run.threads)?;
            summary.insert("level".into(), json!(level));
            summary.insert("dim".into(), json!(d.stats.dim));
            summary.insert("nnz".into(), json!(d.stats.nnz));
            summary.insert("residual".into(), json!(d.stats.residual));
            let mut grids = Vec::new();
            if let Some(m) = run.sample_grid {
                let ev = FieldEvaluator::new(d.view())?;
                let mut stats = serde_json::Map::new();
                for (name, field) in [("y", Field::Y), ("z", Field::Z)] {
                    if ev.has(field) {
                        let g = sample_field(d.view(), field, m)?;
                        stats.insert(name.into(), grid_stats(&g));
                        grids.push((name, g.to_csv()));
                    }
                }
                summary.insert("samples".into(), Value::Object(stats));
            }
            match &run.output {
                Some(dir) => {
                    out.files
                        .push((dir.join("solution.json"), d.bundle.to_json()? + "\n"));
                    for (name, csv) in grids {
                        out.files.push((dir.join(format!("{name}.csv")), csv));
                    }
                }
                None => out.stdout = grids.into_iter().next().map(|(_, csv)| csv),
            }
        }
    }
    if !out.files.is_empty() {
        let paths: Vec<String> = out
            .files
            .iter()
            .map(|(p, _)| p.display().to_string())
            .collect();
        summary.insert("files".into(), json!(paths));
    }
    out.summary = Value::Object(summary);
    Ok(out)
}

/// Writes the outcome's files, creating the solve output directory if needed.
pub fn write_files(out: &Outcome) -> CliResult<()> {
    for (path, text) in &out.files {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> RunConfig {
        RunConfig::default()
    }

    #[test]
    fn level_ranges() {
        assert_eq!(parse_levels("1..4").unwrap(), 1..=4);
        for bad in ["4..1", "2..2", "1-4", "a..3", ""] {
            assert_eq!(
                parse_levels(bad).unwrap_err().kind,
                ErrorKind::Config,
                "{bad}"
            );
        }
    }

    #[test]
    fn flags_override_file() {
        let file = RunConfig {
            method: Some("hdg".into()),
            degree: Some(0),
            level: Some(2),
            ..cfg()
        };
        let flags = RunConfig {
            degree: Some(1),
            ..cfg()
        };
        let merged = file.overlay(flags);
        assert_eq!(
            (merged.method.as_deref(), merged.degree, merged.level),
            (Some("hdg"), Some(1), Some(2))
        );
    }

    #[test]
    fn unknown_config_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"degree": 1, "mesh": 3}"#).is_err());
        let c: RunConfig = serde_json::from_str(r#"{"command": "mms", "levels": "2..4"}"#).unwrap();
        assert_eq!(c.command, Some(Command::Mms));
    }

    #[test]
    fn validation_rules() {
        let err = |cmd, c| Run::validate(cmd, c, 0).unwrap_err().kind;
        assert_eq!(err(Command::Solve, cfg()), ErrorKind::Config);
        assert_eq!(
            err(
                Command::Dofs,
                RunConfig {
                    level: Some(1),
                    levels: Some("1..2".into()),
                    ..cfg()
                }
            ),
            ErrorKind::Config
        );
        assert_eq!(
            err(
                Command::Convergence,
                RunConfig {
                    reference_level: Some(4),
                    ..cfg()
                }
            ),
            ErrorKind::Config
        );
        assert_eq!(
            err(
                Command::Convergence,
                RunConfig {
                    level: Some(2),
                    ..cfg()
                }
            ),
            ErrorKind::Config
        );
        assert_eq!(
            err(
                Command::Mms,
                RunConfig {
                    sample_grid: Some(8),
                    ..cfg()
                }
            ),
            ErrorKind::Config
        );
        assert_eq!(
            err(
                Command::Solve,
                RunConfig {
                    level: Some(11),
                    ..cfg()
                }
            ),
            ErrorKind::Config
        );
        assert_eq!(
            err(
                Command::Solve,
                RunConfig {
                    level: Some(1),
                    method: Some("cg".into()),
                    ..cfg()
                }
            ),
            ErrorKind::Config
        );
        assert_eq!(
            err(
                Command::Solve,
                RunConfig {
                    command: Some(Command::Dofs),
                    level: Some(1),
                    ..cfg()
                }
            ),
            ErrorKind::Config
        );
        let run = Run::validate(Command::Convergence, cfg(), 0).unwrap();
        assert_eq!((run.levels, run.reference_level), (Some(1..=4), Some(7)));
        assert_eq!(
            Run::validate(Command::Mms, cfg(), 0).unwrap().problem,
            "mms-trig"
        );
    }

    #[test]
    fn core_errors_map_to_exit_codes() {
        let c = |e: edg_core::Error| CliError::from(e).kind.exit_code();
        assert_eq!(c(edg_core::Error::Numerical("x".into())), 3);
        assert_eq!(c(edg_core::Error::Lookup("x".into())), 2);
        assert_eq!(c(edg_core::Error::Io(std::io::Error::other("x"))), 4);
    }

    #[test]
    fn dofs_report_for_level_zero() {
        let run = Run::validate(
            Command::Dofs,
            RunConfig {
                degree: Some(0),
                level: Some(0),
                ..cfg()
            },
            0,
        )
        .unwrap();
        let out = execute(&run).unwrap();
        let v: Value = serde_json::from_str(out.stdout.as_deref().unwrap()).unwrap();
        assert_eq!(v["monolithic"], 28);
    }

    #[test]
    fn unknown_problem_is_config_error() {
        let run = Run::validate(
            Command::Solve,
            RunConfig {
                level: Some(1),
                problem: Some("nope".into()),
                ..cfg()
            },
            0,
        )
        .unwrap();
        assert_eq!(execute(&run).unwrap_err().kind, ErrorKind::Config);
    }
}
