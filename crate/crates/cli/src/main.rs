use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use edg_cli::{
    execute, threads_from_env, write_files, CliError, CliResult, Command, Run, RunConfig,
};

/// Solve convection-diffusion Dirichlet boundary control problems with
/// EDG, IEDG or HDG discretizations.
#[derive(Parser)]
#[command(name = "edg", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one level; optionally sample y and z on a uniform grid.
    Solve(Flags),
    /// Errors and observed orders against a finer reference solution.
    Convergence(Flags),
    /// Errors and observed orders against a manufactured exact state.
    Mms(Flags),
    /// Report space dimensions as JSON.
    Dofs(Flags),
}

#[derive(Args)]
struct Flags {
    /// Trace space variant: edg, iedg or hdg [default: edg]
    #[arg(long)]
    method: Option<String>,
    /// Polynomial degree k [default: 1]
    #[arg(long)]
    degree: Option<usize>,
    /// Refinement level of the uniform unit-square mesh (solve, dofs)
    #[arg(long)]
    level: Option<u32>,
    /// Inclusive level range a..b (convergence [default: 1..4], mms [default: 2..5])
    #[arg(long, value_name = "A..B")]
    levels: Option<String>,
    /// Level of the reference solution (convergence) [default: 7]
    #[arg(long)]
    reference_level: Option<u32>,
    /// Catalog problem: example1-high, example1-low, example2, zero, mms-trig
    #[arg(long)]
    problem: Option<String>,
    /// Sample y and z on an M x M grid (solve)
    #[arg(long, value_name = "M")]
    sample_grid: Option<usize>,
    /// Output file; for solve, a directory receiving solution.json and sample CSVs
    #[arg(long)]
    output: Option<PathBuf>,
    /// JSON config file with the same keys in snake_case; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Flags {
    fn into_config(self) -> CliResult<RunConfig> {
        let base = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        Ok(base.overlay(RunConfig {
            command: None,
            method: self.method,
            degree: self.degree,
            level: self.level,
            levels: self.levels,
            reference_level: self.reference_level,
            problem: self.problem,
            sample_grid: self.sample_grid,
            output: self.output,
        }))
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let (cmd, flags) = match cli.command {
        Cmd::Solve(f) => (Command::Solve, f),
        Cmd::Convergence(f) => (Command::Convergence, f),
        Cmd::Mms(f) => (Command::Mms, f),
        Cmd::Dofs(f) => (Command::Dofs, f),
    };
    let run = Run::validate(cmd, flags.into_config()?, threads_from_env()?)?;
    let out = execute(&run)?;
    write_files(&out)?;
    match &out.stdout {
        Some(text) => {
            print!("{text}");
            eprintln!("{}", out.summary);
        }
        None => println!("{}", out.summary),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let msg = e.render().to_string();
            let err = CliError::config(
                msg.lines()
                    .next()
                    .unwrap_or_default()
                    .trim_start_matches("error: "),
            );
            eprintln!("{}", err.record());
            return ExitCode::from(err.kind.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.kind.exit_code() as u8)
        }
    }
}
