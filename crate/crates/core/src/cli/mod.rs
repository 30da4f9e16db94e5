//! Command-line front end.
//!
//! ```text
//! detflow generate|solve|bench|classify|check-grad --config <path> [--seed N] [--out <dir>]
//! ```
//!
//! Exit codes: 0 success, 1 numerical failure, 2 usage, config or I/O
//! error, 3 iteration budget exhausted.

pub mod commands;
pub mod config;
pub mod csvio;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::solvers::Termination;
pub use commands::{build_instance, cmd_bench, cmd_check_grad, cmd_classify, cmd_generate, cmd_solve, Instance};
pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MAX_ITERS: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "detflow", version, about = "Principal components by determinant maximization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a random instance and write it to disk.
    Generate(CommonArgs),
    /// Run one solver and write its trace.
    Solve(CommonArgs),
    /// Run every solver on every configured instance.
    Bench(CommonArgs),
    /// Classify a loading matrix as a stationary point.
    Classify(CommonArgs),
    /// Compare analytic gradients with finite differences.
    CheckGrad(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the instance seed (generate, solve), the start seeds (bench)
    /// or the sampling seed (check-grad).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `output.dir`; relative to the working directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Exit code for an error: input problems are 2, everything else numerical.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_)
        | Error::Parse { .. }
        | Error::InvalidConfig(_)
        | Error::InvalidModelParams(_)
        | Error::ShapeMismatch { .. }
        | Error::EmptyMatrix
        | Error::NonFinite { .. }
        | Error::NotMeanCentered { .. } => EXIT_USAGE,
        _ => EXIT_NUMERICAL,
    }
}

pub fn termination_code(t: Termination) -> i32 {
    match t {
        Termination::GradBelowEpsilon => EXIT_OK,
        Termination::NumericalFailure => EXIT_NUMERICAL,
        Termination::MaxIters => EXIT_MAX_ITERS,
    }
}

fn load(args: &CommonArgs, command: &Command) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(out) = &args.out {
        cfg.output.dir = std::path::absolute(out)?;
    }
    if let Some(seed) = args.seed {
        match command {
            Command::Generate(_) | Command::Solve(_) => cfg.matrix.seed = seed,
            Command::Bench(_) => cfg.run.seeds = vec![seed],
            Command::CheckGrad(_) => cfg.check_grad.seed = seed,
            Command::Classify(_) => {}
        }
    }
    Ok(cfg)
}

fn dispatch(command: &Command, out: &mut dyn Write) -> Result<i32, Error> {
    let (Command::Generate(args)
    | Command::Solve(args)
    | Command::Bench(args)
    | Command::Classify(args)
    | Command::CheckGrad(args)) = command;
    let cfg = load(args, command)?;
    Ok(match command {
        Command::Generate(_) => cmd_generate(&cfg, out).map(|_| EXIT_OK)?,
        Command::Solve(_) => termination_code(cmd_solve(&cfg, out)?.result.termination),
        Command::Bench(_) => cmd_bench(&cfg, out).map(|_| EXIT_OK)?,
        Command::Classify(_) => cmd_classify(&cfg, out).map(|_| EXIT_OK)?,
        Command::CheckGrad(_) => {
            if cmd_check_grad(&cfg, out)?.iter().all(|c| c.passed) {
                EXIT_OK
            } else {
                EXIT_NUMERICAL
            }
        }
    })
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match dispatch(&cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
