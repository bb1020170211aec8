//! Command-line front end for `music-vpr`: run a pipeline from a JSON config,
//! generate synthetic benchmarks, evaluate prediction logs and convert score
//! matrices between CSV and VPRD.
//!
//! Exit codes: 0 success, 1 internal error, 2 configuration error, 3 data
//! error.

pub mod config;
pub mod error;
pub mod run;
pub mod synth;

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use music_vpr::eval::{evaluate, EvalReport, GroundTruth, PredictionLog};
use music_vpr::providers::vprd::{load_vprd, read_score_csv, save_vprd, write_score_csv};
use music_vpr::providers::MatrixRole;

pub use config::{Pipeline, RunConfig, TechniqueSpec};
pub use error::CliError;
pub use run::{cmd_run, RunOptions, RunSummary};
pub use synth::{cmd_synth, SynthSpec};

#[derive(Debug, Parser)]
#[command(
    name = "music-vpr",
    version,
    about = "Multi-technique visual place recognition"
)]
pub struct Cli {
    /// Suppress the summary line.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a pipeline described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory, overriding the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate score files, ground truth and a run config from a profile.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a prediction log against a ground-truth file.
    Eval {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert a score matrix between CSV and VPRD. A `.csv` input becomes
    /// VPRD, anything else is read as VPRD and written as CSV.
    Convert {
        input: PathBuf,
        output: PathBuf,
        /// Role recorded when writing VPRD.
        #[arg(long, value_enum, default_value = "scores")]
        role: RoleArg,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RoleArg {
    Scores,
    Descriptors,
}

pub fn cmd_eval(log: &Path, gt: &Path) -> Result<EvalReport, CliError> {
    let gt: GroundTruth = config::read_json(gt).map_err(|e| match e {
        CliError::Config { field, message } if field == "config" => CliError::config("gt", message),
        other => other,
    })?;
    let f = File::open(log).map_err(|e| CliError::data(format!("{}: {e}", log.display())))?;
    let log = PredictionLog::read_csv(BufReader::new(f))?;
    Ok(evaluate(&log, &gt)?)
}

fn is_csv(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn cmd_convert(input: &Path, output: &Path, role: RoleArg) -> Result<(), CliError> {
    let data_err = |e: &dyn std::fmt::Display| CliError::data(format!("{}: {e}", input.display()));
    let out_err =
        |e: &dyn std::fmt::Display| CliError::internal(format!("{}: {e}", output.display()));
    if is_csv(input) {
        let f = File::open(input).map_err(|e| data_err(&e))?;
        let m = read_score_csv(BufReader::new(f)).map_err(|e| data_err(&e))?;
        let role = match role {
            RoleArg::Scores => MatrixRole::Scores,
            RoleArg::Descriptors => MatrixRole::Descriptors,
        };
        save_vprd(output, &m, role).map_err(|e| out_err(&e))
    } else {
        let (m, _) = load_vprd(input).map_err(|e| data_err(&e))?;
        let f = File::create(output).map_err(|e| out_err(&e))?;
        write_score_csv(std::io::BufWriter::new(f), &m).map_err(|e| out_err(&e))
    }
}

/// Executes a parsed command line, printing to standard output.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, out, seed } => {
            let s = cmd_run(&RunOptions { config, out, seed })?;
            if !cli.quiet {
                let r = &s.report;
                println!(
                    "{}: {} queries, accuracy {:.4}, auc {:.4}, ptr {:.4}, reselections {} -> {}",
                    s.pipeline.name(),
                    r.queries,
                    r.accuracy,
                    r.auc,
                    r.ptr,
                    r.reselection_count,
                    s.output_dir.display()
                );
            }
        }
        Command::Synth { config, out, seed } => {
            let s = cmd_synth(&config, &out, seed)?;
            if !cli.quiet {
                println!(
                    "wrote {} score files; run with --config {}",
                    s.files.len(),
                    s.config.display()
                );
            }
        }
        Command::Eval { log, gt, out } => {
            let report = cmd_eval(&log, &gt)?;
            match out {
                Some(path) => synth::write_json(&path, &report)?,
                None => println!(
                    "{}",
                    serde_json::to_string_pretty(&report).map_err(CliError::internal)?
                ),
            }
        }
        Command::Convert {
            input,
            output,
            role,
        } => cmd_convert(&input, &output, role)?,
    }
    Ok(())
}
