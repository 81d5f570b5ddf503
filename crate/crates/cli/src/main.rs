#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! `cuffbench`: offline analysis, simulation, histology and live sessions from the shell.
//!
//! Exit status is 0 on success, 2 for usage errors, 3 for bad or unavailable
//! inputs and 4 for internal failures (including unwritable outputs).

mod analyze;
mod args;
mod failure;
mod histo;
mod model;
mod serve;
mod simulate;
mod svg;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::failure::Failure;

#[derive(Debug, Parser)]
#[command(name = "cuffbench", version, about = "Multicontact cuff stimulation bench")]
struct Cli {
    /// More log output (repeat for debug and trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Recruitment curves, polar map and selectivity rankings from recordings.
    Analyze(analyze::AnalyzeArgs),
    /// Synthetic recordings and ground-truth recruitment from a nerve model.
    Simulate(simulate::SimulateArgs),
    /// Rank (configuration, amplitude) cells of a nerve model by selectivity.
    Select(simulate::SelectArgs),
    /// Serve a live session over TCP until terminated.
    Serve(serve::ServeArgs),
    /// Fascicle correspondences and motor-fiber statistics for histology sections.
    Histo(histo::HistoArgs),
    /// Build a nerve model from a histology section.
    Model(model::ModelArgs),
    /// Export the current patterns of all seven configurations.
    Patterns(model::PatternsArgs),
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Analyze(a) => analyze::run(&a),
        Command::Simulate(a) => simulate::run(&a),
        Command::Select(a) => simulate::select(&a),
        Command::Serve(a) => serve::run(&a),
        Command::Histo(a) => histo::run(&a),
        Command::Model(a) => model::run(&a),
        Command::Patterns(a) => model::patterns(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(failure::USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
