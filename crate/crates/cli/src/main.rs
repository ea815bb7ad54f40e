//! `mrccg`: train, evaluate and benchmark minimax risk classifiers.
//!
//! Exit codes: 0 on success, 1 when the solver fails numerically, 2 for
//! usage, input and I/O errors.

mod args;
mod bench;
mod cv;
mod features;
mod predict;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use args::{BenchArgs, CvArgs, FeaturesArgs, PredictArgs, TrainArgs};

#[derive(Parser, Debug)]
#[command(
    name = "mrccg",
    version,
    about = "Minimax risk classifiers trained by constraint generation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model; writes model.json and trace.csv.
    Train(TrainArgs),
    /// Predict with a saved model.
    Predict(PredictArgs),
    /// Stratified k-fold cross-validation.
    Cv(CvArgs),
    /// Time constraint generation against the all-features LP.
    Bench(BenchArgs),
    /// Export the raw features used by a model.
    Features(FeaturesArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train::run(&a),
        Command::Predict(a) => predict::run(&a),
        Command::Cv(a) => cv::run(&a),
        Command::Bench(a) => bench::run(&a),
        Command::Features(a) => features::run(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let numerical = e.chain().any(|c| {
        matches!(
            c.downcast_ref::<mrccg::Error>(),
            Some(mrccg::Error::Solver(_))
        )
    });
    if numerical {
        1
    } else {
        2
    }
}
