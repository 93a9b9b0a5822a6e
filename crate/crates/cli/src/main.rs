//! `comet`: train, evaluate and explain concept-learner prototypical
//! networks on tabular few-shot tasks.

mod commands;
mod config;
mod error;
mod report;
mod workspace;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{explain, gen_synth, rank, select, sweep, train_eval};

#[derive(Debug, Parser)]
#[command(name = "comet", version, about = "Concept-learner prototypical networks for few-shot tabular classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a planted-block synthetic dataset with its concepts and splits
    GenSynth(gen_synth::Args),
    /// Train a model episodically and write the best-validation checkpoint
    Train(train_eval::TrainArgs),
    /// Evaluate a checkpoint over random episodes
    Eval(train_eval::EvalArgs),
    /// Report local and global concept importance
    Explain(explain::Args),
    /// Rank a class's examples by distance to one concept prototype
    Rank(rank::Args),
    /// Train and evaluate with increasing numbers of concepts
    SweepConcepts(sweep::Args),
    /// Choose random feature subsets by validation importance
    SelectConcepts(select::Args),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenSynth(a) => gen_synth::run(a),
        Command::Train(a) => train_eval::train(a),
        Command::Eval(a) => train_eval::eval(a),
        Command::Explain(a) => explain::run(a),
        Command::Rank(a) => rank::run(a),
        Command::SweepConcepts(a) => sweep::run(a),
        Command::SelectConcepts(a) => select::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
