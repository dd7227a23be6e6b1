//! `brushgan` command line: prepare, train, generate, evaluate, ablate.

use std::process::ExitCode;

use brushgan_cli::{commands, AblateArgs, EvaluateArgs, GenerateArgs, PrepareArgs, TrainArgs};
use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "brushgan", version, about = "Multi-style calligraphy glyph generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split the corpus by character, cache normalized images and print statistics.
    Prepare(PrepareArgs),
    /// Train a model on the training side of a split.
    Train(TrainArgs),
    /// Generate glyph images for the given characters in one style.
    Generate(GenerateArgs),
    /// Score a checkpoint on the test side of a split.
    Evaluate(EvaluateArgs),
    /// Train and score each configuration of an ablation matrix.
    Ablate(AblateArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prepare(a) => commands::prepare(&a),
        Command::Train(a) => commands::train(&a),
        Command::Generate(a) => commands::generate(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Ablate(a) => commands::ablate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
