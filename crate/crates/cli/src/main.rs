mod archive;
mod commands;

use clap::{Parser, Subcommand};

/// Prior-weighted ensemble stacking: score acquisition, training,
/// prediction, evaluation sweeps, and synthetic simulations.
#[derive(Parser)]
#[command(name = "statsformer", version, about)]
struct Cli {
    /// Cap all worker pools at this many threads
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Query an LLM endpoint for feature-importance scores
    Scores(commands::ScoresArgs),
    /// Train a model end to end and write a model archive
    Fit(commands::FitArgs),
    /// Predict with a saved model archive
    Predict(commands::PredictArgs),
    /// Paired training-ratio sweep on a dataset
    Evaluate(commands::EvaluateArgs),
    /// Synthetic oracle/adversarial simulations
    Simulate(commands::SimulateArgs),
}

fn exit_code_for(err: &anyhow::Error) -> i32 {
    if let Some(e) = err.downcast_ref::<statsformer::Error>() {
        match e {
            statsformer::Error::Usage(_) => 1,
            statsformer::Error::Data(_) => 2,
            statsformer::Error::Numeric(_) => 3,
            statsformer::Error::Network(_) => 4,
            statsformer::Error::Io(_) => 2,
        }
    } else {
        2
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // keep clap's rendered help/version on stdout with success
            if e.use_stderr() {
                eprintln!("{e}");
                std::process::exit(1);
            }
            print!("{e}");
            std::process::exit(0);
        }
    };
    if let Some(workers) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build_global()
        {
            eprintln!("warning: could not configure worker pool: {e}");
        }
    }
    let outcome = match cli.command {
        Command::Scores(args) => commands::cmd_scores(args, cli.workers),
        Command::Fit(args) => commands::cmd_fit(args),
        Command::Predict(args) => commands::cmd_predict(args),
        Command::Evaluate(args) => commands::cmd_evaluate(args),
        Command::Simulate(args) => commands::cmd_simulate(args),
    };
    if let Err(err) = outcome {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code_for(&err));
    }
}
