mod commands;

use std::io::IsTerminal;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use commands::{EvalArgs, GenArgs, ServeArgs, SimulateArgs, TrainArgs};

/// Conversational product search: generate a corpus, train, evaluate
/// question strategies, replay a conversation, or serve live sessions.
#[derive(Debug, Parser)]
#[command(name = "convps", version)]
struct Cli {
    /// Seed for every random choice of the subcommand.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic corpus.
    GenCorpus(GenArgs),
    /// Train a model checkpoint on a corpus.
    Train(TrainArgs),
    /// Sweep question strategies and write a metrics CSV.
    Eval(EvalArgs),
    /// Replay one conversation against a simulated user.
    Simulate(SimulateArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

/// Exit status for bad input, as opposed to a failure while running.
const USAGE: u8 = 2;

/// Errors caused by what the caller asked for rather than by the run.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return USAGE;
        }
        if let Some(e) = cause.downcast_ref::<convps::Error>() {
            return core_exit_code(e);
        }
        if let Some(e) = cause.downcast_ref::<convps_service::ServiceError>() {
            return match e {
                convps_service::ServiceError::Core(c) => core_exit_code(c),
                convps_service::ServiceError::Bind { .. } => USAGE,
                convps_service::ServiceError::Serve(_) => 1,
            };
        }
    }
    1
}

fn core_exit_code(e: &convps::Error) -> u8 {
    use convps::Error as E;
    match e {
        E::Solve(_)
        | E::PoolExhausted
        | E::OutOfOrderFeedback { .. }
        | E::NoPendingQuestion
        | E::IncompleteRanking { .. } => 1,
        _ => USAGE,
    }
}

/// The error and its causes, skipping causes already quoted by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut msg = err.to_string();
    for cause in err.chain().skip(1) {
        let c = cause.to_string();
        if !msg.contains(&c) {
            msg.push_str(": ");
            msg.push_str(&c);
        }
    }
    msg
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(level));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    let result = match cli.command {
        Command::GenCorpus(a) => commands::gen_corpus(a, cli.seed),
        Command::Train(a) => commands::train(a, cli.seed),
        Command::Eval(a) => commands::eval(a, cli.seed),
        Command::Simulate(a) => commands::simulate(a, cli.seed),
        Command::Serve(a) => commands::serve(a, cli.seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
