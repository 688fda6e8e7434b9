mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use env_logger::Env;

use args::{Cli, Command};

/// Exit status for an error: 2 for bad input, 3 when no route exists, 4 when
/// the solver ran out of time, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    use tourkit::Error as E;
    match err.downcast_ref::<E>() {
        Some(E::Infeasible) => 3,
        Some(E::Timeout { .. }) => 4,
        Some(
            E::Parse { .. }
            | E::DuplicateKey { .. }
            | E::EmptyTable
            | E::UnknownPoi(_)
            | E::Validation(_)
            | E::Io { .. }
            | E::Bundle(_),
        ) => 2,
        _ => 1,
    }
}

/// The error and its causes, skipping causes already quoted by an outer
/// message.
fn describe(err: &anyhow::Error) -> String {
    let mut msg = err.to_string();
    for cause in err.chain().skip(1) {
        let c = cause.to_string();
        if !msg.contains(&c) {
            msg = format!("{msg}: {c}");
        }
    }
    msg
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(Env::new().filter_or("TOURKIT_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Train(a) => commands::train(a),
        Command::Recommend(a) => commands::recommend_route(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Tune(a) => commands::tune(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
