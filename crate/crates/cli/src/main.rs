mod args;
mod commands;
mod config;
mod manifest;

use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use crate::args::{Cli, Command};
use crate::config::ConfigIssues;

const USAGE_EXIT: u8 = 2;
const RUNTIME_EXIT: u8 = 1;

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            anyhow::bail!("--workers must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let workers = cli.workers;
    match &cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Stats(a) => commands::stats(a),
        Command::Split(a) => commands::split(a),
        Command::Train(a) => commands::train(a, workers),
        Command::Eval(a) => commands::eval(a),
        Command::Hpo(a) => commands::hpo(a, workers),
        Command::RulesLearn(a) => commands::rules_learn(a, workers),
        Command::RulesEval(a) => commands::rules_eval(a),
        Command::Export(a) => commands::export(a),
        Command::TransferLp(a) => commands::transfer_lp(a, workers),
        Command::Classify(a) => commands::classify(a),
    }
}

/// Machine-readable record of a failure, printed as one JSON line on stderr.
fn error_record(err: &anyhow::Error) -> serde_json::Value {
    let chain: Vec<String> = err.chain().map(|e| e.to_string()).collect();
    if let Some(issues) = err.chain().find_map(|e| e.downcast_ref::<ConfigIssues>()) {
        return json!({ "error": { "kind": "config", "message": chain.join(": "), "issues": issues.0 } });
    }
    let kind = err
        .chain()
        .find_map(|e| e.downcast_ref::<biokge_core::Error>())
        .map(|e| e.kind())
        .or_else(|| {
            err.chain()
                .find_map(|e| e.downcast_ref::<std::io::Error>())
                .map(|_| "io")
        })
        .unwrap_or("runtime");
    json!({ "error": { "kind": kind, "message": chain.join(": ") } })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let message = e.kind().to_string();
            eprintln!("{}", json!({ "error": { "kind": "usage", "message": message } }));
            return ExitCode::from(USAGE_EXIT);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", error_record(&err));
            ExitCode::from(RUNTIME_EXIT)
        }
    }
}
