mod args;
mod commands;
mod config;

use std::io::Write as _;
use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;
use form_core::FormError;
use serde_json::{json, Value};

use args::{Cli, Command};
use config::RunConfig;

fn run(cli: &Cli) -> Result<Value> {
    let cfg = RunConfig::from_args(&cli.common)?;
    let echo = cfg.write_echo()?;
    let (name, result) = match &cli.command {
        Command::Prepare => ("prepare", commands::prepare(&cfg)?),
        Command::Encode => ("encode", commands::encode(&cfg)?),
        Command::Train => ("train", commands::train(&cfg)?),
        Command::Evaluate { checkpoint_dir } => (
            "evaluate",
            commands::evaluate_checkpoints(&cfg, checkpoint_dir.as_deref())?,
        ),
        Command::Ablate => ("ablate", commands::ablate(&cfg)?),
        Command::SweepK { k } => ("sweep-k", commands::sweep(&cfg, k)?),
        Command::Explain { checkpoint, threads } => {
            let mut stdout = std::io::stdout().lock();
            for line in commands::explain(&cfg, checkpoint, threads)? {
                match writeln!(stdout, "{}", serde_json::to_string(&line)?) {
                    Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => break,
                    other => other?,
                }
            }
            return Ok(Value::Null);
        }
        Command::Synth(a) => ("synth", commands::synth(&cfg, a)?),
    };
    Ok(json!({ "command": name, "config": echo, "result": result }))
}

fn error_line(err: &anyhow::Error) -> String {
    let kind = err
        .chain()
        .find_map(|e| e.downcast_ref::<FormError>())
        .map_or("error", FormError::kind);
    // error sources are often already part of their parent's message
    let mut message = err.to_string();
    for cause in err.chain().skip(1) {
        let text = cause.to_string();
        if !message.contains(&text) {
            message = format!("{message}: {text}");
        }
    }
    json!({ "error": { "kind": kind, "message": message } }).to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Value::Null) => ExitCode::SUCCESS,
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", error_line(&err));
            ExitCode::FAILURE
        }
    }
}
