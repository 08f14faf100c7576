mod args;
mod commands;

use std::process::ExitCode;

use charctx::Error;
use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};

const USAGE: u8 = 1;
const DATA: u8 = 2;
const INTERNAL: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => USAGE,
        Error::Shape { .. } | Error::NonFinite { .. } => INTERNAL,
        _ => DATA,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(USAGE),
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    log::debug!("threads={} deterministic={}", cli.threads, cli.deterministic);

    let result = match &cli.command {
        Command::Train(a) => commands::train_cmd(a),
        Command::Encode(a) => commands::encode_cmd(a).and_then(|bad| {
            if bad > 0 {
                Err(Error::Data {
                    line: 0,
                    reason: format!("{bad} malformed input lines"),
                })
            } else {
                Ok(())
            }
        }),
        Command::Nn(a) => commands::nn_cmd(a),
        Command::RankContexts(a) => commands::rank_cmd(a),
        Command::Chunk(a) => commands::chunk_cmd(a),
        Command::Typo(a) => commands::typo_cmd(a),
        Command::Inspect(a) => commands::inspect_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
