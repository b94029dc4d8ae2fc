//! `attnup`: train, evaluate, benchmark and inspect attention-based
//! upsampling models.

mod args;
mod commands;
mod config_file;
mod resolved;

use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use args::{Cli, Cmd};
use resolved::Resolved;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let argv = match config_file::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let command = Cli::command();
    let matches = match command.clone().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => e.exit(),
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let sub_cmd = command
        .find_subcommand(name)
        .expect("matched subcommand exists");
    let mut res = Resolved::from_matches(sub_cmd, sub);

    let outcome = match &cli.cmd {
        Cmd::TrainSisr(a) => commands::train_sisr(a, &mut res).map(|_| true),
        Cmd::EvalSisr(a) => commands::eval_sisr(a, &mut res).map(|_| true),
        Cmd::TrainJoint(a) => commands::train_joint(a, &mut res).map(|_| true),
        Cmd::EvalJoint(a) => commands::eval_joint(a, &mut res).map(|_| true),
        Cmd::Upsample(a) => commands::upsample(a, &mut res).map(|_| true),
        Cmd::Bench(a) => commands::bench(a, &mut res).map(|_| true),
        Cmd::Gradcheck(a) => commands::gradcheck(a, &mut res),
        Cmd::Params(a) => commands::params(a, &mut res).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
