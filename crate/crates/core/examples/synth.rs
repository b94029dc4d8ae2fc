//! Writes a synthetic dataset and its manifest.
//!
//! ```text
//! cargo run --release -p attnup --example synth -- sisr DIR [N_TRAIN N_EVAL SIZE SEED]
//! cargo run --release -p attnup --example synth -- rgbd DIR [N_TRAIN N_EVAL SIZE SEED]
//! ```

use std::path::Path;
use std::process::ExitCode;

use attnup::data_io::{write_rgbd_dataset, write_sisr_dataset};

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let usage = "usage: synth (sisr|rgbd) DIR [N_TRAIN N_EVAL SIZE SEED]";
    if args.len() < 2 {
        eprintln!("{usage}");
        return ExitCode::from(2);
    }
    let num = |i: usize, default: usize| -> Result<usize, String> {
        args.get(i).map_or(Ok(default), |s| {
            s.parse().map_err(|_| format!("not a number: {s}"))
        })
    };
    let parsed = (|| Ok::<_, String>((num(2, 16)?, num(3, 4)?, num(4, 96)?, num(5, 0)? as u64)))();
    let Ok((n_train, n_eval, size, seed)) = parsed.map_err(|e| eprintln!("{e}\n{usage}")) else {
        return ExitCode::from(2);
    };
    let dir = Path::new(&args[1]);
    let written = match args[0].as_str() {
        "sisr" => write_sisr_dataset(dir, n_train, n_eval, size, seed),
        "rgbd" => write_rgbd_dataset(dir, n_train, n_eval, size, seed),
        other => {
            eprintln!("unknown kind {other}\n{usage}");
            return ExitCode::from(2);
        }
    };
    match written {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
