//! Command-line front end: dataset generation, Λ estimation, training,
//! evaluation and figure-data export.

mod args;
mod artifacts;
mod commands;
mod error;

use clap::Parser;

pub use args::{config_args, expand_config, Cli, Command, List, LossChoice, ModelChoice};
pub use artifacts::{encode_pgm, sha256_hex, write_atomic, Manifest};
pub use commands::{
    evaluate_codes, load_data, load_model, median_codes, parse_lambda_file, run, tile_frames,
    traversal_codes, traversal_frames,
};
pub use error::{CliError, CliResult};

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run_cli(argv: Vec<String>) -> u8 {
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.code();
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(summary) => {
            print!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}
