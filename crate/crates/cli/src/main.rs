use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(dae_cli::run_cli(std::env::args().collect()))
}
