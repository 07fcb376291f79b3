use std::process::ExitCode;

fn main() -> ExitCode {
    affectbn::cli::run(std::env::args_os())
}
