use std::process::ExitCode;

fn main() -> ExitCode {
    aero_acm::cli::main_with_args(std::env::args_os())
}
