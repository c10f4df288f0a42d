use std::process::ExitCode;

fn main() -> ExitCode {
    phongru::cli::main_with_args(std::env::args_os())
}
