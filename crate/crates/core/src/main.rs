use std::process::ExitCode;

fn main() -> ExitCode {
    coolplant::cli::main_with_args(std::env::args_os())
}
