use std::process::ExitCode;

fn main() -> ExitCode {
    stylemt_cli::main_with(std::env::args_os())
}
