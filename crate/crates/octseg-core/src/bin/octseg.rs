use std::process::ExitCode;

fn main() -> ExitCode {
    octseg_core::cli::run()
}
