use std::process::ExitCode;

fn main() -> ExitCode {
    spinlearn::cli::main_entry()
}
