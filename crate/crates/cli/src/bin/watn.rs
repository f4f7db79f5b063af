use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    let clock = match watn_cli::cli::clock_from_env() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("watn: {e}");
            return ExitCode::from(watn_cli::cli::EXIT_USAGE as u8);
        }
    };
    let code = watn_cli::cli::run_with(
        std::env::args_os(),
        clock,
        &mut io::stdout(),
        &mut io::stderr(),
    );
    ExitCode::from(code as u8)
}
