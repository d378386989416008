use std::process::ExitCode;

fn main() -> ExitCode {
    mfoc::configure_threads();
    let code = mfoc::cli::run_cli(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr());
    ExitCode::from(code as u8)
}
