use std::process::ExitCode;

fn main() -> ExitCode {
    let mut stdout = std::io::stdout().lock();
    ExitCode::from(coverify_cli::main_with_args(std::env::args_os(), &mut stdout))
}
