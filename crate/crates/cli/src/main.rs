use std::process::ExitCode;

fn main() -> ExitCode {
    let seed = std::env::var(canodual_cli::SEED_ENV).ok();
    let code = canodual_cli::run(
        std::env::args_os(),
        seed.as_deref(),
        &mut std::io::stdout().lock(),
        &mut std::io::stderr().lock(),
    );
    ExitCode::from(code as u8)
}
