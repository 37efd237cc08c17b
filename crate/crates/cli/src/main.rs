use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let outcome = kgctx_cli::run(std::env::args_os());
    println!("{}", outcome.summary);
    ExitCode::from(outcome.code)
}
