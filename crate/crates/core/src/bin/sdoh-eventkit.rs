use std::process::ExitCode;

use sdoh_eventkit::cli::{self, CliError, ENV_LOG};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(ENV_LOG, "warn")).init();
    let args = match cli::parse(std::env::args_os()) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let stage = format!("{:?}", args.command).split(['(', ' ']).next().unwrap_or_default().to_lowercase();
    match cli::run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\n{}", cli::usage());
            ExitCode::from(2)
        }
        Err(e) => {
            let code = e.exit_code();
            let e = anyhow::Error::new(e).context(format!("{stage} failed"));
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
