use std::process::ExitCode;

use clap::Parser;
use reverso_server::cli::{run_offline, serve, Cli, Command};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve {
            port,
            config,
            data_dir,
            mock,
        } => tokio::runtime::Runtime::new()
            .expect("tokio runtime")
            .block_on(serve(port, config, data_dir, mock)),
        other => run_offline(other, &mut std::io::stdout()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
