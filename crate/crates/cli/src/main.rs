use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use iotbridge_cli::commands::{self, CliError};
use iotbridge_cli::service::{self, AppState};
use iotbridge_cli::settings::Common;

#[derive(Debug, Parser)]
#[command(name = "iotbridge", version, about = "Generate, test and verify IoT platform integrations")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the device and platform knowledge stores.
    Ingest,
    /// Ingest, then generate the integration.
    Generate,
    /// Generate, then test and repair until green.
    Autodebug,
    /// Auto-debug, then verify each function with yes/no feedback.
    Hil {
        /// File with one yes/no per line; prompts on the terminal otherwise.
        #[arg(long)]
        responder: Option<PathBuf>,
        /// Session checkpoint; resumed when it exists.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Repeat every fixture task and report pass@1, coverage and feedback.
    Bench {
        #[arg(long, default_value_t = 5)]
        runs: u32,
    },
    /// Run the HTTP session service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

fn serve(common: Common, addr: SocketAddr) -> Result<(), CliError> {
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::new(e.to_string()))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        println!("listening on http://{}", listener.local_addr()?);
        service::serve(listener, AppState::new(common)).await
    })
    .map_err(|e| CliError::new(e.to_string()))
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("IOTBRIDGE_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let c = &cli.common;
    let result = match &cli.command {
        Command::Ingest => commands::ingest(c),
        Command::Generate => commands::generate(c),
        Command::Autodebug => commands::autodebug(c),
        Command::Hil { responder, checkpoint } => commands::hil(c, responder.as_deref(), checkpoint.as_deref()),
        Command::Bench { runs } => commands::bench(c, *runs),
        Command::Serve { addr } => serve(cli.common.clone(), *addr),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.code.clamp(1, 255) as u8)
        }
    }
}
