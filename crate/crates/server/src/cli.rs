use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use reverso_core::analytics::{analyze_dir, AnalyticsError};
use reverso_core::clock::{Clock, SystemClock};
use reverso_core::doc::{ingest_markdown, ingest_structured_json, DocError, SourceDocument};
use reverso_core::draft::{warm_start, DraftError, WorkspaceId};
use reverso_core::gateway::{CompletionProvider, ConfigError, Gateway, GatewayConfig};
use reverso_core::store::{FileStore, SessionRecorder, StoreError};

use crate::config::{Config, ConfigFileError};
use crate::state::AppState;

#[derive(Debug, Parser)]
#[command(name = "reverso", version, about = "Draft a blog post from a research paper")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Markdown,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory holding one subdirectory per workspace.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Use the offline mock provider.
        #[arg(long)]
        mock: bool,
    },
    /// Parse a paper and print its sections and paragraphs as JSON.
    Ingest {
        file: PathBuf,
        /// Defaults to json for `.json` files and markdown otherwise.
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Build the outline and the four-section initial draft.
    WarmStart {
        file: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mock: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Compute editing metrics for a workspace directory.
    Analyze {
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Doc(#[from] DocError),
    #[error(transparent)]
    Draft(#[from] DraftError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    ConfigFile(#[from] ConfigFileError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_document(path: &Path, format: Option<Format>) -> Result<SourceDocument, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let format = format.unwrap_or(match path.extension().and_then(|e| e.to_str()) {
        Some("json") => Format::Json,
        _ => Format::Markdown,
    });
    Ok(match format {
        Format::Json => ingest_structured_json(&text)?,
        Format::Markdown => ingest_markdown(&text)?,
    })
}

fn load_config(path: Option<&Path>) -> Result<Config, CliError> {
    Ok(match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    })
}

/// Builds the provider from configuration plus `REVERSO_*` environment
/// overrides. The API key is read from the environment only.
pub fn build_provider(mut config: GatewayConfig, mock: bool) -> Result<Arc<dyn CompletionProvider>, CliError> {
    let env = |k: &str| std::env::var(k).ok();
    config.apply_env(env);
    if mock {
        config.mock = true;
        config.base_delay_ms = 0;
    }
    Ok(Arc::new(Gateway::from_config(&config, env)?))
}

/// Runs every subcommand except `serve`, writing human output to `out`.
pub fn run_offline(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    let stdout = PathBuf::from("<stdout>");
    match command {
        Command::Serve { .. } => unreachable!("serve runs on the async runtime"),
        Command::Ingest { file, format } => {
            let doc = read_document(&file, format)?;
            let json = serde_json::to_string_pretty(&doc).expect("document serializes");
            writeln!(out, "{json}").map_err(io_err(&stdout))?;
        }
        Command::WarmStart {
            file,
            out: dir,
            mock,
            config,
            format,
        } => {
            let doc = read_document(&file, format)?;
            let config = load_config(config.as_deref())?;
            let provider = build_provider(config.provider, mock)?;
            let id = WorkspaceId(format!("ws-{}", doc.doc_id.0.trim_start_matches("doc-")));
            let now = SystemClock.now();
            let mut ws = warm_start(&doc, provider.as_ref(), now, id)?;
            std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            let draft = dir.join("draft.md");
            std::fs::write(&draft, ws.post.to_markdown()).map_err(io_err(&draft))?;
            let store = FileStore::new(&dir);
            store.save(&ws)?;
            let mut recorder = SessionRecorder::open(store.clone(), &ws, now)?;
            recorder.record(&mut ws, now)?;
            for s in &ws.post.sections {
                if let Some(e) = &s.warm_start_error {
                    writeln!(out, "warning: section {:?} left empty: {e}", s.header).map_err(io_err(&stdout))?;
                }
            }
            writeln!(out, "draft: {}", draft.display()).map_err(io_err(&stdout))?;
            writeln!(out, "workspace: {}", store.dir(&ws.workspace_id)?.display()).map_err(io_err(&stdout))?;
        }
        Command::Analyze { dir, out: path } => {
            let report = analyze_dir(&dir)?;
            std::fs::write(&path, report.to_csv()?).map_err(io_err(&path))?;
            writeln!(
                out,
                "{} snapshots, {} writing actions, {:.3} active minutes, length delta {:+} chars -> {}",
                report.series.points.len(),
                report.writing_actions,
                report.active_minutes,
                report.final_length_delta,
                path.display()
            )
            .map_err(io_err(&stdout))?;
        }
    }
    Ok(())
}

pub async fn serve(
    port: Option<u16>,
    config: Option<PathBuf>,
    data_dir: Option<PathBuf>,
    mock: bool,
) -> Result<(), CliError> {
    let config = load_config(config.as_deref())?;
    let provider = build_provider(config.provider, mock)?;
    let data_dir = data_dir.unwrap_or(config.server.data_dir);
    let state = Arc::new(AppState::new(
        FileStore::new(&data_dir),
        provider,
        Arc::new(SystemClock),
    ));

    let ticker = state.clone();
    let every = Duration::from_secs(config.server.snapshot_tick_secs.max(1));
    tokio::spawn(async move {
        let mut interval = tokio::time::interval(every);
        loop {
            interval.tick().await;
            let state = ticker.clone();
            let _ = tokio::task::spawn_blocking(move || state.tick_all()).await;
        }
    });

    let addr = SocketAddr::from(([0, 0, 0, 0], port.unwrap_or(config.server.port)));
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(io_err(Path::new("listener")))?;
    log::info!("listening on {addr}, data in {}", data_dir.display());
    axum::serve(listener, crate::api::router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(io_err(Path::new("server")))
}
