//! HTTP API over run directories: run lifecycle, live state, approval gates
//! and the scoring registry.

pub mod api;
pub mod error;
pub mod runs;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use objevo_core::ScorerRegistry;
use serde::Deserialize;

pub use api::router;
pub use error::{ApiError, ApiResult};
pub use runs::{RunManager, RunSummary};

pub const DEFAULT_ADDR: &str = "127.0.0.1:8750";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub addr: String,
    /// Bearer token required on every request; `None` disables auth.
    pub token: Option<String>,
    pub runs_dir: PathBuf,
    /// Upper bound on how long an event request waits for new events.
    pub long_poll_secs: u64,
    pub max_page: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            addr: DEFAULT_ADDR.into(),
            token: None,
            runs_dir: PathBuf::from("runs"),
            long_poll_secs: 30,
            max_page: 500,
        }
    }
}

impl ServiceConfig {
    /// Reads a TOML file (if given), then applies `OBJEVO_ADDR`,
    /// `OBJEVO_TOKEN` and `OBJEVO_RUNS_DIR`.
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
                let mut cfg: ServiceConfig = toml::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))?;
                if cfg.runs_dir.is_relative() {
                    cfg.runs_dir = p.parent().unwrap_or(Path::new(".")).join(&cfg.runs_dir);
                }
                cfg
            }
            None => ServiceConfig::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok());
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(v) = get("OBJEVO_ADDR") {
            self.addr = v;
        }
        if let Some(v) = get("OBJEVO_TOKEN") {
            self.token = if v.is_empty() { None } else { Some(v) };
        }
        if let Some(v) = get("OBJEVO_RUNS_DIR") {
            self.runs_dir = PathBuf::from(v);
        }
    }
}

pub struct AppState {
    pub runs: RunManager,
    pub token: Option<String>,
    pub long_poll: Duration,
    pub max_page: usize,
}

pub type SharedState = Arc<AppState>;

impl AppState {
    /// Relative file parameters in submitted configs resolve against the
    /// current directory.
    pub fn new(cfg: &ServiceConfig, registry: ScorerRegistry) -> std::io::Result<SharedState> {
        std::fs::create_dir_all(&cfg.runs_dir)?;
        let base = std::env::current_dir()?;
        Ok(Arc::new(Self {
            runs: RunManager::new(cfg.runs_dir.clone(), base, registry),
            token: cfg.token.clone(),
            long_poll: Duration::from_secs(cfg.long_poll_secs),
            max_page: cfg.max_page,
        }))
    }
}

/// Binds `cfg.addr` and serves until the process is stopped.
pub async fn serve(cfg: ServiceConfig, registry: ScorerRegistry) -> std::io::Result<()> {
    let state = AppState::new(&cfg, registry)?;
    serve_until(state, &cfg.addr, std::future::pending()).await
}

/// Serves `state` on `addr` until `shutdown` completes.
pub async fn serve_until(
    state: SharedState,
    addr: &str,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}
