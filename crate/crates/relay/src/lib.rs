//! The cloud relay: crime log, privilege-aware REST/SSE API, proximity
//! broadcasts and remote inference for cameras that stream raw frames.

pub mod api;
pub mod config;
pub mod infer;
pub mod store;

use std::net::SocketAddr;
use std::sync::Arc;

use lens_core::pipeline::{FrameProcessor, FrameScorer, Models};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;
use tower_http::services::ServeDir;

pub use config::{RelayConfig, Role, TokenEntry};
pub use infer::ScorerFactory;
pub use store::{CrimeLogEntry, CrimeNotice, Store};

#[derive(Debug, thiserror::Error)]
pub enum RelayError {
    #[error("config: {0}")]
    Config(String),
    #[error("storage: {0}")]
    Storage(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] lens_core::Error),
}

/// A running relay. Dropping the handle leaves it running; call
/// [`RelayHandle::shutdown`] to stop it.
pub struct RelayHandle {
    pub http_addr: SocketAddr,
    pub infer_addr: Option<SocketAddr>,
    pub store: Store,
    tasks: Vec<JoinHandle<()>>,
}

impl RelayHandle {
    pub fn url(&self) -> String {
        format!("http://{}", self.http_addr)
    }

    pub fn shutdown(self) {
        for t in &self.tasks {
            t.abort();
        }
    }

    /// Resolves when the HTTP server task ends.
    pub async fn wait(mut self) {
        if !self.tasks.is_empty() {
            let _ = self.tasks.remove(0).await;
        }
    }
}

/// Scorer factory running the full pipeline on `models`.
pub fn model_factory(models: Arc<Models>, reduced: bool) -> ScorerFactory {
    Arc::new(move |_camera: &str| {
        Ok(Box::new(FrameProcessor::new(models.clone(), reduced)) as Box<dyn FrameScorer>)
    })
}

/// Binds the listeners and starts serving. Remote inference runs when
/// `infer_bind` is set and either `factory` is given or the config names a
/// model directory.
pub async fn start(
    config: RelayConfig,
    factory: Option<ScorerFactory>,
) -> Result<RelayHandle, RelayError> {
    config.validate()?;
    let store = Store::open(&config.storage, config.threshold, &config.tokens)?;
    let state = api::AppState {
        store: store.clone(),
        clock_skew_ms: config.clock_skew_ms,
    };
    let mut app = api::router(state);
    if let Some(dir) = &config.static_dir {
        app = app.nest_service(
            "/app",
            ServeDir::new(dir).append_index_html_on_directories(true),
        );
    }
    let listener = TcpListener::bind(config.bind).await?;
    let http_addr = listener.local_addr()?;
    let mut tasks = vec![tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            tracing::error!("http server stopped: {e}");
        }
    })];
    let factory = match (factory, &config.models) {
        (Some(f), _) => Some(f),
        (None, Some(dir)) => Some(model_factory(Arc::new(Models::load(dir)?), config.reduced)),
        (None, None) => None,
    };
    let mut infer_addr = None;
    if let (Some(bind), Some(factory)) = (config.infer_bind, factory) {
        let l = TcpListener::bind(bind).await?;
        infer_addr = Some(l.local_addr()?);
        tasks.push(tokio::spawn(infer::serve(l, factory)));
    }
    tracing::info!("relay listening on {http_addr}, inference on {infer_addr:?}");
    Ok(RelayHandle {
        http_addr,
        infer_addr,
        store,
        tasks,
    })
}
