//! HTTP facade over the co-DM session manager.

pub mod config;
pub mod error;
pub mod openapi;
pub mod routes;
pub mod state;

use std::sync::Arc;
use std::time::Duration;

pub use config::{ApiConfig, ConfigError};
pub use error::ApiError;
pub use routes::router;
pub use state::{AppState, SharedState, StartupError};

/// Binds the configured address and serves until Ctrl-C.
pub async fn serve(cfg: ApiConfig) -> Result<(), StartupError> {
    let addr = cfg
        .bind_addr()
        .map_err(|e| ConfigError::Invalid(format!("bind: {e}")))?;
    let state: SharedState = Arc::new(AppState::from_config(&cfg)?);

    let sweeper = state.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            match sweeper.session.close_idle_threads(chrono::Utc::now()) {
                Ok(0) => {}
                Ok(n) => tracing::info!(closed = n, "closed idle threads"),
                Err(e) => tracing::warn!(error = %e, "idle sweep failed"),
            }
        }
    });

    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| StartupError::Io {
            path: addr.to_string().into(),
            source,
        })?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|source| StartupError::Io {
            path: addr.to_string().into(),
            source,
        })
}
