//! Process-level wiring for the `watn-server` binary.

use std::io;
use std::sync::Arc;

use thiserror::Error;
use watn_core::{SnapshotError, Store};

use crate::config::{ApiConfig, ConfigError};
use crate::{http, Api};

#[derive(Debug, Error)]
pub enum BootError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("bind: {0}")]
    Bind(#[from] io::Error),
}

/// Restores the store from the configured snapshot if one exists, otherwise
/// starts empty.
pub fn build_api(config: &ApiConfig) -> Result<Api, BootError> {
    let clock = config.clock();
    let store = match &config.snapshot_path {
        Some(path) if path.exists() => match config.test_seed {
            Some(seed) => {
                Store::restore_seeded(&std::fs::read(path)?, config.history_cap, clock, seed)?
            }
            None => Store::restore(path, config.history_cap, clock)?,
        },
        _ => match config.test_seed {
            Some(seed) => Store::seeded(config.history_cap, clock, seed),
            None => Store::new(config.history_cap, clock),
        },
    };
    let key = config.resolve_key()?;
    Ok(Api::new(Arc::new(store), key, config.invite_ttl_ms))
}

/// Serves until ctrl-c, snapshotting on the configured interval and once more
/// on the way out.
pub async fn serve(config: ApiConfig) -> Result<(), BootError> {
    let api = Arc::new(build_api(&config)?);
    let listener = http::bind(config.bind)?;
    eprintln!("watn-server listening on http://{}", listener.local_addr()?);

    if let Some(path) = config.snapshot_path.clone() {
        let store = Arc::clone(api.store());
        let every = config.snapshot_interval;
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(every);
            tick.tick().await;
            loop {
                tick.tick().await;
                let store = Arc::clone(&store);
                let path = path.clone();
                let res = tokio::task::spawn_blocking(move || store.snapshot(&path)).await;
                if let Ok(Err(e)) = res {
                    eprintln!("snapshot failed: {e}");
                }
            }
        });
    }

    axum::serve(listener, http::router(Arc::clone(&api)))
        .with_graceful_shutdown(shutdown_signal())
        .await?;

    if let Some(path) = &config.snapshot_path {
        api.store().snapshot(path)?;
        eprintln!("final snapshot written to {}", path.display());
    }
    Ok(())
}

/// Ctrl-C, or SIGTERM on unix.
async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = tokio::signal::ctrl_c() => {}
                    _ = term.recv() => {}
                }
            }
            Err(_) => {
                let _ = tokio::signal::ctrl_c().await;
            }
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}
