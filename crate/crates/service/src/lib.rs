//! HTTP access to one analysed dataset at a time.
//!
//! The service holds an immutable [`Snapshot`] behind an `Arc`. Each
//! request clones the `Arc` once and answers entirely from it, so a
//! concurrent [`Service::reload`] can never produce a response that mixes
//! two versions. Every body is `{"version": n, "data": ...}` and the same
//! `n` is sent in the `x-snapshot-version` header.

mod error;
mod routes;

use std::sync::{Arc, Mutex, RwLock};

use nbs_core::scoring::ScoreMatrix;
use nbs_core::{Analysis, AnalysisConfig, AnalysisError, DataSource, Dataset, DatasetError};
use thiserror::Error;

pub use error::ApiError;
pub use routes::router;

pub const VERSION_HEADER: &str = "x-snapshot-version";

#[derive(Debug, Error)]
pub enum LoadError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

/// Everything served for one version of the data.
#[derive(Debug)]
pub struct Snapshot {
    pub version: u64,
    pub source: String,
    pub dataset: Dataset,
    pub analysis: Analysis,
}

impl Snapshot {
    /// Loads and analyses `source`; nothing is published yet.
    pub fn build(version: u64, source: &dyn DataSource, config: &AnalysisConfig) -> Result<Self, LoadError> {
        let dataset = Dataset::load(source)?;
        let analysis = Analysis::run(&dataset, config)?;
        Ok(Self {
            version,
            source: source.describe(),
            dataset,
            analysis,
        })
    }

    /// Like [`Snapshot::build`] but with scores taken from an exported matrix.
    pub fn with_matrix(version: u64, source: &dyn DataSource, matrix_tsv: &str, config: &AnalysisConfig) -> Result<Self, LoadError> {
        let dataset = Dataset::load(source)?;
        let matrix = ScoreMatrix::from_tsv("matrix", matrix_tsv, &dataset.catalogue).map_err(DatasetError::from)?;
        let analysis = Analysis::from_matrix(&dataset, matrix, config)?;
        Ok(Self {
            version,
            source: source.describe(),
            dataset,
            analysis,
        })
    }
}

#[derive(Debug)]
struct Inner {
    current: RwLock<Arc<Snapshot>>,
    config: AnalysisConfig,
    /// Serializes reloads so versions are handed out in order.
    reload: Mutex<()>,
}

/// Cheap to clone; all clones share one current snapshot.
#[derive(Debug, Clone)]
pub struct Service {
    inner: Arc<Inner>,
}

impl Service {
    pub fn new(source: &dyn DataSource, config: AnalysisConfig) -> Result<Self, LoadError> {
        Ok(Self::from_snapshot(Snapshot::build(1, source, &config)?, config))
    }

    pub fn from_snapshot(snapshot: Snapshot, config: AnalysisConfig) -> Self {
        Self {
            inner: Arc::new(Inner {
                current: RwLock::new(Arc::new(snapshot)),
                config,
                reload: Mutex::new(()),
            }),
        }
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        Arc::clone(&self.inner.current.read().unwrap_or_else(|e| e.into_inner()))
    }

    pub fn version(&self) -> u64 {
        self.snapshot().version
    }

    /// Loads `source` and swaps it in. On failure the current snapshot keeps
    /// serving and its version is unchanged.
    pub fn reload(&self, source: &dyn DataSource) -> Result<u64, LoadError> {
        let _guard = self.inner.reload.lock().unwrap_or_else(|e| e.into_inner());
        let next = self.version() + 1;
        let snapshot = match Snapshot::build(next, source, &self.inner.config) {
            Ok(s) => s,
            Err(e) => {
                tracing::warn!(source = %source.describe(), error = %e, "reload rejected");
                return Err(e);
            }
        };
        *self.inner.current.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(snapshot);
        tracing::info!(version = next, source = %source.describe(), "snapshot swapped");
        Ok(next)
    }

    pub fn router(&self) -> axum::Router {
        router(self.clone())
    }
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    service: Service,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, service.router()).with_graceful_shutdown(shutdown).await
}
