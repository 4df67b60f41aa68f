//! HTTP prognosis service: patient attributes in, survival curve with
//! optional bootstrap bands and 6/12/60-month probabilities out.
//!
//! Routes:
//!
//! - `GET /healthz`: `{"status": "ok", "models_loaded": n}`
//! - `GET /api/v1/models`: one [`ModelDescriptor`] per loaded model
//! - `POST /api/v1/predict`: [`PredictRequest`] to [`Prognosis`]
//! - anything else is served from the static directory, when configured
//!
//! Models are immutable and shared; the address cache is the only mutable
//! state and sits behind a lock.

mod api;
mod config;
mod registry;

use std::path::PathBuf;
use std::sync::Arc;

use dtsurv::encode::{CachedAddressResolver, GeoChain, GeoResolver, HttpGeocoder, StaticFipsTable};

pub use api::{router, run_prediction, ApiError, FieldIssue, PredictRequest};
pub use config::{ServiceConfig, DEFAULT_MAX_RESAMPLES};
pub use dtsurv::prognosis::Prognosis;
pub use registry::{FieldDescriptor, FieldKind, ModelDescriptor, Registry, MODEL_EXTENSION};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("configuration: {0}")]
    Config(String),

    #[error("cannot load model {}: {source}", path.display())]
    Model {
        path: PathBuf,
        #[source]
        source: dtsurv::Error,
    },

    #[error(transparent)]
    Core(#[from] dtsurv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ServiceError {
    fn with_path(self, p: &std::path::Path) -> Self {
        match self {
            ServiceError::Core(e) => ServiceError::Core(e.with_path(p)),
            e => e,
        }
    }
}

/// Everything a request handler needs. Cheap to clone.
#[derive(Clone)]
pub struct AppState {
    pub registry: Arc<Registry>,
    pub geo: Arc<dyn GeoResolver>,
    pub max_resamples: usize,
}

impl AppState {
    pub fn new(registry: Registry, geo: Arc<dyn GeoResolver>) -> Self {
        AppState {
            registry: Arc::new(registry),
            geo,
            max_resamples: DEFAULT_MAX_RESAMPLES,
        }
    }

    /// Registry from the model directory; location lookups through the
    /// bundled county table, then the address cache, then the remote
    /// geocoder when `GEO_API_KEY` is set.
    pub fn from_config(c: &ServiceConfig) -> Result<Self, ServiceError> {
        let registry = Registry::load_dir(&c.model_dir)?;
        let backend = HttpGeocoder::from_env()
            .ok()
            .map(|g| Box::new(g) as Box<dyn dtsurv::encode::AddressBackend>);
        let mut cache = CachedAddressResolver::new(backend);
        if let Some(p) = &c.geo_cache {
            cache = cache.with_cache_file(p)?;
        }
        let geo = GeoChain::new().push(StaticFipsTable::bundled()).push(cache);
        Ok(AppState {
            registry: Arc::new(registry),
            geo: Arc::new(geo),
            max_resamples: c.max_resamples,
        })
    }
}

/// Serve on an already bound listener until `shutdown` resolves.
pub async fn serve_on(
    listener: tokio::net::TcpListener,
    state: AppState,
    static_dir: Option<PathBuf>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state, static_dir))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Load models, bind and serve until Ctrl-C. Fails before binding when any
/// model file is unreadable.
pub async fn serve(c: ServiceConfig) -> Result<(), ServiceError> {
    let state = AppState::from_config(&c)?;
    let listener = tokio::net::TcpListener::bind(c.bind).await?;
    tracing::info!(
        addr = %listener.local_addr()?,
        models = state.registry.len(),
        "serving"
    );
    serve_on(listener, state, c.static_dir.clone(), async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(())
}
