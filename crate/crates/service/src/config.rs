use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use crate::ServiceError;

/// Server settings. File directives: `bind`, `model_dir`, `static_dir`,
/// `geo_cache`, `max_resamples`. Environment variables `DTSURV_BIND`,
/// `DTSURV_MODEL_DIR`, `DTSURV_STATIC_DIR` and `DTSURV_GEO_CACHE` override the file.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub model_dir: PathBuf,
    pub static_dir: Option<PathBuf>,
    /// Address cache (`address,lat,lng,elevation`), read at startup and appended to.
    pub geo_cache: Option<PathBuf>,
    /// Requests asking for more bootstrap resamples get this many.
    pub max_resamples: usize,
}

pub const DEFAULT_MAX_RESAMPLES: usize = 10_000;

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            model_dir: PathBuf::from("models"),
            static_dir: None,
            geo_cache: None,
            max_resamples: DEFAULT_MAX_RESAMPLES,
        }
    }
}

impl ServiceConfig {
    pub fn parse(text: &str) -> Result<Self, ServiceError> {
        let mut c = ServiceConfig::default();
        for d in dtsurv::config::parse(text)? {
            match d.key() {
                "bind" => c.bind = d.single()?,
                "model_dir" => c.model_dir = d.single::<String>()?.into(),
                "static_dir" => c.static_dir = Some(d.single::<String>()?.into()),
                "geo_cache" => c.geo_cache = Some(d.single::<String>()?.into()),
                "max_resamples" => c.max_resamples = d.single()?,
                other => return Err(d.error(format!("unknown service setting `{other}`")).into()),
            }
        }
        Ok(c)
    }

    /// Defaults, then the file (if any), then the environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ServiceError> {
        let mut c = match path {
            Some(p) => Self::parse(&std::fs::read_to_string(p).map_err(dtsurv::Error::from)?)
                .map_err(|e| e.with_path(p))?,
            None => ServiceConfig::default(),
        };
        c.apply_env(|k| std::env::var(k).ok())?;
        Ok(c)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ServiceError> {
        if let Some(v) = get("DTSURV_BIND") {
            self.bind = v
                .parse()
                .map_err(|_| ServiceError::Config(format!("DTSURV_BIND: `{v}` is not a socket address")))?;
        }
        if let Some(v) = get("DTSURV_MODEL_DIR") {
            self.model_dir = v.into();
        }
        if let Some(v) = get("DTSURV_STATIC_DIR") {
            self.static_dir = Some(v.into());
        }
        if let Some(v) = get("DTSURV_GEO_CACHE") {
            self.geo_cache = Some(v.into());
        }
        Ok(())
    }
}
