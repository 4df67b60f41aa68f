//! Location enrichment: state-county codes or free-text addresses become a
//! (latitude, longitude, elevation) triple.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Latitude and longitude in degrees, elevation in feet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTriple {
    pub lat: f64,
    pub lng: f64,
    pub elevation: f64,
}

impl GeoTriple {
    pub fn new(lat: f64, lng: f64, elevation: f64) -> Result<Self, GeoError> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lng) || !elevation.is_finite() {
            return Err(GeoError::InvalidTriple { lat, lng, elevation });
        }
        Ok(GeoTriple { lat, lng, elevation })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeoError {
    #[error("unknown state-county code {state:02}{county:03}")]
    UnknownFips { state: u32, county: u32 },
    #[error("malformed state-county code `{0}`")]
    MalformedFips(String),
    #[error("geocoding service unreachable: {0}")]
    NetworkFailure(String),
    #[error("geocoding quota exceeded")]
    QuotaExceeded,
    #[error("address `{0}` does not resolve to a single location")]
    AmbiguousAddress(String),
    #[error("coordinates out of range: lat {lat}, lng {lng}, elevation {elevation}")]
    InvalidTriple { lat: f64, lng: f64, elevation: f64 },
    #[error("resolver cannot handle {0} queries")]
    Unsupported(&'static str),
}

impl GeoError {
    /// Failures of the outside service, as opposed to bad input.
    pub fn is_upstream(&self) -> bool {
        matches!(self, GeoError::NetworkFailure(_) | GeoError::QuotaExceeded)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum GeoQuery {
    Fips { state: u32, county: u32 },
    Address(String),
}

impl GeoQuery {
    /// Parse a five-digit state-county recode such as `35001`.
    pub fn fips_code(code: &str) -> Result<Self, GeoError> {
        let code = code.trim();
        if code.len() != 5 || !code.bytes().all(|b| b.is_ascii_digit()) {
            return Err(GeoError::MalformedFips(code.to_string()));
        }
        Ok(GeoQuery::Fips {
            state: code[..2].parse().expect("digits"),
            county: code[2..].parse().expect("digits"),
        })
    }
}

/// Lowercase, `+` as space, whitespace collapsed.
pub fn normalize_address(address: &str) -> String {
    address
        .replace('+', " ")
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

pub trait GeoResolver: Send + Sync {
    fn resolve(&self, query: &GeoQuery) -> Result<GeoTriple, GeoError>;
}

/// Lookup table keyed by state and county codes, loaded from
/// `state_fips,county_fips,address,lat,lng,elevation` CSV.
#[derive(Debug, Clone, Default)]
pub struct StaticFipsTable {
    by_code: HashMap<(u32, u32), GeoTriple>,
    by_address: HashMap<String, GeoTriple>,
}

#[derive(Deserialize)]
struct FipsRow {
    state_fips: u32,
    county_fips: u32,
    address: String,
    lat: f64,
    lng: f64,
    elevation: f64,
}

const BUNDLED_FIPS: &str = include_str!("../../data/fips_geo.csv");

impl StaticFipsTable {
    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut table = StaticFipsTable::default();
        let mut rdr = csv::Reader::from_reader(reader);
        for row in rdr.deserialize() {
            let row: FipsRow = row?;
            let triple = GeoTriple::new(row.lat, row.lng, row.elevation)?;
            table.by_code.insert((row.state_fips, row.county_fips), triple);
            table.by_address.insert(normalize_address(&row.address), triple);
        }
        Ok(table)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path).map_err(Error::at(path))?).map_err(|e| e.with_path(path))
    }

    /// The table shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_reader(BUNDLED_FIPS.as_bytes()).expect("bundled table parses")
    }

    pub fn resolve_fips(&self, state: u32, county: u32) -> Result<GeoTriple, GeoError> {
        self.by_code
            .get(&(state, county))
            .copied()
            .ok_or(GeoError::UnknownFips { state, county })
    }

    pub fn len(&self) -> usize {
        self.by_code.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_code.is_empty()
    }
}

impl GeoResolver for StaticFipsTable {
    fn resolve(&self, query: &GeoQuery) -> Result<GeoTriple, GeoError> {
        match query {
            GeoQuery::Fips { state, county } => self.resolve_fips(*state, *county),
            GeoQuery::Address(a) => self
                .by_address
                .get(&normalize_address(a))
                .copied()
                .ok_or(GeoError::Unsupported("address")),
        }
    }
}

/// Remote geocoding backend for free-text addresses.
pub trait AddressBackend: Send + Sync {
    fn lookup(&self, normalized_address: &str) -> Result<GeoTriple, GeoError>;
}

const FEET_PER_METER: f64 = 3.280_839_895;

/// Geocoding and elevation over HTTP, using the JSON layout of the common
/// maps web APIs (`/geocode/json` then `/elevation/json`).
pub struct HttpGeocoder {
    base_url: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl HttpGeocoder {
    pub const DEFAULT_BASE: &'static str = "https://maps.googleapis.com/maps/api";

    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Result<Self, GeoError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(20))
            .build()
            .map_err(|e| GeoError::NetworkFailure(e.to_string()))?;
        Ok(HttpGeocoder {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            client,
        })
    }

    /// Credential from `GEO_API_KEY`; base URL from `GEO_API_BASE` if set.
    pub fn from_env() -> Result<Self, GeoError> {
        let key = std::env::var("GEO_API_KEY")
            .map_err(|_| GeoError::NetworkFailure("GEO_API_KEY is not set".into()))?;
        let base = std::env::var("GEO_API_BASE").unwrap_or_else(|_| Self::DEFAULT_BASE.to_string());
        Self::new(base, key)
    }

    fn get_json(&self, path: &str, query: &[(&str, &str)]) -> Result<serde_json::Value, GeoError> {
        let resp = self
            .client
            .get(format!("{}/{}", self.base_url, path))
            .query(query)
            .query(&[("key", self.api_key.as_str())])
            .send()
            .map_err(|e| GeoError::NetworkFailure(e.to_string()))?;
        if resp.status().as_u16() == 429 {
            return Err(GeoError::QuotaExceeded);
        }
        if !resp.status().is_success() {
            return Err(GeoError::NetworkFailure(format!("HTTP {}", resp.status())));
        }
        let body: serde_json::Value = resp
            .json()
            .map_err(|e| GeoError::NetworkFailure(format!("bad response body: {e}")))?;
        match body["status"].as_str() {
            Some("OK") => Ok(body),
            Some("OVER_QUERY_LIMIT" | "OVER_DAILY_LIMIT") => Err(GeoError::QuotaExceeded),
            Some("ZERO_RESULTS") => Err(GeoError::AmbiguousAddress(String::new())),
            Some(other) => Err(GeoError::NetworkFailure(format!("service status {other}"))),
            None => Err(GeoError::NetworkFailure("response without status".into())),
        }
    }
}

impl AddressBackend for HttpGeocoder {
    fn lookup(&self, address: &str) -> Result<GeoTriple, GeoError> {
        let ambiguous = || GeoError::AmbiguousAddress(address.to_string());
        let geo = self
            .get_json("geocode/json", &[("address", address)])
            .map_err(|e| match e {
                GeoError::AmbiguousAddress(_) => ambiguous(),
                e => e,
            })?;
        let results = geo["results"].as_array().ok_or_else(ambiguous)?;
        let [only] = results.as_slice() else {
            return Err(ambiguous());
        };
        let loc = &only["geometry"]["location"];
        let (Some(lat), Some(lng)) = (loc["lat"].as_f64(), loc["lng"].as_f64()) else {
            return Err(GeoError::NetworkFailure("geocode result lacks a location".into()));
        };
        let elev = self.get_json("elevation/json", &[("locations", &format!("{lat},{lng}"))])?;
        let meters = elev["results"][0]["elevation"]
            .as_f64()
            .ok_or_else(|| GeoError::NetworkFailure("elevation result lacks a value".into()))?;
        GeoTriple::new(lat, lng, meters * FEET_PER_METER)
    }
}

/// Address resolver that consults a cache before its backend. Backend calls
/// are serialized behind the cache lock; new results are appended to the
/// optional cache file (`address,lat,lng,elevation`).
pub struct CachedAddressResolver {
    backend: Option<Box<dyn AddressBackend>>,
    cache: Mutex<HashMap<String, GeoTriple>>,
    cache_file: Option<PathBuf>,
    backend_calls: AtomicUsize,
}

#[derive(Serialize, Deserialize)]
struct CacheRow {
    address: String,
    lat: f64,
    lng: f64,
    elevation: f64,
}

impl CachedAddressResolver {
    pub fn new(backend: Option<Box<dyn AddressBackend>>) -> Self {
        CachedAddressResolver {
            backend,
            cache: Mutex::new(HashMap::new()),
            cache_file: None,
            backend_calls: AtomicUsize::new(0),
        }
    }

    /// Load existing entries from `path` (if it exists) and persist new ones there.
    pub fn with_cache_file(mut self, path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        if path.exists() {
            let mut rdr = csv::Reader::from_path(&path).map_err(|e| Error::from(e).with_path(&path))?;
            let cache = self.cache.get_mut().expect("unpoisoned");
            for row in rdr.deserialize() {
                let row: CacheRow = row.map_err(|e| Error::from(e).with_path(&path))?;
                cache.insert(
                    normalize_address(&row.address),
                    GeoTriple::new(row.lat, row.lng, row.elevation)?,
                );
            }
        }
        self.cache_file = Some(path);
        Ok(self)
    }

    pub fn insert(&self, address: &str, triple: GeoTriple) {
        self.cache
            .lock()
            .expect("geo cache lock")
            .insert(normalize_address(address), triple);
    }

    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::Relaxed)
    }

    pub fn resolve_address(&self, address: &str) -> Result<GeoTriple, GeoError> {
        let key = normalize_address(address);
        let mut cache = self.cache.lock().expect("geo cache lock");
        if let Some(t) = cache.get(&key) {
            return Ok(*t);
        }
        let backend = self
            .backend
            .as_ref()
            .ok_or_else(|| GeoError::AmbiguousAddress(address.to_string()))?;
        self.backend_calls.fetch_add(1, Ordering::Relaxed);
        let triple = backend.lookup(&key)?;
        cache.insert(key.clone(), triple);
        if let Some(path) = &self.cache_file {
            if let Err(e) = append_cache_row(path, &key, triple) {
                log::warn!("could not persist geo cache entry to {}: {e}", path.display());
            }
        }
        Ok(triple)
    }
}

fn append_cache_row(path: &Path, address: &str, t: GeoTriple) -> std::io::Result<()> {
    let new = !path.exists() || std::fs::metadata(path)?.len() == 0;
    let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(new).from_writer(file);
    w.serialize(CacheRow {
        address: address.to_string(),
        lat: t.lat,
        lng: t.lng,
        elevation: t.elevation,
    })?;
    w.flush()?;
    w.into_inner().map_err(|e| e.into_error())?.flush()
}

impl GeoResolver for CachedAddressResolver {
    fn resolve(&self, query: &GeoQuery) -> Result<GeoTriple, GeoError> {
        match query {
            GeoQuery::Address(a) => self.resolve_address(a),
            GeoQuery::Fips { .. } => Err(GeoError::Unsupported("state-county")),
        }
    }
}

/// In-memory resolver returning preset triples; unknown queries fail.
#[derive(Debug, Clone, Default)]
pub struct FixedResolver {
    entries: HashMap<GeoQuery, GeoTriple>,
    fallback: Option<GeoTriple>,
}

impl FixedResolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Resolver answering every query with `triple`.
    pub fn always(triple: GeoTriple) -> Self {
        FixedResolver {
            entries: HashMap::new(),
            fallback: Some(triple),
        }
    }

    pub fn with(mut self, query: GeoQuery, triple: GeoTriple) -> Self {
        let query = match query {
            GeoQuery::Address(a) => GeoQuery::Address(normalize_address(&a)),
            q => q,
        };
        self.entries.insert(query, triple);
        self
    }
}

impl GeoResolver for FixedResolver {
    fn resolve(&self, query: &GeoQuery) -> Result<GeoTriple, GeoError> {
        let key = match query {
            GeoQuery::Address(a) => GeoQuery::Address(normalize_address(a)),
            q => q.clone(),
        };
        self.entries
            .get(&key)
            .copied()
            .or(self.fallback)
            .ok_or_else(|| match query {
                GeoQuery::Address(a) => GeoError::AmbiguousAddress(a.clone()),
                GeoQuery::Fips { state, county } => GeoError::UnknownFips {
                    state: *state,
                    county: *county,
                },
            })
    }
}

/// Tries each resolver in order, skipping those that do not support the query.
#[derive(Default)]
pub struct GeoChain {
    resolvers: Vec<Box<dyn GeoResolver>>,
}

impl GeoChain {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(mut self, r: impl GeoResolver + 'static) -> Self {
        self.resolvers.push(Box::new(r));
        self
    }
}

impl GeoResolver for GeoChain {
    fn resolve(&self, query: &GeoQuery) -> Result<GeoTriple, GeoError> {
        let mut last = GeoError::Unsupported("any");
        for r in &self.resolvers {
            match r.resolve(query) {
                Err(e @ GeoError::Unsupported(_)) => last = e,
                Err(e @ GeoError::UnknownFips { .. }) => last = e,
                other => return other,
            }
        }
        Err(match (last, query) {
            (GeoError::Unsupported(_), GeoQuery::Address(a)) => GeoError::AmbiguousAddress(a.clone()),
            (e, _) => e,
        })
    }
}

/// Resolver that always fails; for pipelines without location columns.
pub struct NoGeo;

impl GeoResolver for NoGeo {
    fn resolve(&self, _: &GeoQuery) -> Result<GeoTriple, GeoError> {
        Err(GeoError::Unsupported("any"))
    }
}

impl<T: GeoResolver + ?Sized> GeoResolver for &T {
    fn resolve(&self, query: &GeoQuery) -> Result<GeoTriple, GeoError> {
        (**self).resolve(query)
    }
}

impl<T: GeoResolver + ?Sized> GeoResolver for std::sync::Arc<T> {
    fn resolve(&self, query: &GeoQuery) -> Result<GeoTriple, GeoError> {
        (**self).resolve(query)
    }
}
