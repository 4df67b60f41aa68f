use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Request, State};
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dtsurv::encode::{encode_record_fields, GeoError};
use dtsurv::evaluate::DEFAULT_HORIZONS;
use dtsurv::prognosis::{prognose, Prognosis, PrognosisOptions};
use dtsurv::survival::BandOptions;
use dtsurv::HazardModel;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tower_http::services::ServeDir;

use crate::registry::ModelDescriptor;
use crate::AppState;

/// Body of `POST /api/v1/predict`. Attribute values may be JSON strings or
/// numbers; they are read as the raw CSV cells of the training table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub model_id: String,
    pub attributes: BTreeMap<String, Value>,
    #[serde(default)]
    pub with_bands: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_resamples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldIssue {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ErrorBody {
    error: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    fields: Vec<FieldIssue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
    pub fields: Vec<FieldIssue>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into(), fields: Vec::new() }
    }

    fn invalid(fields: Vec<FieldIssue>) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, message: "invalid request".into(), fields }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody { error: self.message, fields: self.fields };
        (self.status, Json(body)).into_response()
    }
}

fn issue(field: impl Into<String>, message: impl Into<String>) -> FieldIssue {
    FieldIssue { field: field.into(), message: message.into() }
}

/// Model id of the request, for the request log.
#[derive(Clone)]
struct LoggedModel(String);

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/healthz", get(healthz))
        .route("/api/v1/models", get(models))
        .route("/api/v1/predict", post(predict))
        .with_state(state);
    let app = match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    app.layer(middleware::from_fn(log_request))
}

async fn log_request(req: Request, next: Next) -> Response {
    let start = Instant::now();
    let path = req.uri().path().to_string();
    let res = next.run(req).await;
    let model_id = res.extensions().get::<LoggedModel>().map_or("-", |m| m.0.as_str());
    tracing::info!(
        path = %path,
        model_id = %model_id,
        status = res.status().as_u16(),
        latency_ms = start.elapsed().as_secs_f64() * 1e3,
        "request"
    );
    res
}

async fn healthz(State(s): State<AppState>) -> Json<Value> {
    Json(serde_json::json!({ "status": "ok", "models_loaded": s.registry.len() }))
}

async fn models(State(s): State<AppState>) -> Json<Vec<ModelDescriptor>> {
    Json(s.registry.descriptors())
}

async fn predict(State(s): State<AppState>, body: Bytes) -> Response {
    let req = match parse_request(&body) {
        Ok(r) => r,
        Err(e) => return e.into_response(),
    };
    let model_id = req.model_id.clone();
    let Some(model) = s.registry.get(&req.model_id).cloned() else {
        let mut res = ApiError::new(StatusCode::NOT_FOUND, format!("unknown model `{}`", req.model_id)).into_response();
        res.extensions_mut().insert(LoggedModel(model_id));
        return res;
    };
    let max = s.max_resamples;
    let geo = s.geo.clone();
    // encoding may call a blocking geocoder and bands are CPU-bound
    let result = tokio::task::spawn_blocking(move || run_prediction(&model, &req, geo.as_ref(), max)).await;
    let mut res = match result {
        Ok(Ok(p)) => Json(p).into_response(),
        Ok(Err(e)) => e.into_response(),
        Err(e) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("prediction task failed: {e}")).into_response(),
    };
    res.extensions_mut().insert(LoggedModel(model_id));
    res
}

/// Shape checks on the JSON body, reporting every bad field at once.
pub(crate) fn parse_request(body: &[u8]) -> Result<PredictRequest, ApiError> {
    let v: Value = serde_json::from_slice(body)
        .map_err(|e| ApiError::invalid(vec![issue("body", format!("not valid JSON: {e}"))]))?;
    let Value::Object(obj) = v else {
        return Err(ApiError::invalid(vec![issue("body", "expected a JSON object")]));
    };
    let mut issues = Vec::new();
    let model_id = match obj.get("model_id") {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(_) => {
            issues.push(issue("model_id", "must be a non-empty string"));
            String::new()
        }
        None => {
            issues.push(issue("model_id", "is required"));
            String::new()
        }
    };
    let mut attributes = BTreeMap::new();
    match obj.get("attributes") {
        Some(Value::Object(a)) => {
            for (k, v) in a {
                match v {
                    Value::String(_) | Value::Number(_) | Value::Bool(_) => {
                        attributes.insert(k.clone(), v.clone());
                    }
                    _ => issues.push(issue(format!("attributes.{k}"), "must be a string, number or boolean")),
                }
            }
        }
        Some(_) => issues.push(issue("attributes", "must be an object")),
        None => issues.push(issue("attributes", "is required")),
    }
    let with_bands = match obj.get("with_bands") {
        None | Some(Value::Null) => false,
        Some(Value::Bool(b)) => *b,
        Some(_) => {
            issues.push(issue("with_bands", "must be a boolean"));
            false
        }
    };
    let n_resamples = match obj.get("n_resamples") {
        None | Some(Value::Null) => None,
        Some(v) => match v.as_u64() {
            Some(n) if n >= 2 => Some(n as usize),
            _ => {
                issues.push(issue("n_resamples", "must be an integer of at least 2"));
                None
            }
        },
    };
    let seed = match obj.get("seed") {
        None | Some(Value::Null) => None,
        Some(v) => match v.as_u64() {
            Some(n) => Some(n),
            None => {
                issues.push(issue("seed", "must be a non-negative integer"));
                None
            }
        },
    };
    for k in obj.keys() {
        if !["model_id", "attributes", "with_bands", "n_resamples", "seed"].contains(&k.as_str()) {
            issues.push(issue(k.clone(), "unknown field"));
        }
    }
    if !issues.is_empty() {
        return Err(ApiError::invalid(issues));
    }
    Ok(PredictRequest { model_id, attributes, with_bands, n_resamples, seed })
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Encode the attributes and predict. The same function backs the HTTP
/// route and in-process callers.
pub fn run_prediction(
    m: &HazardModel,
    req: &PredictRequest,
    geo: &dyn dtsurv::encode::GeoResolver,
    max_resamples: usize,
) -> Result<Prognosis, ApiError> {
    let raw: BTreeMap<String, String> = req.attributes.iter().map(|(k, v)| (k.clone(), cell(v))).collect();
    let x = match m.encoder() {
        Some(enc) => encode_record_fields(enc, &raw, geo).map_err(classify)?,
        None => encode_plain(m, &raw)?,
    };
    let opts = PrognosisOptions {
        horizons: DEFAULT_HORIZONS.to_vec(),
        bands: req.with_bands.then(|| BandOptions {
            n_resamples: req.n_resamples.unwrap_or(max_resamples).min(max_resamples),
            seed: req.seed.unwrap_or(0),
            ..BandOptions::default()
        }),
    };
    prognose(m, &x, &opts).map_err(|e| {
        let status = if e.is_validation() { StatusCode::BAD_REQUEST } else { StatusCode::INTERNAL_SERVER_ERROR };
        ApiError::new(status, e.to_string())
    })
}

/// Models without an encoder take their covariates by name.
fn encode_plain(m: &HazardModel, raw: &BTreeMap<String, String>) -> Result<Vec<f64>, ApiError> {
    let mut issues = Vec::new();
    let mut x = Vec::new();
    for name in m.covariate_schema().names() {
        match raw.get(name).map(|v| v.trim().parse::<f64>()) {
            Some(Ok(v)) if v.is_finite() => x.push(v),
            Some(_) => issues.push(issue(format!("attributes.{name}"), "must be a finite number")),
            None => issues.push(issue(format!("attributes.{name}"), "is required")),
        }
    }
    if issues.is_empty() {
        Ok(x)
    } else {
        Err(ApiError::invalid(issues))
    }
}

/// Input problems are 400; an unresolvable address is 422; a failing
/// geocoding service is 502.
fn classify(errors: Vec<dtsurv::encode::FieldError>) -> ApiError {
    let geo = |f: &dtsurv::encode::FieldError| match &f.error {
        dtsurv::Error::Geo(g) => Some(g.clone()),
        _ => None,
    };
    let input: Vec<FieldIssue> = errors
        .iter()
        .filter(|f| !matches!(geo(f), Some(g) if g.is_upstream() || matches!(g, GeoError::AmbiguousAddress(_))))
        .map(|f| {
            let message = match &f.error {
                dtsurv::Error::MissingColumn(_) => "is required".to_string(),
                e => e.to_string(),
            };
            issue(format!("attributes.{}", f.column), message)
        })
        .collect();
    if !input.is_empty() {
        return ApiError::invalid(input);
    }
    let fields: Vec<FieldIssue> = errors
        .iter()
        .map(|f| issue(format!("attributes.{}", f.column), f.error.to_string()))
        .collect();
    if errors.iter().any(|f| geo(f).is_some_and(|g| g.is_upstream())) {
        ApiError { status: StatusCode::BAD_GATEWAY, message: "location service failed".into(), fields }
    } else {
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            message: "address could not be resolved".into(),
            fields,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collects_every_bad_field() {
        let e = parse_request(br#"{"attributes": [], "with_bands": "yes", "n_resamples": 1, "extra": 1}"#).unwrap_err();
        assert_eq!(e.status, StatusCode::BAD_REQUEST);
        let fields: Vec<&str> = e.fields.iter().map(|f| f.field.as_str()).collect();
        assert_eq!(fields, ["model_id", "attributes", "with_bands", "n_resamples", "extra"]);
    }

    #[test]
    fn not_json() {
        let e = parse_request(b"{nope").unwrap_err();
        assert_eq!(e.fields[0].field, "body");
    }

    #[test]
    fn minimal_request() {
        let r = parse_request(br#"{"model_id": "m", "attributes": {"age": 61, "sex": "Male"}}"#).unwrap();
        assert!(!r.with_bands);
        assert_eq!(cell(&r.attributes["age"]), "61");
        assert_eq!(cell(&r.attributes["sex"]), "Male");
    }
}
