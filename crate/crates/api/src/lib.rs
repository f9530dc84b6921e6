//! HTTP service over the prediction model and the ledger.
//!
//! Endpoints are documented in `docs/api.md`.

mod error;
mod state;

use std::future::Future;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use sensorchain_core::ledger::{parse_date, query_by_network_id, BlockContent, LedgerError, PredictionBlock};
use sensorchain_core::SensorRecord;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub use error::ApiError;
pub use state::{public_key_path, ApiConfig, AppState, StartupError, Tamper};

use state::CommitError;

pub type SharedState = Arc<AppState>;

pub fn router(state: SharedState, cors_origins: &[String]) -> Router {
    Router::new()
        .route("/api/predict", post(predict))
        .route("/api/blocks", post(create_block).get(list_blocks))
        .route("/api/chain", get(chain_status))
        .route("/api/metrics", get(metrics))
        .layer(cors(cors_origins))
        .with_state(state)
}

fn cors(origins: &[String]) -> CorsLayer {
    let layer = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::AUTHORIZATION, header::CONTENT_TYPE]);
    let parsed: Vec<HeaderValue> = origins.iter().filter_map(|o| o.parse().ok()).collect();
    if parsed.is_empty() {
        layer.allow_origin(Any)
    } else {
        layer.allow_origin(AllowOrigin::list(parsed))
    }
}

/// Serves until `shutdown` resolves, then writes the chain back to disk.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: SharedState,
    cors_origins: &[String],
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let app = router(Arc::clone(&state), cors_origins);
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await?;
    state.flush().await.map_err(std::io::Error::other)
}

// ---- predict ----

const NUMERIC_KEYS: [&str; 5] = [
    "water_temperature",
    "turbidity",
    "transducer_depth",
    "wave_height",
    "wave_period",
];

#[derive(Debug, Serialize, Deserialize)]
pub struct PredictResponse {
    pub predicted_battery_life: f64,
}

fn json_object(body: Result<Json<Value>, JsonRejection>) -> Result<Map<String, Value>, ApiError> {
    match body {
        Ok(Json(Value::Object(map))) => Ok(map),
        Ok(_) => Err(ApiError::malformed("body must be a JSON object")),
        Err(e) => Err(ApiError::malformed(e.body_text())),
    }
}

/// Every raw key must be present; numeric readings may be `null` and are then imputed.
fn reading_from_json(map: &Map<String, Value>) -> Result<SensorRecord, ApiError> {
    let missing: Vec<&str> = std::iter::once("beach_name")
        .chain(NUMERIC_KEYS)
        .filter(|k| !map.contains_key(*k))
        .collect();
    if !missing.is_empty() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "missing_fields",
            format!("missing required keys: {}", missing.join(", ")),
        )
        .with_field(missing[0]));
    }
    let beach_name = match &map["beach_name"] {
        Value::String(s) if !s.trim().is_empty() => s.clone(),
        _ => return Err(ApiError::invalid_field("beach_name", "beach_name must be a non-empty string")),
    };
    let measurement_timestamp = match map.get("measurement_timestamp") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => {
            return Err(ApiError::invalid_field(
                "measurement_timestamp",
                "measurement_timestamp must be a string or null",
            ))
        }
    };
    let mut values = [None; 5];
    for (slot, key) in values.iter_mut().zip(NUMERIC_KEYS) {
        *slot = match &map[key] {
            Value::Null => None,
            Value::Number(n) => n.as_f64(),
            _ => return Err(ApiError::invalid_field(key, format!("{key} must be a number or null"))),
        };
    }
    let [water_temperature, turbidity, transducer_depth, wave_height, wave_period] = values;
    Ok(SensorRecord {
        beach_name,
        measurement_timestamp,
        water_temperature,
        turbidity,
        transducer_depth,
        wave_height,
        wave_period,
        battery_life: None,
    })
}

async fn predict(
    State(state): State<SharedState>,
    body: Result<Json<Value>, JsonRejection>,
) -> Result<Json<PredictResponse>, ApiError> {
    let model = state.model.as_ref().ok_or_else(|| {
        ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no_model", "no model is loaded")
    })?;
    let record = reading_from_json(&json_object(body)?)?;
    let bl = model.predict_record(&record);
    if !bl.is_finite() {
        return Err(ApiError::internal("model produced a non-finite prediction"));
    }
    Ok(Json(PredictResponse {
        predicted_battery_life: bl,
    }))
}

// ---- blocks ----

fn bearer_matches(headers: &HeaderMap, expected: &str) -> bool {
    let Some(token) = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
    else {
        return false;
    };
    // compare every byte so timing does not reveal the matching prefix length
    token.len() == expected.len()
        && token
            .bytes()
            .zip(expected.bytes())
            .fold(0u8, |acc, (a, b)| acc | (a ^ b))
            == 0
}

fn block_request(map: &Map<String, Value>) -> Result<BlockContent, ApiError> {
    let network_id = match map.get("network_id") {
        Some(Value::String(s)) if !s.trim().is_empty() => s.clone(),
        Some(Value::String(_)) => return Err(ApiError::invalid_field("network_id", "network_id must not be empty")),
        Some(_) => return Err(ApiError::invalid_field("network_id", "network_id must be a string")),
        None => return Err(ApiError::invalid_field("network_id", "network_id is required")),
    };
    let predicted_battery_life = match map.get("predicted_battery_life") {
        Some(Value::Number(n)) => n.as_f64().filter(|v| v.is_finite()).ok_or_else(|| {
            ApiError::invalid_field("predicted_battery_life", "predicted_battery_life must be finite")
        })?,
        Some(_) => {
            return Err(ApiError::invalid_field(
                "predicted_battery_life",
                "predicted_battery_life must be a number",
            ))
        }
        None => {
            return Err(ApiError::invalid_field(
                "predicted_battery_life",
                "predicted_battery_life is required",
            ))
        }
    };
    let date_of_prediction = match map.get("date_of_prediction") {
        Some(Value::String(s)) if parse_date(s).is_some() => s.clone(),
        Some(Value::String(s)) => {
            return Err(ApiError::invalid_field(
                "date_of_prediction",
                format!("{s:?} is not a calendar date in YYYY-MM-DD form"),
            ))
        }
        Some(_) => return Err(ApiError::invalid_field("date_of_prediction", "date_of_prediction must be a string")),
        None => return Err(ApiError::invalid_field("date_of_prediction", "date_of_prediction is required")),
    };
    Ok(BlockContent {
        network_id,
        predicted_battery_life,
        date_of_prediction,
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BlockResponse {
    pub block: PredictionBlock,
}

async fn create_block(
    State(state): State<SharedState>,
    headers: HeaderMap,
    body: Result<Json<Value>, JsonRejection>,
) -> Result<(StatusCode, Json<BlockResponse>), ApiError> {
    let Some(token) = state.admin_token.as_deref() else {
        return Err(ApiError::new(
            StatusCode::FORBIDDEN,
            "writes_disabled",
            "block creation is disabled: no admin token configured",
        ));
    };
    if !bearer_matches(&headers, token) {
        return Err(ApiError::unauthorized());
    }
    if let Some(t) = &state.startup_tamper {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "chain_invalid",
            format!("stored chain failed validation at block {}; writes are refused", t.index),
        ));
    }
    let content = block_request(&json_object(body)?)?;
    match state.commit(&content).await {
        Ok(block) => {
            tracing::info!(index = block.index, network_id = %block.network_id, "block committed");
            Ok((StatusCode::CREATED, Json(BlockResponse { block })))
        }
        Err(CommitError::Rejected(report)) => {
            tracing::warn!(?report, "peers rejected a block from the authority");
            Err(ApiError::new(
                StatusCode::CONFLICT,
                "peer_rejected",
                format!(
                    "{} of {} peers did not accept the block",
                    report.rejected + report.unreachable,
                    report.per_node.len()
                ),
            ))
        }
        Err(CommitError::Ledger(e)) => Err(ledger_error(e)),
        Err(CommitError::Persist(e)) => {
            tracing::error!(error = %e, "failed to persist chain");
            Err(ApiError::internal(format!("failed to persist chain: {e}")))
        }
    }
}

fn ledger_error(e: LedgerError) -> ApiError {
    match e {
        LedgerError::BadDate(d) => ApiError::invalid_field("date_of_prediction", format!("bad date {d:?}")),
        LedgerError::NonFiniteValue => ApiError::invalid_field("predicted_battery_life", "value must be finite"),
        LedgerError::InvalidNetworkId => ApiError::invalid_field("network_id", "network_id must not be empty"),
        other => ApiError::new(StatusCode::CONFLICT, "ledger_rejected", other.to_string()),
    }
}

#[derive(Debug, Deserialize)]
struct BlocksQuery {
    network_id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BlocksResponse {
    pub blocks: Vec<PredictionBlock>,
}

async fn list_blocks(
    State(state): State<SharedState>,
    query: Result<Query<BlocksQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Json<BlocksResponse>, ApiError> {
    let id = query
        .ok()
        .and_then(|Query(q)| q.network_id)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| {
            ApiError::new(StatusCode::BAD_REQUEST, "missing_parameter", "query parameter network_id is required")
                .with_field("network_id")
        })?;
    Ok(Json(BlocksResponse {
        blocks: query_by_network_id(&state.chain(), &id),
    }))
}

// ---- chain and metrics ----

#[derive(Debug, Serialize, Deserialize)]
pub struct ChainStatus {
    pub length: usize,
    pub head_hash: String,
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tamper_index: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

async fn chain_status(State(state): State<SharedState>) -> Json<ChainStatus> {
    let chain = state.chain();
    let (valid, tamper_index, reason) = match sensorchain_core::ledger::validate_chain(&chain, &state.authorities) {
        Ok(()) => (true, None, None),
        Err(LedgerError::TamperDetected { index, reason }) => (false, Some(index), Some(reason.to_string())),
        Err(e) => (false, Some(0), Some(e.to_string())),
    };
    Json(ChainStatus {
        length: chain.len(),
        head_hash: chain.head_hash().to_string(),
        valid,
        tamper_index,
        reason,
    })
}

async fn metrics(State(state): State<SharedState>) -> Result<Json<Value>, ApiError> {
    let not_found = || ApiError::new(StatusCode::NOT_FOUND, "not_found", "no evaluation has been run yet");
    let path = state.metrics_path.as_ref().ok_or_else(not_found)?;
    let text = match tokio::fs::read_to_string(path).await {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(not_found()),
        Err(e) => return Err(ApiError::internal(format!("reading metrics: {e}"))),
    };
    let doc: sensorchain_core::MetricsFile =
        serde_json::from_str(&text).map_err(|e| ApiError::internal(format!("metrics file is malformed: {e}")))?;
    Ok(Json(serde_json::to_value(doc).expect("metrics serialize")))
}
