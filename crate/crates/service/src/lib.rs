//! HTTP/JSON service for running campaigns, including campaigns whose
//! fitness values are measured by an operator.
//!
//! Each campaign lives in its own directory (`config.json`, `events.jsonl`,
//! `snapshot.json`) under `<data dir>/campaigns/` and is owned by one engine
//! thread. Restarting the service replays every event log.

pub mod driver;
pub mod runtime;

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use vawt_core::fitness::{OracleKind, RpmValue};
use vawt_core::mesh::stl_file_name;
use vawt_core::morphology::slice_cells;
use vawt_core::{
    build_phenotype, laplacian_smooth, voxels_to_mesh, CampaignConfig, FieldError, FitnessError, Genome, StlFormat,
};

use crate::driver::SubmitError;
use crate::runtime::{CampaignHandle, CommandError, Registry};

pub use runtime::{CampaignView, Status, SubmitAck};

/// Environment variable naming the data directory.
pub const DATA_DIR_ENV: &str = "VAWT_DATA_DIR";
/// Environment variable restricting CORS to one console origin.
pub const CONSOLE_ORIGIN_ENV: &str = "VAWT_CONSOLE_ORIGIN";
pub const DEFAULT_SMOOTH_STEPS: u32 = 50;
pub const MAX_SMOOTH_STEPS: u32 = 1000;

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    registry: Registry,
    stl_cache: Mutex<HashMap<(String, u32), Bytes>>,
}

impl AppState {
    pub fn open(data_dir: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(Self {
            inner: Arc::new(Inner { registry: Registry::open(data_dir)?, stl_cache: Mutex::new(HashMap::new()) }),
        })
    }

    pub fn registry(&self) -> &Registry {
        &self.inner.registry
    }

    /// Stops all engines and flushes their snapshots.
    pub fn shutdown(&self) {
        self.inner.registry.shutdown();
    }
}

pub fn router(state: AppState) -> Router {
    let origin = match std::env::var(CONSOLE_ORIGIN_ENV).ok().and_then(|o| HeaderValue::from_str(&o).ok()) {
        Some(origin) => AllowOrigin::exact(origin),
        None => AllowOrigin::any(),
    };
    let cors = CorsLayer::new().allow_origin(origin).allow_methods(Any).allow_headers(Any);
    Router::new()
        .route("/campaigns", get(list_campaigns).post(create_campaign))
        .route("/campaigns/{id}", get(get_campaign))
        .route("/campaigns/{id}/pending", get(get_pending))
        .route("/campaigns/{id}/measurements", post(submit_measurement))
        .route("/campaigns/{id}/designs/{hash}/stl", get(get_stl))
        .route("/campaigns/{id}/designs/{hash}/slice", get(get_slice))
        .route("/campaigns/{id}/history", get(get_history))
        .route("/campaigns/{id}/population", get(get_population))
        .layer(cors)
        .with_state(state)
}

pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, body: json!({ "error": message.into() }) }
    }

    fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, what)
    }

    fn invalid(errors: Vec<FieldError>) -> Self {
        let message = errors.iter().map(|e| format!("{}: {}", e.field, e.message)).collect::<Vec<_>>().join("; ");
        Self { status: StatusCode::UNPROCESSABLE_ENTITY, body: json!({ "error": message, "errors": errors }) }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct CampaignRecord {
    id: String,
    config: CampaignConfig,
    status: Status,
    created_at: String,
    generation: u64,
    evaluations: u64,
    best_fitness: Option<f64>,
    pending: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    evaluations_to_threshold: Option<u64>,
}

fn record(handle: &CampaignHandle) -> CampaignRecord {
    let view = handle.view();
    CampaignRecord {
        id: handle.id.clone(),
        config: handle.config.clone(),
        status: view.status,
        created_at: handle.created_at.clone(),
        generation: view.generation,
        evaluations: view.evaluations,
        best_fitness: view.best_fitness,
        pending: view.pending.len(),
        evaluations_to_threshold: view.evaluations_to_threshold,
    }
}

fn campaign(state: &AppState, id: &str) -> ApiResult<Arc<CampaignHandle>> {
    state.registry().get(id).ok_or_else(|| ApiError::not_found(format!("campaign {id} not found")))
}

async fn list_campaigns(State(state): State<AppState>) -> Json<Vec<CampaignRecord>> {
    Json(state.registry().list().iter().map(|h| record(h)).collect())
}

async fn create_campaign(State(state): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<CampaignRecord>)> {
    let config: CampaignConfig = serde_json::from_slice(&body)
        .map_err(|e| ApiError::invalid(vec![FieldError { field: "body".into(), message: e.to_string() }]))?;
    config.validate().map_err(|e| ApiError::invalid(e.0))?;
    let registry_state = state.clone();
    let handle = tokio::task::spawn_blocking(move || registry_state.registry().create(config))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok((StatusCode::CREATED, Json(record(&handle))))
}

async fn get_campaign(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<CampaignRecord>> {
    let handle = campaign(&state, &id)?;
    Ok(Json(record(&handle)))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct PendingEntry {
    request_id: String,
    genome: Genome,
    genome_hash: String,
    status: &'static str,
    stl_url: String,
}

async fn get_pending(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<Vec<PendingEntry>>> {
    let handle = campaign(&state, &id)?;
    let view = handle.view();
    Ok(Json(
        view.pending
            .iter()
            .map(|r| PendingEntry {
                request_id: r.request_id.clone(),
                genome: r.genome.clone(),
                genome_hash: r.genome_hash.clone(),
                status: "pending",
                stl_url: format!("/campaigns/{id}/designs/{}/stl", r.genome_hash),
            })
            .collect(),
    ))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Measurement {
    request_id: String,
    rpm: RpmValue,
}

async fn submit_measurement(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<SubmitAck>> {
    let handle = campaign(&state, &id)?;
    if handle.config.oracle != OracleKind::Manual {
        return Err(ApiError::not_found(format!("campaign {id} has no measurement requests")));
    }
    let measurement: Measurement = serde_json::from_slice(&body)
        .map_err(|e| ApiError::invalid(vec![FieldError { field: "body".into(), message: e.to_string() }]))?;
    let field = |e: FitnessError| ApiError::invalid(vec![FieldError { field: "rpm".into(), message: e.to_string() }]);
    let rpm = measurement.rpm.to_rpm().map_err(field)?;
    match handle.submit(measurement.request_id, rpm).await {
        Ok(ack) => Ok(Json(ack)),
        Err(CommandError::Submit(SubmitError::Fitness(e))) => Err(match e {
            FitnessError::NotFound(_) => ApiError::not_found(e.to_string()),
            FitnessError::Conflict(_) => ApiError::new(StatusCode::CONFLICT, e.to_string()),
            FitnessError::Validation(_) => field(e),
            FitnessError::Oracle(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        }),
        Err(CommandError::Submit(SubmitError::NotManual)) => {
            Err(ApiError::not_found(format!("campaign {id} has no measurement requests")))
        }
        Err(e @ CommandError::Stopped) => Err(ApiError::new(StatusCode::CONFLICT, e.to_string())),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())),
    }
}

fn design(state: &AppState, id: &str, hash: &str) -> ApiResult<Genome> {
    campaign(state, id)?
        .genome(hash)
        .ok_or_else(|| ApiError::not_found(format!("design {hash} not found in campaign {id}")))
}

async fn get_stl(
    State(state): State<AppState>,
    UrlPath((id, hash)): UrlPath<(String, String)>,
    Query(query): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let genome = design(&state, &id, &hash)?;
    let steps = match query.get("smooth") {
        None => DEFAULT_SMOOTH_STEPS,
        Some(raw) => raw.trim().parse::<u32>().ok().filter(|&s| s <= MAX_SMOOTH_STEPS).ok_or_else(|| {
            ApiError::invalid(vec![FieldError {
                field: "smooth".into(),
                message: format!("{raw:?} is not an integer in [0, {MAX_SMOOTH_STEPS}]"),
            }])
        })?,
    };
    let key = (hash.clone(), steps);
    let cached = state.inner.stl_cache.lock().expect("cache lock poisoned").get(&key).cloned();
    let bytes = match cached {
        Some(bytes) => bytes,
        None => {
            let bytes = tokio::task::spawn_blocking(move || -> Result<Bytes, String> {
                let mesh = voxels_to_mesh(&build_phenotype(&genome)).map_err(|e| e.to_string())?;
                let mesh = laplacian_smooth(&mesh, i64::from(steps)).map_err(|e| e.to_string())?;
                mesh.to_stl_bytes(StlFormat::Binary).map(Bytes::from).map_err(|e| e.to_string())
            })
            .await
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))?;
            state.inner.stl_cache.lock().expect("cache lock poisoned").entry(key).or_insert(bytes).clone()
        }
    };
    let disposition = format!("attachment; filename=\"{}\"", stl_file_name(&hash, steps));
    Ok(([(header::CONTENT_TYPE, "model/stl".to_string()), (header::CONTENT_DISPOSITION, disposition)], bytes)
        .into_response())
}

async fn get_slice(
    State(state): State<AppState>,
    UrlPath((id, hash)): UrlPath<(String, String)>,
) -> ApiResult<Json<serde_json::Value>> {
    let genome = design(&state, &id, &hash)?;
    let grid = build_phenotype(&genome);
    // Uniform genomes have one distinct slice; z-variable ones get one per
    // section, taken at the section's first layer.
    let layers: Vec<_> = vawt_core::morphology::SECTION_BOUNDS[..6]
        .iter()
        .map(|&z| json!({ "z": z, "cells": slice_cells(grid.slice(z)) }))
        .collect();
    Ok(Json(json!({
        "genome": genome,
        "genomeHash": hash,
        "size": vawt_core::morphology::GRID,
        "enabledVoxels": grid.enabled_count(),
        "layers": layers,
    })))
}

async fn get_history(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<serde_json::Value>> {
    let handle = campaign(&state, &id)?;
    let view = handle.view();
    Ok(Json(json!({
        "series": view.history,
        "archiveSize": view.evaluations,
        "generation": view.generation,
        "status": view.status,
        "bestFitness": view.best_fitness,
        "evaluationsToThreshold": view.evaluations_to_threshold,
    })))
}

async fn get_population(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<serde_json::Value>> {
    let handle = campaign(&state, &id)?;
    let view = handle.view();
    Ok(Json(json!({ "generation": view.generation, "members": view.population })))
}

/// Serves until `shutdown` resolves, then stops all campaign engines.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let result = axum::serve(listener, router(state.clone())).with_graceful_shutdown(shutdown).await;
    tokio::task::spawn_blocking(move || state.shutdown()).await.map_err(std::io::Error::other)?;
    result
}
