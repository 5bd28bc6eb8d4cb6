//! HTTP facade over the landmark mapping pipeline.
//!
//! Every endpoint is a thin JSON adapter: decode a request from
//! `landmark-api`, run the corresponding `landmark-core` operation on the
//! blocking pool (the pipeline is CPU-bound and its service clients use
//! blocking I/O), and encode the result. Policy decisions — what to do with a
//! degenerate alignment, which exit code an error maps to — stay with the
//! caller; the service reports outcomes as data.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use landmark_api as api;
use landmark_core::formats::ObservationRecord;
use landmark_core::identify::{CategoryEntry, CategoryTable, LabelingClient};
use landmark_core::model::Observation;
use landmark_core::pipeline::{self, BuildOptions, IngestOptions};
use landmark_core::relatedness::RelatednessOptions;
use landmark_core::{aggregate, evaluate, formats, render, simulate, Error};

pub fn router() -> Router {
    Router::new()
        .route(api::paths::HEALTH, get(health))
        .route(api::paths::INGEST, post(ingest))
        .route(api::paths::ALIGN, post(align))
        .route(api::paths::EVALUATE, post(evaluate_map))
        .route(api::paths::SIMULATE, post(simulate_run))
        .route(api::paths::SWEEP, post(sweep))
        .route(api::paths::RENDER, post(render_map))
}

/// Serve the API on an already-bound listener until the task is dropped.
pub async fn serve(listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router()).await
}

/// Pipeline error carried out of a handler.
struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

impl From<tokio::task::JoinError> for ApiError {
    fn from(e: tokio::task::JoinError) -> Self {
        ApiError(Error::Io(std::io::Error::other(format!("worker task failed: {e}"))))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            Error::InvalidInput(_)
            | Error::OutOfRange { .. }
            | Error::Parse(_)
            | Error::Generation(_) => StatusCode::BAD_REQUEST,
            Error::Degenerate(_) | Error::Unmatchable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Error::Transport(_) | Error::Protocol(_) => StatusCode::BAD_GATEWAY,
            Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(api::ErrorBody::from_error(&self.0))).into_response()
    }
}

/// Run a blocking pipeline closure on the worker pool.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, Error> + Send + 'static,
{
    Ok(tokio::task::spawn_blocking(f).await??)
}

async fn health() -> Json<api::HealthResponse> {
    Json(api::HealthResponse {
        status: "ok".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    })
}

async fn ingest(
    Json(req): Json<api::IngestRequest>,
) -> Result<Json<api::IngestResponse>, ApiError> {
    let out = blocking(move || {
        let table = req
            .category_table
            .map(|raw| {
                CategoryTable::new(
                    raw.into_iter()
                        .map(|(label, keywords)| CategoryEntry { label, keywords })
                        .collect(),
                )
            })
            .transpose()?;
        let labeling = req
            .labeling_endpoint
            .map(|endpoint| {
                LabelingClient::new(endpoint, api::duration_or_default(req.timeout_s))
            })
            .transpose()?;
        let options = IngestOptions {
            category_table: table.as_ref(),
            labeling: labeling.as_ref(),
            stationary: req
                .stationary
                .map(|s| s.to_params())
                .unwrap_or_default(),
        };
        let outcome = pipeline::ingest(&req.recordings, &options)?;
        Ok(api::IngestResponse {
            observations: outcome.observations,
            warnings: outcome.warnings,
        })
    })
    .await?;
    Ok(Json(out))
}

fn build_options_from(req: &api::AlignRequest) -> BuildOptions {
    let mut relatedness = RelatednessOptions {
        drop_duplicate_labels: req.drop_duplicates,
        flagged_duplicates: req.flagged_duplicates.iter().cloned().collect(),
        ..RelatednessOptions::default()
    };
    if let Some(tau) = req.tau {
        relatedness.tau = tau;
    }
    BuildOptions {
        provider: req.provider.to_provider(),
        relatedness,
        align: req.config.clone(),
        link_threshold: req.link_threshold.unwrap_or(aggregate::DEFAULT_LINK_THRESHOLD),
    }
}

async fn align(Json(req): Json<api::AlignRequest>) -> Result<Json<api::AlignResponse>, ApiError> {
    let out = blocking(move || {
        let options = build_options_from(&req);
        let observations: Vec<Observation> =
            req.observations.iter().map(ObservationRecord::to_observation).collect();
        let outcome = pipeline::build_map(&observations, &options)?;
        Ok(api::AlignResponse {
            alignment: outcome.alignment,
            map: formats::MapFile::from_map(&outcome.map),
            dropped_recordings: outcome.dropped_recordings,
        })
    })
    .await?;
    Ok(Json(out))
}

async fn evaluate_map(
    Json(req): Json<api::EvaluateRequest>,
) -> Result<Json<api::EvaluateResponse>, ApiError> {
    let out = blocking(move || {
        let report = evaluate::positional_error(&req.map.to_map(), &req.ground_truth.to_truth())?;
        Ok(api::EvaluateResponse { report })
    })
    .await?;
    Ok(Json(out))
}

async fn simulate_run(
    Json(req): Json<api::SimulateRequest>,
) -> Result<Json<api::SimulateResponse>, ApiError> {
    let out = blocking(move || {
        let outcome = simulate::run_experiment(&req.config)?;
        Ok(api::SimulateResponse { outcome })
    })
    .await?;
    Ok(Json(out))
}

async fn sweep(Json(req): Json<api::SweepRequest>) -> Result<Json<api::SweepResponse>, ApiError> {
    let out = blocking(move || {
        let grid = match (&req.preset, req.grid.is_empty()) {
            (Some(name), true) => simulate::preset(name)?,
            (None, false) => req.grid,
            (Some(_), false) => {
                return Err(Error::InvalidInput(
                    "give either a preset or an explicit grid, not both".to_string(),
                ))
            }
            (None, true) => {
                return Err(Error::InvalidInput(
                    "sweep needs a preset name or a non-empty grid".to_string(),
                ))
            }
        };
        let result = simulate::sweep(&grid, req.seeds_per_config, req.parallelism)?;
        Ok(api::SweepResponse { result })
    })
    .await?;
    Ok(Json(out))
}

async fn render_map(
    Json(req): Json<api::RenderRequest>,
) -> Result<Json<api::RenderResponse>, ApiError> {
    let out = blocking(move || {
        let truth = req.ground_truth.as_ref().map(|g| g.to_truth());
        let svg = render::render_svg(&req.map.to_map(), truth.as_ref())?;
        Ok(api::RenderResponse { svg })
    })
    .await?;
    Ok(Json(out))
}
