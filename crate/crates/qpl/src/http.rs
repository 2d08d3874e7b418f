//! JSON over HTTP.
//!
//! | route | |
//! |---|---|
//! | `GET /v1/rewrite?locale=&q=` | [`RewriteResult`](qpl_core::RewriteResult), 400 if a parameter is missing |
//! | `GET /v1/stats` | [`ServiceStats`](qpl_core::ServiceStats) |
//! | `POST /v1/reload?path=` | swap in a snapshot file, 409 if it is rejected |
//! | `GET /v1/health` | liveness plus the live version |

use std::path::PathBuf;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;

use crate::service::RewriteService;
use crate::store::SwapError;

pub fn router(service: RewriteService) -> Router {
    Router::new()
        .route("/v1/rewrite", get(rewrite))
        .route("/v1/stats", get(stats))
        .route("/v1/reload", post(reload))
        .route("/v1/health", get(health))
        .with_state(service)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    service: RewriteService,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(service)).with_graceful_shutdown(shutdown).await
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

#[derive(Deserialize)]
struct RewriteParams {
    locale: Option<String>,
    q: Option<String>,
}

async fn rewrite(State(service): State<RewriteService>, Query(params): Query<RewriteParams>) -> Response {
    match (params.locale, params.q) {
        (Some(locale), Some(q)) => Json(service.rewrite(&locale, &q)).into_response(),
        (None, _) => error(StatusCode::BAD_REQUEST, "missing query parameter `locale`"),
        (_, None) => error(StatusCode::BAD_REQUEST, "missing query parameter `q`"),
    }
}

async fn stats(State(service): State<RewriteService>) -> Response {
    Json(service.stats()).into_response()
}

#[derive(Deserialize)]
struct ReloadParams {
    path: Option<String>,
}

async fn reload(State(service): State<RewriteService>, Query(params): Query<ReloadParams>) -> Response {
    let Some(path) = params.path.filter(|p| !p.is_empty()) else {
        return error(StatusCode::BAD_REQUEST, "missing query parameter `path`");
    };
    let store = service.store().clone();
    let path = PathBuf::from(path);
    let outcome = tokio::task::spawn_blocking(move || store.reload(&path)).await;
    match outcome {
        Ok(Ok(swapped)) => {
            tracing::info!(previous = swapped.previous, current = swapped.current, "snapshot reloaded");
            Json(json!({
                "snapshot_version": swapped.current,
                "previous_version": swapped.previous,
                "entries": service.store().current().len(),
            }))
            .into_response()
        }
        Ok(Err(e)) => {
            tracing::warn!(error = %e, "reload rejected");
            let live = service.store().version();
            let body = json!({ "error": e.to_string(), "snapshot_version": live });
            let status = match e {
                SwapError::Older { .. } | SwapError::Load(_) => StatusCode::CONFLICT,
            };
            (status, Json(body)).into_response()
        }
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn health(State(service): State<RewriteService>) -> Response {
    let snapshot = service.store().current();
    Json(json!({
        "status": "ok",
        "snapshot_version": snapshot.version(),
        "entries": snapshot.len(),
    }))
    .into_response()
}
