use std::future::Future;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;

use super::{PlanRequest, Runtime, ServiceConfig};
use crate::error::Error;
use crate::router::JobId;

impl IntoResponse for Error {
    fn into_response(self) -> Response {
        let status = match self.code() {
            "NoCapableBackend" | "BackendUnavailable" | "RemoteUnavailable" => StatusCode::SERVICE_UNAVAILABLE,
            "UnknownJob" => StatusCode::NOT_FOUND,
            "Io" => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        if status.is_server_error() {
            tracing::warn!(code = self.code(), error = %self, "request failed");
        }
        (status, Json(self.to_json())).into_response()
    }
}

fn body<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, Error> {
    serde_json::from_slice(bytes).map_err(|e| Error::InvalidRequest(e.to_string()))
}

async fn blocking<T: Send + 'static>(
    rt: Arc<Runtime>,
    f: impl FnOnce(&Runtime) -> Result<T, Error> + Send + 'static,
) -> Result<T, Error> {
    tokio::task::spawn_blocking(move || f(&rt))
        .await
        .map_err(|e| Error::Io(format!("worker panicked: {e}")))?
}

async fn plan(State(rt): State<Arc<Runtime>>, bytes: Bytes) -> Result<Response, Error> {
    let request: PlanRequest = body(&bytes)?;
    let response = blocking(rt, move |rt| rt.plan(&request)).await?;
    Ok(Json(response).into_response())
}

async fn route(State(rt): State<Arc<Runtime>>, bytes: Bytes) -> Result<Response, Error> {
    let request: PlanRequest = body(&bytes)?;
    let response = blocking(rt, move |rt| rt.route(&request)).await?;
    Ok(Json(response).into_response())
}

async fn job(State(rt): State<Arc<Runtime>>, Path(id): Path<String>) -> Result<Response, Error> {
    let id: JobId = id.parse().map_err(|_| Error::InvalidRequest(format!("bad job id {id:?}")))?;
    let status = blocking(rt, move |rt| rt.job_status(&id)).await?;
    Ok(Json(status).into_response())
}

async fn health(State(rt): State<Arc<Runtime>>) -> Response {
    Json(rt.health()).into_response()
}

pub fn router(runtime: Arc<Runtime>) -> Router {
    Router::new()
        .route("/v1/plan", post(plan))
        .route("/v1/route", post(route))
        .route("/v1/jobs/{id}", get(job))
        .route("/healthz", get(health))
        .with_state(runtime)
}

pub async fn serve_on(
    listener: tokio::net::TcpListener,
    runtime: Arc<Runtime>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(runtime)).with_graceful_shutdown(shutdown).await
}

/// Binds `config.listen` and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), Error> {
    let listen = config.listen.clone();
    let runtime = Arc::new(tokio::task::spawn_blocking(move || Runtime::from_config(config)).await.map_err(
        |e| Error::Io(e.to_string()),
    )??);
    let listener = tokio::net::TcpListener::bind(&listen).await?;
    tracing::info!(addr = %listener.local_addr()?, digest = runtime.digest(), "listening");
    serve_on(listener, runtime, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(())
}
