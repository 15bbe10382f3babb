//! Operator HTTP API. Every body is JSON.
//!
//! | Method | Path | Result |
//! |---|---|---|
//! | GET | `/api/health` | `{status, uptime_ms, ...}` |
//! | GET | `/api/sensors` | sensor summaries |
//! | GET | `/api/readings?since=&quantity=` | canonical records, oldest first |
//! | GET | `/api/recommendations?status=` | tickets |
//! | POST | `/api/actions/{ticket_id}` | `{decision, note}` → ticket, 404, 409 |
//! | POST | `/api/ingest?format=` | payload → 202, or 422 with the translation error |

use std::str::FromStr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use semfarm_core::interop::Format;
use semfarm_core::TimestampMs;
use serde::Deserialize;
use serde_json::json;

use crate::pipeline::{DecideError, Gateway, IngestError};
use crate::tickets::{Decision, TicketError, TicketStatus};

pub fn router(gateway: Arc<Gateway>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/sensors", get(sensors))
        .route("/api/readings", get(readings))
        .route("/api/recommendations", get(recommendations))
        .route("/api/actions/{ticket_id}", post(decide))
        .route("/api/ingest", post(ingest))
        .with_state(gateway)
}

fn error(status: StatusCode, message: impl std::fmt::Display) -> Response {
    (status, Json(json!({ "error": message.to_string() }))).into_response()
}

async fn health(State(g): State<Arc<Gateway>>) -> Response {
    Json(g.health()).into_response()
}

async fn sensors(State(g): State<Arc<Gateway>>) -> Response {
    Json(g.sensors()).into_response()
}

#[derive(Deserialize)]
struct ReadingsQuery {
    since: Option<TimestampMs>,
    quantity: Option<String>,
}

async fn readings(State(g): State<Arc<Gateway>>, Query(q): Query<ReadingsQuery>) -> Response {
    Json(g.readings().query(q.since, q.quantity.as_deref())).into_response()
}

#[derive(Deserialize)]
struct TicketsQuery {
    status: Option<String>,
}

async fn recommendations(State(g): State<Arc<Gateway>>, Query(q): Query<TicketsQuery>) -> Response {
    let status = match q.status.as_deref().map(TicketStatus::from_str).transpose() {
        Ok(s) => s,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    Json(g.tickets().list(status)).into_response()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DecisionBody {
    decision: Decision,
    #[serde(default)]
    note: String,
}

async fn decide(
    State(g): State<Arc<Gateway>>,
    Path(ticket_id): Path<String>,
    Json(body): Json<DecisionBody>,
) -> Response {
    let outcome =
        tokio::task::spawn_blocking(move || g.decide(&ticket_id, body.decision, &body.note)).await;
    match outcome {
        Ok(Ok(ticket)) => Json(ticket).into_response(),
        Ok(Err(DecideError::Ticket(TicketError::NotFound(id)))) => {
            error(StatusCode::NOT_FOUND, format!("no ticket {id}"))
        }
        Ok(Err(DecideError::Ticket(TicketError::AlreadyDecided(t)))) => (
            StatusCode::CONFLICT,
            Json(json!({
                "error": format!("ticket {} is already {}", t.ticket_id, t.status),
                "ticket": t,
            })),
        )
            .into_response(),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

#[derive(Deserialize)]
struct IngestQuery {
    format: Option<String>,
}

async fn ingest(
    State(g): State<Arc<Gateway>>,
    Query(q): Query<IngestQuery>,
    body: Bytes,
) -> Response {
    let format = match q.format.as_deref().map(Format::from_str).transpose() {
        Ok(f) => f.unwrap_or(Format::Json),
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    let outcome = tokio::task::spawn_blocking(move || g.ingest_payload(&body, format)).await;
    match outcome {
        Ok(Ok(record)) => (
            StatusCode::ACCEPTED,
            Json(json!({
                "accepted": true,
                "sensor_id": record.sensor_id(),
                "timestamp": record.timestamp(),
            })),
        )
            .into_response(),
        Ok(Err(IngestError::Rejected(e))) => {
            (StatusCode::UNPROCESSABLE_ENTITY, Json(e)).into_response()
        }
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}
