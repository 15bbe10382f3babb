mod common;

use std::sync::Arc;
use std::time::Duration;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use semfarm_core::{ActionId, CanonicalRecord};
use semfarm_gateway::{api, Gateway};
use serde_json::{json, Value};
use tower::ServiceExt;

use common::*;

const SETTLE: Duration = Duration::from_secs(10);

fn start(config: semfarm_gateway::GatewayConfig) -> (Arc<Gateway>, Router) {
    let g = Arc::new(Gateway::start(config).unwrap());
    assert!(g.settle(SETTLE));
    let router = api::router(g.clone());
    (g, router)
}

async fn call(
    router: &Router,
    method: &str,
    uri: &str,
    body: Option<String>,
) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, Body::from))
        .unwrap();
    let resp = router.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes)
            .unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

async fn get(router: &Router, uri: &str) -> (StatusCode, Value) {
    call(router, "GET", uri, None).await
}

async fn post(router: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    call(router, "POST", uri, Some(body.to_string())).await
}

fn action_ids(tickets: &Value) -> Vec<String> {
    let mut ids: Vec<String> = tickets
        .as_array()
        .unwrap()
        .iter()
        .map(|t| {
            t["recommendation"]["action_id"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();
    ids.sort();
    ids
}

#[tokio::test]
async fn plot_replay_opens_the_four_expected_tickets() {
    let dir = tempfile::tempdir().unwrap();
    let (_g, router) = start(plot_config(dir.path()));

    let (status, tickets) = get(&router, "/api/recommendations?status=pending").await;
    assert_eq!(status, StatusCode::OK);
    let mut expected: Vec<String> = ActionId::ALL
        .iter()
        .map(|a| a.as_str().to_string())
        .collect();
    expected.sort();
    assert_eq!(action_ids(&tickets), expected);

    let explanations: Vec<&str> = tickets
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["recommendation"]["explanation"].as_str().unwrap())
        .collect();
    for needle in [
        "Soil moisture is 23.45%",
        "Temperature is 36.78°C",
        "Light level is 281.40 Lux",
        "Soil pH is 5.90",
    ] {
        assert!(explanations.iter().any(|e| e.contains(needle)), "{needle}");
    }
    let irrigate = tickets
        .as_array()
        .unwrap()
        .iter()
        .find(|t| t["recommendation"]["action_id"] == "irrigate")
        .unwrap();
    assert_eq!(irrigate["status"], "pending");
    assert!(irrigate["decided_at"].is_null());
    assert_eq!(
        irrigate["recommendation"]["alternatives"]
            .as_array()
            .unwrap()
            .len(),
        3
    );
    let sources: Vec<&str> = irrigate["recommendation"]["evidence"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["source"].as_str().unwrap())
        .collect();
    for s in ["rule", "fuzzy", "dempster_shafer", "bayesian"] {
        assert!(sources.contains(&s), "{s} missing from {sources:?}");
    }

    let (_, readings) = get(&router, "/api/readings").await;
    let values: Vec<f64> = readings
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["value"].as_f64().unwrap())
        .collect();
    assert_eq!(values, vec![36.78, 68.49, 23.45, 281.40, 5.90]);

    let (_, sensors) = get(&router, "/api/sensors").await;
    let ids: Vec<&str> = sensors
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["sensor_id"].as_str().unwrap())
        .collect();
    assert_eq!(
        ids,
        vec!["TEMP102AGR", "HUM103AGR", "SOIL7AGR", "LUX12AGR", "PH1AGR"]
    );
    assert_eq!(sensors[2]["latest_value"], 23.45);
    assert_eq!(sensors[2]["unit"], "%");
}

#[tokio::test]
async fn no_scenario_means_no_tickets_and_healthy() {
    let dir = tempfile::tempdir().unwrap();
    let (_g, router) = start(config(dir.path(), json!({})));
    let (status, health) = get(&router, "/api/health").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(health["status"], "ok");
    assert!(health["uptime_ms"].is_u64());
    let (_, tickets) = get(&router, "/api/recommendations").await;
    assert_eq!(tickets, json!([]));
    let (_, sensors) = get(&router, "/api/sensors").await;
    assert_eq!(sensors, json!([]));
}

#[tokio::test]
async fn empty_scenario_file_means_no_tickets() {
    let dir = tempfile::tempdir().unwrap();
    let scn = dir.path().join("empty.scn");
    std::fs::write(&scn, "# nothing to replay\n").unwrap();
    let (g, router) = start(config(dir.path(), json!({ "scenario_path": scn })));
    assert_eq!(g.tickets().list(None).len(), 0);
    let (_, health) = get(&router, "/api/health").await;
    assert_eq!(
        (health["status"].clone(), health["replay"].clone()),
        (json!("ok"), json!("done"))
    );
}

#[tokio::test]
async fn deciding_twice_conflicts() {
    let dir = tempfile::tempdir().unwrap();
    let (_g, router) = start(plot_config(dir.path()));
    let (_, tickets) = get(&router, "/api/recommendations?status=pending").await;
    let id = tickets[0]["ticket_id"].as_str().unwrap().to_string();
    let uri = format!("/api/actions/{id}");

    let (first, ticket) = post(
        &router,
        &uri,
        json!({"decision": "override", "note": "rain due"}),
    )
    .await;
    assert_eq!(first, StatusCode::OK);
    assert_eq!(ticket["status"], "overridden");
    assert_eq!(ticket["operator_note"], "rain due");
    assert!(ticket["decided_at"].is_u64());

    let (second, body) = post(&router, &uri, json!({"decision": "approve"})).await;
    assert_eq!(second, StatusCode::CONFLICT);
    assert_eq!(body["ticket"]["status"], "overridden");

    let (missing, _) = post(
        &router,
        "/api/actions/T424242",
        json!({"decision": "approve"}),
    )
    .await;
    assert_eq!(missing, StatusCode::NOT_FOUND);

    let (bad, _) = post(&router, &uri, json!({"decision": "maybe"})).await;
    assert!(bad.is_client_error(), "{bad}");

    let (_, pending) = get(&router, "/api/recommendations?status=pending").await;
    assert_eq!(pending.as_array().unwrap().len(), 3);
    let (_, overridden) = get(&router, "/api/recommendations?status=overridden").await;
    assert_eq!(overridden.as_array().unwrap().len(), 1);
    let (bad_status, _) = get(&router, "/api/recommendations?status=done").await;
    assert_eq!(bad_status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn approval_publishes_actuation_and_learns_a_case() {
    let dir = tempfile::tempdir().unwrap();
    let (g, router) = start(plot_config(dir.path()));
    let actuation = g.broker().subscribe("farm/AGR/ACT/*").unwrap();
    let cases_before = g.case_count();

    let (_, tickets) = get(&router, "/api/recommendations?status=pending").await;
    let irrigate = tickets
        .as_array()
        .unwrap()
        .iter()
        .find(|t| t["recommendation"]["action_id"] == "irrigate")
        .unwrap();
    let uri = format!("/api/actions/{}", irrigate["ticket_id"].as_str().unwrap());
    let (status, ticket) = post(&router, &uri, json!({"decision": "approve", "note": "ok"})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ticket["status"], "approved");

    let record = actuation.recv_timeout(Duration::from_secs(2)).unwrap();
    assert_eq!(record.sensor_id().to_string(), "ACT1AGR");
    assert_eq!(
        (record.quantity(), record.value(), record.unit()),
        ("actuation", 1.0, "state")
    );

    let (_, readings) = get(&router, "/api/readings?quantity=actuation").await;
    assert_eq!(readings.as_array().unwrap().len(), 1);
    assert_eq!(g.case_count(), cases_before + 1);
    let log = std::fs::read_to_string(dir.path().join("var/cases.log")).unwrap();
    assert!(log.contains("\"irrigate\""), "{log}");
    assert!(log.contains("\"soil_moisture\":23.45"), "{log}");
}

#[tokio::test]
async fn ingest_accepts_valid_and_rejects_invalid_records() {
    let dir = tempfile::tempdir().unwrap();
    let (g, router) = start(config(dir.path(), json!({})));

    let (status, body) = call(&router, "POST", "/api/ingest", Some(TEMP_WIRE.into())).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{body}");
    assert!(g.settle(SETTLE));
    let (_, readings) = get(&router, "/api/readings").await;
    let expected = CanonicalRecord::from_wire(TEMP_WIRE).unwrap();
    let got: CanonicalRecord = serde_json::from_value(readings[0].clone()).unwrap();
    assert_eq!(got, expected);
    let (_, tickets) = get(&router, "/api/recommendations?status=pending").await;
    assert!(action_ids(&tickets).contains(&"activate_cooling".to_string()));

    let (none, future) = get(&router, "/api/readings?since=99999999999999").await;
    assert_eq!((none, future), (StatusCode::OK, json!([])));

    let out_of_range = TEMP_WIRE.replace("36.78", "120.5");
    let (status, err) = call(&router, "POST", "/api/ingest", Some(out_of_range)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(
        (err["stage"].as_str(), err["field"].as_str()),
        (Some("validate"), Some("value"))
    );
    let (status, err) = call(&router, "POST", "/api/ingest", Some("not json".into())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["stage"], "map");

    let errors = std::fs::read_to_string(dir.path().join("var/errors.log")).unwrap();
    assert_eq!(errors.lines().count(), 2);
    assert_eq!(g.readings().len(), 1);
}

#[tokio::test]
async fn ingest_other_formats() {
    let dir = tempfile::tempdir().unwrap();
    let (_g, router) = start(config(dir.path(), json!({})));
    let kv = "sensor_id=PH1AGR\nquantity=ph\nvalue=5.9\nunit=pH\ntimestamp=5000\nlat=31.95\nlon=35.91\ndescription=Soil acidity level\nkeywords=soil,ph\nconfidence=1\n";
    let (status, body) = call(&router, "POST", "/api/ingest?format=kv", Some(kv.into())).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{body}");
    let (_, readings) = get(&router, "/api/readings?quantity=ph").await;
    assert_eq!(readings[0]["value"], 5.9);
    let (status, _) = call(&router, "POST", "/api/ingest?format=yaml", Some(kv.into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn pending_tickets_expire_after_ttl() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = plot_config(dir.path());
    cfg.ticket_ttl_ms = 40;
    let (g, router) = start(cfg);
    let deadline = std::time::Instant::now() + Duration::from_secs(5);
    while g.tickets().count(semfarm_gateway::TicketStatus::Pending) > 0 {
        assert!(
            std::time::Instant::now() < deadline,
            "tickets never expired"
        );
        std::thread::sleep(Duration::from_millis(10));
    }
    let (_, expired) = get(&router, "/api/recommendations?status=expired").await;
    assert_eq!(expired.as_array().unwrap().len(), 4);
    for t in expired.as_array().unwrap() {
        assert!(t["decided_at"].as_u64().unwrap() >= t["created_at"].as_u64().unwrap() + 40);
    }
    let id = expired[0]["ticket_id"].as_str().unwrap();
    let (status, _) = post(
        &router,
        &format!("/api/actions/{id}"),
        json!({"decision": "approve"}),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
}
