use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use dmin_core::data::{Cell, Feature, LabelSchema, Record, Schema};
use dmin_core::generalization::GeneralizationModel;
use dmin_core::tree::{GeneralizerTree, TreeParams};
use dmin_service::{router, AppState, ServiceConfig};

/// Two clusters split on age at 45; color suppressed; zip collected exactly.
fn toy_model() -> GeneralizationModel {
    let schema = Schema {
        features: vec![
            Feature::numeric("age", 0.0, 100.0),
            Feature::categorical("color", ["r", "g"]),
            Feature::numeric("zip", 0.0, 99999.0),
        ],
        label: LabelSchema {
            name: "approved".into(),
            classes: vec!["no".into(), "yes".into()],
        },
    };
    let recs: Vec<Record> = [20.0, 30.0, 40.0, 50.0, 60.0, 70.0]
        .iter()
        .enumerate()
        .map(|(i, &a)| Record(vec![Cell::Num(a), Cell::Cat((i % 2) as u32), Cell::Num(1000.0 * i as f64)]))
        .collect();
    let labels = [0, 0, 0, 1, 1, 1];
    let tree = GeneralizerTree::fit(&recs, &labels, &schema, &TreeParams::default()).unwrap();
    GeneralizationModel::build(&schema, tree, &[false, false, true], &recs, &labels).unwrap()
}

fn app_with(config: ServiceConfig) -> (axum::Router, Arc<AppState>) {
    let state = AppState::new(toy_model(), config).unwrap();
    (router(state.clone()), state)
}

fn app() -> axum::Router {
    app_with(ServiceConfig::default()).0
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

async fn create(app: &axum::Router) -> (String, Value) {
    let (status, body) = call(app, "POST", "/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED);
    (body["session_id"].as_str().unwrap().to_string(), body)
}

#[tokio::test]
async fn healthz_answers() {
    let (status, body) = call(&app(), "GET", "/healthz", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
}

#[tokio::test]
async fn create_offers_age_ranges() {
    let app = app();
    let (_, body) = create(&app).await;
    let offers = body["offers"].as_array().unwrap();
    assert_eq!(offers[0]["feature"], "age");
    assert_eq!(offers[0]["mode"], "choose");
    let ids: Vec<&str> = offers[0]["options"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| o["id"].as_str().unwrap())
        .collect();
    assert_eq!(ids, ["r:0:45", "r:45:100"]);
    assert_eq!(offers[1]["mode"], "not_needed");
    assert_eq!(offers[2]["mode"], "exact");
    assert_eq!(body["finalizable"], false);
}

#[tokio::test]
async fn full_flow_with_transcript() {
    let app = app();
    let (id, _) = create(&app).await;
    let (status, body) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/answers"),
        Some(json!({"feature": "age", "option_id": "r:45:100"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["finalizable"], true);
    assert_eq!(body["offers"][0]["mode"], "answered");
    let (status, _) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/answers"),
        Some(json!({"feature": "color", "decline": true})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let (status, body) = call(&app, "POST", &format!("/sessions/{id}/finalize"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["label"], "yes");
    assert_eq!(
        body["transcript"],
        json!([
            {"feature": "age", "kind": "range", "start": 45.0, "end": 100.0, "open_start": true},
            {"feature": "color", "kind": "any"}
        ])
    );
    // Finalized sessions are dropped.
    let (status, body) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "not_found");
}

#[tokio::test]
async fn exact_values_only_for_untouched_features() {
    let app = app();
    let (id, _) = create(&app).await;
    let uri = format!("/sessions/{id}/answers");
    let (status, body) = call(&app, "POST", &uri, Some(json!({"feature": "age", "value": 33}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "protocol_error");
    let (status, _) = call(&app, "POST", &uri, Some(json!({"feature": "zip", "value": 12345}))).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn error_codes() {
    let app = app();
    let (id, _) = create(&app).await;
    let uri = format!("/sessions/{id}/answers");
    let cases = [
        (json!({"feature": "age", "option_id": "r:0:99"}), StatusCode::CONFLICT, "protocol_error"),
        (json!({"feature": "height", "decline": true}), StatusCode::BAD_REQUEST, "bad_request"),
        (json!({"feature": "age"}), StatusCode::BAD_REQUEST, "bad_request"),
        (
            json!({"feature": "age", "option_id": "r:0:45", "decline": true}),
            StatusCode::BAD_REQUEST,
            "bad_request",
        ),
        (json!({"nonsense": 1}), StatusCode::BAD_REQUEST, "bad_request"),
    ];
    for (body, status, code) in cases {
        let (s, b) = call(&app, "POST", &uri, Some(body.clone())).await;
        assert_eq!(s, status, "{body}");
        assert_eq!(b["code"], code, "{body}");
    }
    let (s, b) = call(
        &app,
        "POST",
        "/sessions/00000000-0000-0000-0000-000000000000/answers",
        Some(json!({"feature": "age", "decline": true})),
    )
    .await;
    assert_eq!((s, b["code"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));
    let (s, _) = call(&app, "POST", "/sessions/not-a-uuid/finalize", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn answering_twice_is_a_protocol_error() {
    let app = app();
    let (id, _) = create(&app).await;
    let uri = format!("/sessions/{id}/answers");
    let body = json!({"feature": "age", "option_id": "r:0:45"});
    assert_eq!(call(&app, "POST", &uri, Some(body.clone())).await.0, StatusCode::OK);
    let (s, b) = call(&app, "POST", &uri, Some(body)).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(b["code"], "protocol_error");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_answers_to_one_session_have_one_winner() {
    let app = app();
    let (id, _) = create(&app).await;
    let uri = format!("/sessions/{id}/answers");
    let tasks: Vec<_> = ["r:0:45", "r:45:100", "r:0:45", "r:45:100"]
        .into_iter()
        .map(|opt| {
            let app = app.clone();
            let uri = uri.clone();
            tokio::spawn(async move { call(&app, "POST", &uri, Some(json!({"feature": "age", "option_id": opt}))).await })
        })
        .collect();
    let mut ok = 0;
    for t in tasks {
        let (s, b) = t.await.unwrap();
        if s == StatusCode::OK {
            ok += 1;
        } else {
            assert_eq!(b["code"], "protocol_error");
        }
    }
    assert_eq!(ok, 1);
}

#[tokio::test]
async fn sessions_are_independent() {
    let app = app();
    let (a, _) = create(&app).await;
    let (b, _) = create(&app).await;
    assert_ne!(a, b);
    let body = json!({"feature": "age", "option_id": "r:0:45"});
    assert_eq!(call(&app, "POST", &format!("/sessions/{a}/answers"), Some(body)).await.0, StatusCode::OK);
    let (_, offers) = call(&app, "GET", &format!("/sessions/{b}"), None).await;
    assert_eq!(offers["offers"][0]["mode"], "choose");
}

#[tokio::test]
async fn idle_sessions_expire() {
    let (app, state) = app_with(ServiceConfig {
        idle_timeout: Duration::from_millis(20),
        ..ServiceConfig::default()
    });
    let (id, _) = create(&app).await;
    assert_eq!(state.live_sessions(), 1);
    tokio::time::sleep(Duration::from_millis(60)).await;
    let (s, _) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(state.live_sessions(), 0);
}

#[tokio::test]
async fn session_log_is_append_only_and_holds_no_raw_generalized_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sessions.ndjson");
    let (app, _) = app_with(ServiceConfig {
        session_log: Some(path.clone()),
        ..ServiceConfig::default()
    });
    let (id, _) = create(&app).await;
    let body = json!({"feature": "age", "option_id": "r:0:45"});
    call(&app, "POST", &format!("/sessions/{id}/answers"), Some(body)).await;
    call(&app, "POST", &format!("/sessions/{id}/finalize"), None).await;
    let text = std::fs::read_to_string(&path).unwrap();
    let events: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let kinds: Vec<&str> = events.iter().map(|e| e["event"].as_str().unwrap()).collect();
    assert_eq!(kinds, ["created", "answered", "finalized"]);
    assert_eq!(events[1]["disclosed"]["kind"], "range");
}

#[tokio::test]
async fn static_assets_are_served_when_configured() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<h1>hi</h1>").unwrap();
    let (app, _) = app_with(ServiceConfig {
        static_dir: Some(dir.path().to_path_buf()),
        ..ServiceConfig::default()
    });
    let (s, body) = call(&app, "GET", "/index.html", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body, Value::String("<h1>hi</h1>".into()));
}
