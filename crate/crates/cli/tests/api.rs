use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use sgdns::sim::{self, log::to_jsonl};
use sgdns::Scenario;
use sgdns_cli::server::{router, Session};
use tower::ServiceExt;

fn app() -> Router {
    router(Arc::new(Mutex::new(Session::default())))
}

fn split16() -> Scenario {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../scenarios/split16.json"
    ))
    .unwrap();
    Scenario::from_json(&text).unwrap()
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, String) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn json_call(
    app: &Router,
    method: &str,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, Value) {
    let (s, text) = call(app, method, uri, body).await;
    (s, serde_json::from_str(&text).unwrap_or(Value::Null))
}

#[tokio::test]
async fn hundred_nodes_converge_within_sixteen_rounds() {
    let app = app();
    let (s, body) = json_call(&app, "POST", "/network", Some(json!({ "n": 100 }))).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(body["network_id"], 1);
    let (s, body) = json_call(&app, "POST", "/step", Some(json!({ "rounds": 16 }))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["metrics"].as_array().unwrap().len(), 16);
    let (_, state) = json_call(&app, "GET", "/state", None).await;
    assert_eq!(state["converged"], true);
    assert_eq!(state["round"], 16);
    let nodes = state["nodes"].as_array().unwrap();
    assert_eq!(nodes.len(), 100);
    let n0 = &nodes[0];
    for key in [
        "id",
        "partition",
        "successor",
        "fingers",
        "crossPartitionLinks",
        "vv",
    ] {
        assert!(n0.get(key).is_some(), "missing {key}");
    }
    assert_eq!(n0["fingers"][0]["invalid"], false);
}

#[tokio::test]
async fn split_heal_publish_lookup_round_trip() {
    let app = app();
    json_call(&app, "POST", "/network", Some(json!({ "n": 16, "m": 4 }))).await;
    json_call(&app, "POST", "/step", Some(json!({ "rounds": 4 }))).await;
    let frag_a: Vec<u64> = (0..6).collect();
    let frag_b: Vec<u64> = (6..16).collect();
    let (s, body) = json_call(
        &app,
        "POST",
        "/split",
        Some(json!({ "fragments": [frag_a, frag_b] })),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["partition_ids"], json!([0, 6]));

    let (s, body) = json_call(
        &app,
        "POST",
        "/publish",
        Some(json!({ "node": 9, "name": "svc.example", "ip": "10.9.9.9", "ttl": 1000 })),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["outcome"], "FOUND");
    json_call(&app, "POST", "/step", Some(json!({ "rounds": 6 }))).await;
    let (_, body) = json_call(
        &app,
        "POST",
        "/lookup",
        Some(json!({ "origin": 2, "name": "svc.example" })),
    )
    .await;
    assert_eq!(body["outcome"], "NOT_FOUND");

    let (s, body) = json_call(&app, "POST", "/heal", Some(json!({ "partitions": "all" }))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["merged"], 0);
    json_call(&app, "POST", "/step", Some(json!({ "rounds": 20 }))).await;
    let (_, body) = json_call(
        &app,
        "POST",
        "/lookup",
        Some(json!({ "origin": 2, "name": "svc.example" })),
    )
    .await;
    assert_eq!(body["outcome"], "FOUND");
    assert_eq!(body["record"]["ip"], "10.9.9.9");
    assert!(!body["path"].as_array().unwrap().is_empty());

    let (_, state) = json_call(&app, "GET", "/state", None).await;
    assert!(state["nodes"]
        .as_array()
        .unwrap()
        .iter()
        .all(|n| n["partition"] == 0));
}

#[tokio::test]
async fn malformed_bodies_are_rejected_with_diagnostics() {
    let app = app();
    let (s, body) = json_call(&app, "POST", "/network", Some(json!({ "nodes": 5 }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(body["detail"].as_str().unwrap().contains("nodes"));

    json_call(&app, "POST", "/network", Some(json!({ "n": 8 }))).await;
    let (s, body) = json_call(&app, "POST", "/step", Some(json!({ "rounds": 0 }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(body["field"], "rounds");

    let (s, body) = json_call(
        &app,
        "POST",
        "/split",
        Some(json!({ "fragments": [[0, 1], [1, 2]] })),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(body["error"].is_string());

    let (s, _) = call(&app, "POST", "/heal", Some(json!({ "partitions": "some" }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, _) = call(&app, "GET", "/events?since=abc", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn commands_before_a_network_conflict() {
    let app = app();
    let (s, _) = json_call(&app, "POST", "/step", Some(json!({ "rounds": 1 }))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = json_call(&app, "GET", "/state", None).await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn event_cursor_is_incremental() {
    let app = app();
    json_call(&app, "POST", "/network", Some(json!({ "n": 8 }))).await;
    json_call(&app, "POST", "/step", Some(json!({ "rounds": 2 }))).await;
    let (_, all) = call(&app, "GET", "/events", None).await;
    let last: Value = serde_json::from_str(all.lines().last().unwrap()).unwrap();
    let seq = last["seq"].as_u64().unwrap();
    let (_, none) = call(&app, "GET", &format!("/events?since={seq}"), None).await;
    assert!(none.is_empty());
    json_call(&app, "POST", "/step", Some(json!({ "rounds": 1 }))).await;
    let (_, fresh) = call(&app, "GET", &format!("/events?since={seq}"), None).await;
    let first: Value = serde_json::from_str(fresh.lines().next().unwrap()).unwrap();
    assert_eq!(first["seq"], seq + 1);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn concurrent_steps_are_serialized() {
    let app = app();
    json_call(&app, "POST", "/network", Some(json!({ "n": 256 }))).await;
    let a = tokio::spawn({
        let app = app.clone();
        async move {
            json_call(&app, "POST", "/step", Some(json!({ "rounds": 5 })))
                .await
                .1
        }
    });
    let b = tokio::spawn({
        let app = app.clone();
        async move {
            json_call(&app, "POST", "/step", Some(json!({ "rounds": 5 })))
                .await
                .1
        }
    });
    let (a, b) = (a.await.unwrap(), b.await.unwrap());
    let mut starts: Vec<u64> = [&a, &b]
        .iter()
        .map(|r| r["metrics"][0]["round"].as_u64().unwrap())
        .collect();
    starts.sort();
    assert_eq!(starts, vec![0, 5]);
    let (_, state) = json_call(&app, "GET", "/state", None).await;
    assert_eq!(state["round"], 10);
}

#[tokio::test]
async fn api_driven_run_matches_the_scenario_log() {
    let mut scenario = split16();
    scenario.stop_on_convergence = false;
    let cli_log = to_jsonl(&sim::run(&scenario).unwrap().log);

    // replay the same commands by hand
    let app = app();
    json_call(
        &app,
        "POST",
        "/network",
        Some(json!({ "n": 16, "seed": scenario.seed })),
    )
    .await;
    let mut round = 0;
    for ev in &scenario.events {
        if ev.round > round {
            json_call(
                &app,
                "POST",
                "/step",
                Some(json!({ "rounds": ev.round - round })),
            )
            .await;
            round = ev.round;
        }
        let (path, body) = match serde_json::to_value(&ev.kind).unwrap() {
            Value::Object(mut o) => {
                let kind = o.remove("kind").unwrap();
                (format!("/{}", kind.as_str().unwrap()), Value::Object(o))
            }
            _ => unreachable!(),
        };
        let (s, _) = json_call(&app, "POST", &path, Some(body)).await;
        assert_eq!(s, StatusCode::OK, "{path}");
    }
    json_call(
        &app,
        "POST",
        "/step",
        Some(json!({ "rounds": scenario.max_rounds - round })),
    )
    .await;
    let (_, api_log) = call(&app, "GET", "/events", None).await;
    assert_eq!(api_log, cli_log);
}

#[tokio::test]
async fn scenario_session_fires_events_while_stepping() {
    let scenario = split16();
    let expected = sim::run(&scenario).unwrap();
    let app = router(Arc::new(Mutex::new(
        Session::with_scenario(&scenario).unwrap(),
    )));
    json_call(
        &app,
        "POST",
        "/step",
        Some(json!({ "rounds": expected.metrics.len() })),
    )
    .await;
    let (_, log) = call(&app, "GET", "/events", None).await;
    assert_eq!(log, to_jsonl(&expected.log));
}
