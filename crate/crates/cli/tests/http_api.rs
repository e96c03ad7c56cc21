use std::path::{Path, PathBuf};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use rulepatch_cli::server::router;
use rulepatch_cli::session::{train, PredictResponse, Session, TrainOptions};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn fresh_session(dir: &Path) -> Session {
    let opts = TrainOptions {
        data: data("tic-tac-toe.csv"),
        schema: Some(data("tic-tac-toe.schema.json")),
        label: "class".into(),
        positive_label: None,
        seed: 3,
        train_fraction: 0.8,
    };
    train(&opts, dir).unwrap()
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

async fn test_rows(app: &Router, limit: usize) -> Vec<Value> {
    let (status, page) = call(app, "GET", &format!("/instances?split=test&limit={limit}"), None).await;
    assert_eq!(status, StatusCode::OK);
    page["rows"].as_array().unwrap().iter().map(|r| r["instance"].clone()).collect()
}

async fn predict(app: &Router, instance: &Value) -> PredictResponse {
    let (status, body) = call(app, "POST", "/predict", Some(json!({ "instance": instance }))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    serde_json::from_value(body).unwrap()
}

/// A test instance whose explanation has at least two conditions, with a
/// correction that drops the last one and flips the label.
async fn correction_for(app: &Router) -> (Value, PredictResponse, Value) {
    for x in test_rows(app, 200).await {
        let r = predict(app, &x).await;
        let Some(e) = r.explanation.clone() else { continue };
        let parts: Vec<&str> = e.split(" AND ").collect();
        if parts.len() < 2 {
            continue;
        }
        let other = if r.prediction == "positive" { "negative" } else { "positive" };
        let fb = json!({
            "original": { "clause": e, "label": r.prediction },
            "corrected": { "clause": parts[..parts.len() - 1].join(" AND "), "label": other },
        });
        return (x, r, fb);
    }
    panic!("no explanation with two conditions");
}

#[tokio::test]
async fn empty_table_predictions_match_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(fresh_session(dir.path()));
    let rows = test_rows(&app, 1000).await;
    assert_eq!(rows.len(), 192);
    for x in &rows {
        let r = predict(&app, x).await;
        assert_eq!(r.sc_prediction, r.prediction);
        assert_eq!(r.hc_prediction, r.prediction);
        assert!(r.user_label.is_none() && r.feedback_rule_id.is_none());
    }
}

#[tokio::test]
async fn feedback_then_delete_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(fresh_session(dir.path()));
    let (x, before, fb) = correction_for(&app).await;

    let (status, created) = call(&app, "POST", "/feedback", Some(fb.clone())).await;
    assert_eq!(status, StatusCode::CREATED, "{created}");
    let id = created["id"].as_u64().unwrap();

    let after = predict(&app, &x).await;
    assert_eq!(after.hc_prediction, fb["corrected"]["label"]);
    assert_eq!(after.user_label.as_deref(), fb["corrected"]["label"].as_str());
    assert_eq!(after.feedback_rule_id, Some(id));
    assert_eq!(after.prediction, before.prediction);

    let (_, rules) = call(&app, "GET", "/rules", None).await;
    assert_eq!(rules.as_array().unwrap().len(), 1);
    assert_eq!(rules[0]["corrected"], fb["corrected"]);
    assert!(rules[0]["transformation_description"].is_string());

    let (status, _) = call(&app, "DELETE", &format!("/rules/{id}"), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    assert_eq!(predict(&app, &x).await, before);
    let (status, body) = call(&app, "DELETE", &format!("/rules/{id}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["kind"], "not_found");
}

#[tokio::test]
async fn conflicting_feedback_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(fresh_session(dir.path()));
    let first = json!({ "corrected": { "clause": "mm == \"o\"", "label": "negative" } });
    let (status, _) = call(&app, "POST", "/feedback", Some(first)).await;
    assert_eq!(status, StatusCode::CREATED);
    let clash = json!({ "corrected": { "clause": "mm == \"o\" AND tl == \"x\"", "label": "positive" } });
    let (status, body) = call(&app, "POST", "/feedback", Some(clash)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["conflict_with"], 0);
    assert_eq!(body["kind"], "conflict");
    let compatible = json!({ "corrected": { "clause": "mm != \"o\" AND tl == \"x\"", "label": "positive" } });
    let (status, _) = call(&app, "POST", "/feedback", Some(compatible)).await;
    assert_eq!(status, StatusCode::CREATED);
}

#[tokio::test]
async fn malformed_input_gets_400() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(fresh_session(dir.path()));
    let bad = json!({ "corrected": { "clause": "mm == \"o\" AND", "label": "negative" } });
    let (status, body) = call(&app, "POST", "/feedback", Some(bad)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["kind"], "parse");
    assert_eq!(body["position"], 10);

    let unknown = json!({ "corrected": { "clause": "zz == \"o\"", "label": "negative" } });
    let (status, body) = call(&app, "POST", "/feedback", Some(unknown)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["position"], 0);

    let (status, _) = call(&app, "POST", "/predict", Some(json!({ "instance": { "tl": "x" } }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, "POST", "/predict", Some(json!({ "nothing": 1 }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, "GET", "/instances?split=dev", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn whatif_previews_without_storing() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(fresh_session(dir.path()));
    let (x, _, fb) = correction_for(&app).await;
    let (status, preview) = call(&app, "POST", "/whatif", Some(json!({ "instance": x, "clause_override": fb }))).await;
    assert_eq!(status, StatusCode::OK, "{preview}");
    let (_, rules) = call(&app, "GET", "/rules", None).await;
    assert_eq!(rules, json!([]));
    call(&app, "POST", "/feedback", Some(fb)).await;
    let committed = predict(&app, &x).await;
    assert_eq!(serde_json::from_value::<PredictResponse>(preview).unwrap(), committed);
}

#[tokio::test]
async fn schema_and_paging() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(fresh_session(dir.path()));
    let (status, schema) = call(&app, "GET", "/schema", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(schema["labels"], json!(["negative", "positive"]));
    assert_eq!(schema["features"].as_array().unwrap().len(), 9);

    let (_, page) = call(&app, "GET", "/instances?split=train&offset=760&limit=10", None).await;
    assert_eq!(page["total"], 766);
    let rows = page["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[0]["index"], 760);
    assert!(rows[0]["label"] == "positive" || rows[0]["label"] == "negative");
    let (_, page) = call(&app, "GET", "/instances?offset=5000", None).await;
    assert_eq!(page["rows"], json!([]));
}

#[tokio::test]
async fn restart_reproduces_responses() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(fresh_session(dir.path()));
    let (_, _, fb) = correction_for(&app).await;
    call(&app, "POST", "/feedback", Some(fb.clone())).await;
    let complementary = json!({ "corrected": { "clause": "mm == \"b\" AND tl == \"b\"", "label": "negative" } });
    call(&app, "POST", "/feedback", Some(complementary)).await;

    let rows = test_rows(&app, 1000).await;
    let mut before = Vec::new();
    for x in &rows {
        before.push(predict(&app, x).await);
    }
    let (_, rules_before) = call(&app, "GET", "/rules", None).await;
    drop(app);

    let reopened = router(Session::open(dir.path()).unwrap());
    for (x, expected) in rows.iter().zip(&before) {
        assert_eq!(&predict(&reopened, x).await, expected);
    }
    let (_, rules_after) = call(&reopened, "GET", "/rules", None).await;
    assert_eq!(rules_before, rules_after);
    // ids keep counting after a reload
    let more = json!({ "corrected": { "clause": fb["corrected"]["clause"], "label": fb["corrected"]["label"] } });
    let (status, created) = call(&reopened, "POST", "/feedback", Some(more)).await;
    assert_eq!(status, StatusCode::CREATED, "{created}");
    assert_eq!(created["id"], 2);
}
