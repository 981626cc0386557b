#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use chartseq_core::design_space::{enumerate_space, DesignSpace, FieldRef};
use chartseq_core::model::ModelFile;
use chartseq_core::reward::CostTable;
use chartseq_server::{router, AppState};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn read_data(name: &str) -> Vec<u8> {
    std::fs::read(data_dir().join(name)).unwrap()
}

pub fn reference_space() -> DesignSpace {
    let schema: Vec<FieldRef> = serde_json::from_slice(&read_data("schema.cars.json")).unwrap();
    let config = serde_json::from_slice(&read_data("reference_space.config.json")).unwrap();
    enumerate_space(&schema, &config).unwrap()
}

pub fn sample_models() -> Vec<ModelFile> {
    ["anomaly", "cluster", "correlation"]
        .iter()
        .map(|t| ModelFile::from_json(&read_data(&format!("models/{t}.json"))).unwrap())
        .collect()
}

pub fn default_costs() -> CostTable {
    CostTable::from_json(&read_data("costs.default.json")).unwrap()
}

pub fn sample_state(seed: u64) -> Arc<AppState> {
    AppState::new(reference_space(), sample_models(), default_costs(), seed, None).unwrap()
}

/// Writes the space and models into `dir` and returns a service config file.
pub fn write_service_dir(dir: &Path, log: bool) -> PathBuf {
    let space = reference_space();
    std::fs::write(dir.join("space.json"), space.to_json()).unwrap();
    std::fs::create_dir_all(dir.join("models")).unwrap();
    for m in sample_models() {
        std::fs::write(dir.join("models").join(format!("{}.json", m.task)), m.to_json()).unwrap();
    }
    std::fs::write(dir.join("costs.json"), read_data("costs.default.json")).unwrap();
    let mut config = serde_json::json!({
        "port": 0,
        "model_dir": "models",
        "space_file": "space.json",
        "cost_file": "costs.json",
        "seed": 3
    });
    if log {
        config["session_log"] = "sessions.jsonl".into();
    }
    let path = dir.join("service.json");
    std::fs::write(&path, config.to_string()).unwrap();
    path
}

pub struct Reply {
    pub status: StatusCode,
    pub body: Value,
}

pub async fn call(app: &Arc<AppState>, method: &str, uri: &str, body: Option<Value>) -> Reply {
    call_with(app, method, uri, body, None).await
}

pub async fn call_with(app: &Arc<AppState>, method: &str, uri: &str, body: Option<Value>, accept: Option<&str>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(a) = accept {
        req = req.header("accept", a);
    }
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = router(app.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    Reply { status, body }
}

pub fn hp_bar() -> Value {
    serde_json::json!({
        "mark": "bar",
        "channels": {"x": {"field": {"name": "Horsepower", "kind": "quantitative"}}},
        "filter": false
    })
}
