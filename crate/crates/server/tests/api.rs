mod common;

use axum::http::StatusCode;
use chartseq_core::design_space::{enumerate_space, EnumerationConfig, FieldKind, FieldRef, Mark};
use chartseq_server::AppState;
use common::*;
use serde_json::{json, Value};

async fn new_session(app: &std::sync::Arc<AppState>, task: &str, start: Option<Value>) -> Value {
    let mut body = json!({ "task": task });
    if let Some(s) = start {
        body["start"] = s;
    }
    let r = call(app, "POST", "/api/sessions", Some(body)).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.body);
    r.body
}

fn recommend_uri(id: &str) -> String {
    format!("/api/sessions/{id}/recommend")
}

#[tokio::test]
async fn tasks_list_loaded_models_with_defaults() {
    let app = sample_state(0);
    let r = call(&app, "GET", "/api/tasks", None).await;
    assert_eq!(r.status, StatusCode::OK);
    let names: Vec<&str> = r.body.as_array().unwrap().iter().map(|t| t["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["anomaly", "cluster", "correlation"]);
    for t in r.body.as_array().unwrap() {
        assert_eq!(t["lambda"], 0.3);
        assert_eq!(t["gamma"], 0.99);
        assert_eq!(t["model_available"], true);
    }

    let empty = AppState::new(reference_space(), vec![], default_costs(), 0, None).unwrap();
    let r = call(&empty, "GET", "/api/tasks", None).await;
    assert_eq!((r.status, r.body), (StatusCode::OK, json!([])));
}

#[tokio::test]
async fn non_json_accept_is_refused() {
    let app = sample_state(0);
    let r = call_with(&app, "GET", "/api/tasks", None, Some("text/html")).await;
    assert_eq!(r.status, StatusCode::NOT_ACCEPTABLE);
    assert_eq!(r.body["error"], "not-acceptable");
    let r = call_with(&app, "GET", "/api/tasks", None, Some("text/html, application/json;q=0.5")).await;
    assert_eq!(r.status, StatusCode::OK);
}

#[tokio::test]
async fn session_starts_where_asked_and_reads_back() {
    let app = sample_state(0);
    let created = new_session(&app, "cluster", Some(hp_bar())).await;
    assert_eq!(created["state"], hp_bar());
    assert_eq!(created["start"], hp_bar());
    assert_eq!(created["history"], json!([]));
    let id = created["id"].as_str().unwrap();
    let r = call(&app, "GET", &format!("/api/sessions/{id}"), None).await;
    assert_eq!((r.status, &r.body), (StatusCode::OK, &created));
}

#[tokio::test]
async fn omitted_start_is_seeded() {
    let starts = |seed| async move {
        let app = sample_state(seed);
        let mut out = vec![];
        for _ in 0..3 {
            out.push(new_session(&app, "anomaly", None).await["state"].clone());
        }
        out
    };
    let a = starts(5).await;
    assert_eq!(a, starts(5).await);
    assert_ne!(a, starts(6).await);
}

#[tokio::test]
async fn bad_session_requests_are_rejected() {
    let app = sample_state(0);
    // shape errors never reach the model
    let r = call(&app, "POST", "/api/sessions", Some(json!({"task": "cluster", "start": {"mark": "pie"}}))).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let r = call(&app, "POST", "/api/sessions", Some(json!({"task": "cluster", "colour": 1}))).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    // well-formed but outside the design space: this space never aggregates x
    let mut off = hp_bar();
    off["channels"]["x"]["aggregate"] = json!(true);
    let r = call(&app, "POST", "/api/sessions", Some(json!({"task": "cluster", "start": off}))).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY, "{}", r.body);
    let r = call(&app, "POST", "/api/sessions", Some(json!({"task": "sorting"}))).await;
    assert_eq!((r.status, r.body["error"].as_str()), (StatusCode::NOT_FOUND, Some("unknown-task")));
    let r = call(&app, "GET", "/api/sessions/s999", None).await;
    assert_eq!((r.status, r.body["error"].as_str()), (StatusCode::NOT_FOUND, Some("unknown-session")));
    let r = call(&app, "POST", &recommend_uri("s999"), Some(json!({}))).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn recommendations_are_sorted_bounded_and_stable() {
    let app = sample_state(0);
    let id = new_session(&app, "correlation", Some(hp_bar())).await["id"].as_str().unwrap().to_string();
    let space = app.space();
    let start = space.state_index(&serde_json::from_value(hp_bar()).unwrap()).unwrap();
    let degree = space.neighbors(start).unwrap().len();
    assert!(degree > 10);

    let r = call(&app, "POST", &recommend_uri(&id), Some(json!({}))).await;
    assert_eq!(r.status, StatusCode::OK);
    let recs = r.body["recommendations"].as_array().unwrap();
    assert_eq!(recs.len(), 10);
    let scores: Vec<f64> = recs.iter().map(|x| x["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(r.body["state"], hp_bar());

    let all = call(&app, "POST", &recommend_uri(&id), Some(json!({"k": 1000}))).await;
    assert_eq!(all.body["recommendations"].as_array().unwrap().len(), degree);
    assert_eq!(&all.body["recommendations"].as_array().unwrap()[..10], &recs[..]);
    let again = call(&app, "POST", &recommend_uri(&id), Some(json!({}))).await;
    assert_eq!(again.body, r.body);

    let zero = call(&app, "POST", &recommend_uri(&id), Some(json!({"k": 0}))).await;
    assert_eq!(zero.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn applying_a_recommendation_moves_the_session() {
    let app = sample_state(0);
    let id = new_session(&app, "cluster", Some(hp_bar())).await["id"].as_str().unwrap().to_string();
    let top = call(&app, "POST", &recommend_uri(&id), Some(json!({"k": 1}))).await.body["recommendations"][0].clone();
    let r = call(&app, "POST", &format!("/api/sessions/{id}/apply"), Some(json!({"action": top["action"]}))).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    assert_eq!(r.body["state"], top["successor"]);
    assert_eq!(r.body["start"], hp_bar());
    let history = r.body["history"].as_array().unwrap();
    assert_eq!(history.len(), 1);
    assert_eq!(history[0]["action"], top["action"]);
    assert_eq!(history[0]["state"], top["successor"]);
    assert!(chrono::DateTime::parse_from_rfc3339(history[0]["timestamp"].as_str().unwrap()).is_ok());
    // the list now reflects the new chart
    let next = call(&app, "POST", &recommend_uri(&id), Some(json!({}))).await;
    assert_eq!(next.body["state"], top["successor"]);
}

#[tokio::test]
async fn inapplicable_action_leaves_state_alone() {
    let app = sample_state(0);
    let id = new_session(&app, "cluster", Some(hp_bar())).await["id"].as_str().unwrap().to_string();
    let before = call(&app, "GET", &format!("/api/sessions/{id}"), None).await.body;
    // no y channel to aggregate yet
    let r = call(
        &app,
        "POST",
        &format!("/api/sessions/{id}/apply"),
        Some(json!({"action": {"kind": "add-aggregate", "channel": "y"}})),
    )
    .await;
    assert_eq!((r.status, r.body["error"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("inapplicable-action")));
    let r = call(&app, "POST", &format!("/api/sessions/{id}/apply"), Some(json!({"action": {"kind": "explode"}}))).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let after = call(&app, "GET", &format!("/api/sessions/{id}"), None).await.body;
    assert_eq!(before, after);
}

#[tokio::test]
async fn sample_demos_replay_through_the_api() {
    let app = sample_state(0);
    let text = String::from_utf8(read_data("demos.sample.jsonl")).unwrap();
    for line in text.lines() {
        let rec: Value = serde_json::from_str(line).unwrap();
        let steps = rec["steps"].as_array().unwrap();
        let task = rec["task"].as_str().unwrap();
        let id = new_session(&app, task, Some(steps[0]["state"].clone())).await["id"].as_str().unwrap().to_string();
        let mut view = Value::Null;
        for pair in steps[1..].chunks(2) {
            let r = call(&app, "POST", &format!("/api/sessions/{id}/apply"), Some(json!({"action": pair[0]["action"]}))).await;
            assert_eq!(r.status, StatusCode::OK);
            assert_eq!(r.body["state"], pair[1]["state"]);
            view = r.body;
        }
        assert_eq!(view["history"].as_array().unwrap().len(), steps.len() / 2);
    }
}

#[tokio::test]
async fn sessions_do_not_share_state() {
    let app = sample_state(0);
    let a = new_session(&app, "cluster", Some(hp_bar())).await["id"].as_str().unwrap().to_string();
    let b = new_session(&app, "cluster", Some(hp_bar())).await["id"].as_str().unwrap().to_string();
    assert_ne!(a, b);
    let b_before = call(&app, "GET", &format!("/api/sessions/{b}"), None).await.body;
    let action = json!({"kind": "change-mark", "mark": "point"});
    let handles: Vec<_> = (0..4)
        .map(|i| {
            let (app, a, action) = (app.clone(), a.clone(), action.clone());
            tokio::spawn(async move {
                if i == 0 {
                    call(&app, "POST", &format!("/api/sessions/{a}/apply"), Some(json!({"action": action}))).await.status
                } else {
                    call(&app, "POST", &recommend_uri(&a), Some(json!({}))).await.status
                }
            })
        })
        .collect();
    for h in handles {
        assert_eq!(h.await.unwrap(), StatusCode::OK);
    }
    assert_eq!(call(&app, "GET", &format!("/api/sessions/{b}"), None).await.body, b_before);
    let a_now = call(&app, "GET", &format!("/api/sessions/{a}"), None).await.body;
    assert_eq!(a_now["state"]["mark"], "point");
}

#[tokio::test]
async fn dead_end_cannot_be_recommended_from() {
    let hp = FieldRef::new("Horsepower", FieldKind::Quantitative);
    let config = EnumerationConfig { marks: vec![Mark::Bar], ..EnumerationConfig::x_only() };
    let space = enumerate_space(&[hp], &config).unwrap();
    assert_eq!((space.len(), space.graph().num_edges()), (1, 0));
    let mut model = sample_models().remove(0);
    model.space_fingerprint = space.fingerprint().to_string();
    let app = AppState::new(space, vec![model], default_costs(), 0, None).unwrap();
    let id = new_session(&app, "anomaly", Some(hp_bar())).await["id"].as_str().unwrap().to_string();
    let r = call(&app, "POST", &recommend_uri(&id), Some(json!({}))).await;
    assert_eq!((r.status, r.body["error"].as_str()), (StatusCode::CONFLICT, Some("dead-end")));
}

fn four_actions(app: &AppState) -> Vec<Value> {
    let space = app.space();
    let start = space.state_index(&serde_json::from_value(hp_bar()).unwrap()).unwrap();
    let filter = space
        .neighbors(start)
        .unwrap()
        .iter()
        .find(|t| t.action.kind_key() == "add-filter")
        .map(|t| serde_json::to_value(&t.action).unwrap())
        .unwrap();
    vec![
        json!({"kind": "add-field", "channel": "y", "field": {"name": "Cylinders", "kind": "ordinal"}}),
        json!({"kind": "add-sort", "channel": "x"}),
        filter,
        json!({"kind": "change-mark", "mark": "line"}),
    ]
}

#[tokio::test]
async fn rank_sequences_covers_every_ordering() {
    let app = sample_state(0);
    let body = json!({"task": "cluster", "source": hp_bar(), "actions": four_actions(&app)});
    let r = call(&app, "POST", "/api/rank-sequences", Some(body.clone())).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    let list = r.body.as_array().unwrap();
    assert_eq!(list.len(), 24);
    for (i, item) in list.iter().enumerate() {
        assert_eq!(item["rank"], i + 1);
        let steps = item["steps"].as_array().unwrap();
        assert_eq!(steps.len(), 9);
        assert_eq!(steps[0]["state"], hp_bar());
    }
    let scores: Vec<f64> = list.iter().map(|x| x["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(call(&app, "POST", "/api/rank-sequences", Some(body)).await.body, r.body);
}

#[tokio::test]
async fn rank_sequences_errors() {
    let app = sample_state(0);
    let add_y = json!({"kind": "add-field", "channel": "y", "field": {"name": "Horsepower", "kind": "quantitative"}});
    let agg_y = json!({"kind": "add-aggregate", "channel": "y"});
    let rank = |actions: Value| {
        let app = app.clone();
        async move { call(&app, "POST", "/api/rank-sequences", Some(json!({"task": "cluster", "source": hp_bar(), "actions": actions}))).await }
    };
    let one = rank(json!([agg_y, add_y])).await;
    assert_eq!(one.body.as_array().unwrap().len(), 1);
    assert_eq!(one.body[0]["steps"][1]["action"], add_y);
    assert_eq!(rank(json!([add_y, add_y])).await.status, StatusCode::BAD_REQUEST);
    assert_eq!(rank(json!([agg_y])).await.status, StatusCode::UNPROCESSABLE_ENTITY);
    let many: Vec<Value> = (0..9).map(|_| add_y.clone()).collect();
    assert_eq!(rank(json!(many)).await.status, StatusCode::BAD_REQUEST);
    let r = call(&app, "POST", "/api/rank-sequences", Some(json!({"task": "nope", "source": hp_bar(), "actions": []}))).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
}
