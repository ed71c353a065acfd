use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use medqa::service::{router, AppState};
use medqa::stack::StackArgs;
use serde_json::{json, Value};
use tower::ServiceExt;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn graph_only() -> StackArgs {
    StackArgs {
        graph: Some(data("graph.jsonl")),
        dict: Some(data("dict.txt")),
        top_k: 3,
        fuzzy_floor: 0.8,
        ..StackArgs::default()
    }
}

fn app(args: &StackArgs) -> (Router, Arc<AppState>) {
    let state = AppState::new(args.load().unwrap());
    (router(state.clone()), state)
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let res = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = res.status();
    let bytes = axum::body::to_bytes(res.into_body(), usize::MAX).await.unwrap();
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into_owned()))
    };
    (status, v)
}

fn assert_chat_shape(v: &Value) {
    let source = v["source"].as_str().expect("source");
    assert!(["kg", "qa", "none"].contains(&source), "{v}");
    assert!(v["text"].is_string(), "{v}");
    assert!(v["alternatives"].is_array(), "{v}");
    assert!(v["items"].is_array(), "{v}");
    assert!(v["diagnostics"]["entities"].is_array(), "{v}");
    assert!(v["diagnostics"]["intent"].is_string(), "{v}");
    assert!(v["snapshot"].is_u64(), "{v}");
    for a in v["alternatives"].as_array().unwrap() {
        assert!(a["question"].is_string() && a["answer"].is_string());
        let s = a["similarity"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&s));
    }
}

#[tokio::test]
async fn chat_answers_symptom_question_from_graph() {
    let (app, _) = app(&graph_only());
    let (status, v) = call(&app, Method::POST, "/chat", Some(json!({"text": "What are the symptoms of cold?"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_chat_shape(&v);
    assert_eq!(v["source"], "kg");
    assert!(v["text"].as_str().unwrap().contains("fever"));
    assert_eq!(v["diagnostics"]["intent"], "Symptom");
}

#[tokio::test]
async fn chat_falls_back_to_the_corpus() {
    let args = StackArgs {
        vectors: Some(data("toy/toy_vectors.txt")),
        model: Some(data("toy/toy_model.json")),
        qa: Some(data("qa.jsonl")),
        ..graph_only()
    };
    let (app, _) = app(&args);
    let q = "Does weed give you lung cancer?";
    let (status, v) = call(&app, Method::POST, "/chat", Some(json!({ "text": q }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_chat_shape(&v);
    assert_eq!(v["source"], "qa");
    assert_eq!(v["alternatives"][0]["question"], q);
    let s = v["alternatives"][0]["similarity"].as_f64().unwrap();
    assert!((s - 1.0).abs() < 1e-9, "{s}");
}

#[tokio::test]
async fn empty_or_malformed_chat_is_a_client_error() {
    let (app, _) = app(&graph_only());
    let (status, v) = call(&app, Method::POST, "/chat", Some(json!({"text": "   "}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["error"].is_string());
    let (status, _) = call(&app, Method::POST, "/chat", Some(json!({"question": "hi"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn graph_edits_are_visible_to_the_next_chat() {
    let (app, _) = app(&graph_only());
    let (_, v) = call(&app, Method::POST, "/chat", Some(json!({"text": "What are the symptoms of measles?"}))).await;
    assert_eq!(v["source"], "none");

    let (status, v) = call(&app, Method::POST, "/kg/entities", Some(json!({"kind": "disease", "name": "measles"}))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["snapshot"], 1);
    let (status, v) = call(&app, Method::POST, "/kg/entities", Some(json!({"kind": "symptom", "name": "rash"}))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let (status, v) = call(
        &app,
        Method::POST,
        "/kg/relationships",
        Some(json!({"kind": "have_symptom", "from": "measles", "to": "rash"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["created"], true);
    assert_eq!(v["snapshot"], 3);

    let (_, v) = call(&app, Method::POST, "/chat", Some(json!({"text": "What are the symptoms of measles?"}))).await;
    assert_eq!(v["source"], "kg", "{v}");
    assert_eq!(v["items"], json!(["rash"]));
    assert_eq!(v["snapshot"], 3);

    let (_, v) = call(
        &app,
        Method::POST,
        "/kg/relationships",
        Some(json!({"kind": "have_symptom", "from": "measles", "to": "rash"})),
    )
    .await;
    assert_eq!(v["created"], false);
    assert_eq!(v["snapshot"], 3);
}

#[tokio::test]
async fn invalid_graph_edits_are_rejected() {
    let (app, state) = app(&graph_only());
    let (status, _) = call(
        &app,
        Method::POST,
        "/kg/relationships",
        Some(json!({"kind": "have_symptom", "from": "cold", "to": "no such symptom"})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(
        &app,
        Method::POST,
        "/kg/entities",
        Some(json!({"kind": "symptom", "name": "fever", "properties": {"description": "x"}})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, Method::POST, "/kg/entities", Some(json!({"kind": "planet", "name": "mars"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(state.snapshot().version, 0);
}

#[tokio::test]
async fn entity_listing_filters_by_kind() {
    let (app, _) = app(&graph_only());
    let (status, v) = call(&app, Method::GET, "/kg/entities?kind=symptom", None).await;
    assert_eq!(status, StatusCode::OK);
    let names: Vec<&str> = v["entities"].as_array().unwrap().iter().map(|e| e["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"fever"));
    assert!(!names.contains(&"cold"));
    let (_, all) = call(&app, Method::GET, "/kg/entities", None).await;
    assert!(all["entities"].as_array().unwrap().len() > names.len());
    let (status, _) = call(&app, Method::GET, "/kg/entities?kind=planet", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn qa_records_are_paged() {
    let args = StackArgs {
        qa: Some(data("qa.jsonl")),
        ..graph_only()
    };
    let (app, _) = app(&args);
    let (status, v) = call(&app, Method::GET, "/qa/records?offset=1&limit=2", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["total"], 5);
    assert_eq!(v["offset"], 1);
    assert_eq!(v["records"].as_array().unwrap().len(), 2);
    assert_eq!(v["records"][0]["question"], "How do you treat sawdust allergy?");
    assert_eq!(v["records"][0]["source_tag"], "ehealthforum");
    let (_, v) = call(&app, Method::GET, "/qa/records?offset=10", None).await;
    assert_eq!(v["records"], json!([]));
    let (status, _) = call(&app, Method::GET, "/qa/records?limit=-1", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn model_can_be_inspected_and_reloaded() {
    let args = StackArgs {
        vectors: Some(data("toy/toy_vectors.txt")),
        qa: Some(data("qa.jsonl")),
        ..graph_only()
    };
    let (app, _) = app(&args);
    let (_, v) = call(&app, Method::GET, "/model", None).await;
    assert_eq!(v["loaded"], false);
    assert_eq!(v["qa_indexed"], false);

    let (status, v) = call(&app, Method::POST, "/model", Some(json!({"path": data("toy/toy_model.json")}))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["loaded"], true);
    assert_eq!(v["qa_indexed"], true);
    assert_eq!(v["embedding_dim"], 16);
    assert_eq!(v["snapshot"], 1);

    let (_, v) = call(&app, Method::POST, "/chat", Some(json!({"text": "Is high blood pressure hereditary?"}))).await;
    assert_eq!(v["source"], "qa", "{v}");

    let (status, v) = call(&app, Method::POST, "/model", Some(json!({"path": "/no/such/model.json"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("/no/such/model.json"));
}

#[tokio::test]
async fn model_reload_needs_vectors() {
    let (app, _) = app(&graph_only());
    let (status, _) = call(&app, Method::POST, "/model", Some(json!({"path": data("toy/toy_model.json")}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn healthz_reports_ok() {
    let (app, _) = app(&graph_only());
    let (status, v) = call(&app, Method::GET, "/healthz", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["status"], "ok");
    assert_eq!(v["snapshot"], 0);
}

#[tokio::test]
async fn cors_preflight_is_allowed() {
    let (app, _) = app(&graph_only());
    let req = Request::builder()
        .method(Method::OPTIONS)
        .uri("/chat")
        .header("origin", "http://localhost:5173")
        .header("access-control-request-method", "POST")
        .body(Body::empty())
        .unwrap();
    let res = app.oneshot(req).await.unwrap();
    assert!(res.status().is_success());
    assert_eq!(res.headers()["access-control-allow-origin"], "*");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_chats_see_whole_snapshots() {
    let (app, _) = app(&graph_only());
    let mut tasks = Vec::new();
    for k in 0..40u64 {
        let app = app.clone();
        tasks.push(tokio::spawn(async move {
            if k % 2 == 0 {
                let body = json!({"kind": "disease", "name": "cold", "properties": {"description": format!("rev {k}")}});
                let (s, v) = call(&app, Method::POST, "/kg/entities", Some(body)).await;
                assert_eq!(s, StatusCode::OK);
                (v["snapshot"].as_u64().unwrap(), Some(k), None)
            } else {
                let (s, v) = call(&app, Method::POST, "/chat", Some(json!({"text": "describe cold"}))).await;
                assert_eq!(s, StatusCode::OK);
                (v["snapshot"].as_u64().unwrap(), None, Some(v["text"].as_str().unwrap().to_string()))
            }
        }));
    }
    let mut rev_of = std::collections::HashMap::new();
    let mut chats = Vec::new();
    for t in tasks {
        match t.await.unwrap() {
            (snap, Some(k), None) => {
                rev_of.insert(snap, k);
            }
            (snap, None, Some(text)) => chats.push((snap, text)),
            _ => unreachable!(),
        }
    }
    assert_eq!(rev_of.len(), 20);
    for (snap, text) in chats {
        match rev_of.get(&snap) {
            Some(k) => assert_eq!(text, format!("cold: rev {k}")),
            None => {
                assert_eq!(snap, 0);
                assert_eq!(text, "cold: A common viral infection of the nose and throat.");
            }
        }
    }
}
