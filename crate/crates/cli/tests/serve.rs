mod support;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use lcot_cli::serve::router;
use lcot_cli::Loaded;
use serde_json::Value;
use support::{code, demo, stderr, Demo};
use tower::ServiceExt;

fn app() -> (Demo, Router) {
    let d = demo(|_| {});
    let out = d.pipeline(&[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let loaded = Loaded::from_path(&d.config).unwrap();
    let r = router(&loaded).unwrap();
    (d, r)
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let body = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, body)
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn post(uri: &str, body: &str) -> Request<Body> {
    Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

fn assert_envelope(body: &Value, code: &str) {
    assert_eq!(body["code"], code, "{body}");
    assert!(body["message"].as_str().is_some_and(|m| !m.is_empty()));
    assert!(body.get("detail").is_some());
}

#[tokio::test]
async fn search_chain_and_article_routes() {
    let (_d, app) = app();
    let (status, body) = call(&app, get("/search?q=Instanton&k=4")).await;
    assert_eq!(status, StatusCode::OK);
    let hits = body["hits"].as_array().unwrap();
    assert_eq!(hits.len(), 4);
    let qa_id = hits[0]["qa_id"].as_str().unwrap().to_string();

    let (status, chain) = call(&app, get(&format!("/chain/{qa_id}"))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(chain["qa_id"], qa_id.as_str());
    assert!(chain["chain_text"].as_str().unwrap().contains("FINAL_ANSWER"));

    let (status, article) = call(&app, get("/article/Instanton")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(article["keyword"], "Instanton");
    for ids in article["provenance"].as_object().unwrap().values() {
        for id in ids.as_array().unwrap() {
            let (s, _) = call(&app, get(&format!("/chain/{}", id.as_str().unwrap()))).await;
            assert_eq!(s, StatusCode::OK, "{id}");
        }
    }

    let (status, page) = call(&app, post("/article", r#"{"keyword":"Path integral"}"#)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(page["article"]["keyword"], "Path integral");
    assert!(page["scaffold"]["what_why"].as_array().is_some());
}

#[tokio::test]
async fn hierarchy_route_serves_the_tree() {
    let (_d, app) = app();
    let (status, tree) = call(&app, get("/hierarchy")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(tree["root"]["id"], "0");
    assert!(tree["root"]["size"].as_u64().unwrap() > 0);
}

#[tokio::test]
async fn errors_use_the_json_envelope() {
    let (d, app) = app();
    let (status, body) = call(&app, get("/search?q=Phlogiston")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_envelope(&body, "no_coverage");
    let (status, body) = call(&app, get("/search?q=%20")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_envelope(&body, "bad_request");
    let (status, body) = call(&app, get("/chain/missing")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_envelope(&body, "not_found");
    let (status, body) = call(&app, get("/article/Phlogiston")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_envelope(&body, "not_found");
    let (status, body) = call(&app, post("/article", r#"{"keyword":"Phlogiston"}"#)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_envelope(&body, "no_coverage");
    let (status, body) = call(&app, get("/no/such/route")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_envelope(&body, "not_found");

    std::fs::remove_file(d.work().join("tree.json")).unwrap();
    let (status, body) = call(&app, get("/hierarchy")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_envelope(&body, "not_found");
}

#[tokio::test]
async fn mcp_bridge_is_mounted() {
    let (_d, app) = app();
    let (status, body) = call(&app, post("/mcp", r#"{"jsonrpc":"2.0","id":7,"method":"tools/list"}"#)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["id"], 7);
    assert_eq!(body["result"]["tools"].as_array().unwrap().len(), 7);
    let (status, _) = call(&app, post("/mcp", r#"{"jsonrpc":"2.0","method":"notifications/initialized"}"#)).await;
    assert_eq!(status, StatusCode::ACCEPTED);
}

#[test]
fn serve_requires_a_built_corpus() {
    let d = demo(|_| {});
    let loaded = Loaded::from_path(&d.config).unwrap();
    let err = router(&loaded).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.message.contains("lcot pipeline"));
}
