mod support;

use std::io::Cursor;
use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use lcot_mcp::{http_router, serve_stdio, TOOL_NAMES};
use serde_json::Value;
use support::*;
use support::golden;
use tower::ServiceExt;

#[test]
fn golden_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let bless = std::env::var_os("LCOT_BLESS").is_some();
    let failures = golden::mismatches(&server(dir.path(), 2), bless);
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn manifest_publishes_the_seven_tools_with_their_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let reply = server(dir.path(), 1)
        .handle(r#"{"jsonrpc":"2.0","id":1,"method":"tools/list"}"#)
        .unwrap();
    let v: Value = serde_json::from_str(&reply).unwrap();
    let tools = v["result"]["tools"].as_array().unwrap();
    let names: Vec<&str> = tools.iter().map(|t| t["name"].as_str().unwrap()).collect();
    assert_eq!(names, TOOL_NAMES);
    let expected: [(&str, &[&str]); 7] = [
        ("generate_article", &["topic", "language", "style_guide", "model_name"]),
        ("generate_problems", &["subject", "field", "count", "education_level"]),
        ("solve_problems", &["subject", "field", "problems"]),
        ("list_supported_languages", &[]),
        ("execute_code", &["language", "code", "timeout"]),
        ("execute_codes_parallel", &["language", "code_list", "timeout"]),
        (
            "compute_score_parallel",
            &["data_source", "solution_list", "ground_truth_list", "extra_info_list", "timeout"],
        ),
    ];
    for (tool, (name, params)) in tools.iter().zip(expected) {
        assert_eq!(tool["name"], name);
        let props: Vec<&str> = tool["inputSchema"]["properties"]
            .as_object()
            .unwrap()
            .keys()
            .map(String::as_str)
            .collect();
        assert_eq!(props, params, "{name}");
    }
    let schema = |i: usize, p: &str| tools[i]["inputSchema"]["properties"][p].clone();
    assert_eq!(schema(1, "education_level")["default"], "advanced_undergraduate");
    assert_eq!(schema(4, "timeout")["default"], 10.0);
    assert_eq!(schema(5, "timeout")["default"], 10.0);
    assert_eq!(schema(6, "timeout")["default"], 30.0);
    assert_eq!(schema(4, "timeout")["type"], "number");
    let problems = schema(2, "problems");
    let problem_props: Vec<&str> = problems["items"]["properties"]
        .as_object()
        .unwrap()
        .keys()
        .map(String::as_str)
        .collect();
    assert_eq!(problem_props, ["task_id", "problem", "answer_type", "solution", "answer"]);
}

#[test]
fn stdio_answers_requests_and_skips_notifications() {
    let dir = tempfile::tempdir().unwrap();
    let server = server(dir.path(), 1);
    let input = [
        r#"{"jsonrpc":"2.0","id":1,"method":"initialize","params":{}}"#,
        r#"{"jsonrpc":"2.0","method":"notifications/initialized"}"#,
        "",
        r#"{"jsonrpc":"2.0","id":2,"method":"ping"}"#,
        &call_message(3, "execute_code", r#"{"language":"python","code":"print('hello')"}"#),
    ]
    .join("\n");
    let mut out = Vec::new();
    serve_stdio(&server, Cursor::new(input), &mut out).unwrap();
    let lines: Vec<&str> = std::str::from_utf8(&out).unwrap().lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].contains("\"protocolVersion\":\"2024-11-05\""));
    assert_eq!(lines[1], r#"{"jsonrpc":"2.0","id":2,"result":{}}"#);
    let payload = call_payload(lines[2]);
    assert_eq!(payload["stdout"], "hello\n");
}

#[test]
fn http_bridge_serves_the_same_bytes_as_stdio() {
    let dir = tempfile::tempdir().unwrap();
    let server = Arc::new(server(dir.path(), 1));
    let message = call_message(
        4,
        "solve_problems",
        r#"{"subject":"physics","field":"tunneling","problems":[{"task_id":1,"problem":"T?","answer_type":"calculation"}]}"#,
    );
    let direct = server.handle(&message).unwrap();
    let mut piped = Vec::new();
    serve_stdio(&server, Cursor::new(message.clone()), &mut piped).unwrap();
    assert_eq!(String::from_utf8(piped).unwrap(), format!("{direct}\n"));

    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
    let (status, body) = rt.block_on(async {
        let response = http_router(server.clone())
            .oneshot(Request::post("/mcp").body(Body::from(message)).unwrap())
            .await
            .unwrap();
        let status = response.status();
        let bytes = axum::body::to_bytes(response.into_body(), usize::MAX).await.unwrap();
        (status, bytes)
    });
    assert_eq!(status, 200);
    assert_eq!(std::str::from_utf8(&body).unwrap(), direct);

    let notification = rt.block_on(async {
        http_router(server)
            .oneshot(
                Request::post("/mcp")
                    .body(Body::from(r#"{"jsonrpc":"2.0","method":"notifications/initialized"}"#))
                    .unwrap(),
            )
            .await
            .unwrap()
            .status()
    });
    assert_eq!(notification, 202);
}

#[test]
fn tool_failures_are_results_and_argument_errors_are_protocol_errors() {
    let dir = tempfile::tempdir().unwrap();
    let server = server(dir.path(), 1);
    let reply = server
        .handle(&call_message(1, "execute_code", r#"{"language":"julia","code":"1"}"#))
        .unwrap();
    let v: Value = serde_json::from_str(&reply).unwrap();
    assert_eq!(v["result"]["isError"], true);
    assert!(v["result"]["content"][0]["text"].as_str().unwrap().contains("julia"));

    let reply = server
        .handle(&call_message(2, "generate_problems", r#"{"subject":"physics","field":"x","count":0}"#))
        .unwrap();
    let v: Value = serde_json::from_str(&reply).unwrap();
    assert_eq!(v["error"]["code"], -32602);

    let reply = server.handle(r#"{"id":3,"method":"ping"}"#).unwrap();
    let v: Value = serde_json::from_str(&reply).unwrap();
    assert_eq!(v["error"]["code"], -32600);
    let reply = server.handle(r#"[1,2]"#).unwrap();
    let v: Value = serde_json::from_str(&reply).unwrap();
    assert_eq!(v["error"]["code"], -32600);
}
