//! Recorded request and response pairs with wall-clock values masked.

use std::path::{Path, PathBuf};

use serde_json::Value;

pub const CASES: [&str; 15] = [
    "initialize",
    "tools_list",
    "generate_article",
    "generate_article_styled",
    "generate_article_unknown_model",
    "generate_problems",
    "solve_problems",
    "list_supported_languages",
    "execute_code",
    "execute_codes_parallel",
    "compute_score_parallel",
    "negative_timeout",
    "unknown_tool",
    "unknown_method",
    "parse_error",
];

pub const TIMING_FIELDS: [&str; 2] = ["elapsed_s", "execution_time_s"];

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../mcp/tests/fixtures/golden")
}

fn zero_timing(v: &mut Value) {
    match v {
        Value::Object(m) => {
            for (k, x) in m.iter_mut() {
                if TIMING_FIELDS.contains(&k.as_str()) {
                    *x = Value::from(0.0);
                } else {
                    zero_timing(x);
                }
            }
        }
        Value::Array(a) => a.iter_mut().for_each(zero_timing),
        _ => {}
    }
}

/// Replaces wall-clock values in a tool reply; other replies pass through untouched.
pub fn stable(reply: &str) -> String {
    let mut outer: Value = serde_json::from_str(reply).unwrap();
    let Some(text) = outer
        .pointer("/result/content/0/text")
        .and_then(Value::as_str)
        .map(str::to_string)
    else {
        return reply.to_string();
    };
    if !TIMING_FIELDS.iter().any(|f| text.contains(&format!("\"{f}\""))) {
        return reply.to_string();
    }
    let mut inner: Value = serde_json::from_str(&text).unwrap();
    zero_timing(&mut inner);
    outer["result"]["content"][0]["text"] = Value::String(inner.to_string());
    outer.to_string()
}

/// Cases whose masked reply differs from the recorded one, with both sides.
pub fn mismatches(server: &lcot_mcp::McpServer, bless: bool) -> Vec<String> {
    let mut failures = vec![];
    for case in CASES {
        let request = std::fs::read_to_string(golden_dir().join(format!("{case}.request.json"))).unwrap();
        let reply = server.handle(request.trim_end()).expect("requests carry ids");
        let got = format!("{}\n", stable(&reply));
        let path = golden_dir().join(format!("{case}.response.json"));
        if bless {
            std::fs::write(&path, &got).unwrap();
            continue;
        }
        let want = std::fs::read_to_string(&path).unwrap_or_default();
        if got != want {
            failures.push(format!("{case}:\n got  {got}\n want {want}"));
        }
    }
    failures
}
