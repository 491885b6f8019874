mod support;

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use lcot_graph::synth::{clique_chain, erdos_renyi};
use lcot_graph::CommunityTree;
use support::{code, demo, lcot, stderr, stdout, Demo};

fn built() -> &'static Demo {
    static DEMO: OnceLock<Demo> = OnceLock::new();
    DEMO.get_or_init(|| {
        let d = demo(|_| {});
        let out = d.pipeline(&[]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        d
    })
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn search_finds_instanton_chains() {
    let index = built().work().join("index");
    let out = lcot(&["search", "--index", s(&index), "Instanton"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.lines().next().unwrap().trim_start().starts_with("1  "));
    assert!(text.contains("qft"));

    let out = lcot(&["search", "--index", s(&index), "Instanton", "-k", "3", "--json"]);
    assert_eq!(code(&out), 0);
    let hits: Vec<serde_json::Value> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(hits.len(), 3);
    let scores: Vec<f64> = hits.iter().map(|h| h["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    assert!(hits.iter().all(|h| h["course_id"] == "qft"));
}

#[test]
fn search_without_coverage_exits_1() {
    let index = built().work().join("index");
    let out = lcot(&["search", "--index", s(&index), "Phlogiston"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("no coverage"));
    let out = lcot(&["search", "--index", "/nonexistent/index", "Instanton"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn article_verb_writes_a_grounded_page() {
    let d = built();
    let out = lcot(&["article", "--config", s(&d.config), "Proton tunneling"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let md = stdout(&out);
    for h in ["# Proton tunneling", "## Key Takeaways", "## Introduction", "## Principles and Mechanisms", "## Cross-Domain Applications"] {
        assert!(md.contains(h), "{h}");
    }
    let out = lcot(&["article", "--config", s(&d.config), "Proton tunneling", "--json"]);
    let page: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(page["article"]["home_course"], "pchem");
    assert_eq!(page["article"]["model_name"], "mock-author-1");
    let out = lcot(&["article", "--config", s(&d.config), "Phlogiston"]);
    assert_eq!(code(&out), 1);
}

fn eval_fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/eval")
}

#[test]
fn eval_reproduces_the_frozen_comparison() {
    let fx = eval_fixtures();
    let out_dir = tempfile::tempdir().unwrap();
    let out = lcot(&[
        "eval",
        "--plato",
        s(&fx.join("plato")),
        "--baseline",
        s(&fx.join("baseline")),
        "--judge",
        s(&fx.join("judge.json")),
        "--out",
        s(out_dir.path()),
        "--workers",
        "3",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let got = std::fs::read_to_string(out_dir.path().join("comparison.csv")).unwrap();
    let want = std::fs::read_to_string(fx.join("expected_comparison.csv")).unwrap();
    assert_eq!(got, want);
    let got = std::fs::read_to_string(out_dir.path().join("articles.csv")).unwrap();
    let want = std::fs::read_to_string(fx.join("expected_articles.csv")).unwrap();
    assert_eq!(got, want);
    assert!(stdout(&out).contains("physics"));
    assert!(stderr(&out).contains("audit:"));
}

#[test]
fn eval_input_errors() {
    let fx = eval_fixtures();
    let empty = tempfile::tempdir().unwrap();
    let out_dir = tempfile::tempdir().unwrap();
    let run = |plato: &Path, baseline: &Path| {
        lcot(&[
            "eval",
            "--plato",
            s(plato),
            "--baseline",
            s(baseline),
            "--judge",
            s(&fx.join("judge.json")),
            "--out",
            s(out_dir.path()),
        ])
    };
    assert_eq!(code(&run(empty.path(), &fx.join("baseline"))), 2);
    let lone = tempfile::tempdir().unwrap();
    std::fs::copy(fx.join("plato/transmon.json"), lone.path().join("transmon.json")).unwrap();
    let other = tempfile::tempdir().unwrap();
    std::fs::copy(fx.join("baseline/eigenvalue.json"), other.path().join("eigenvalue.json")).unwrap();
    let out = run(lone.path(), other.path());
    assert_eq!(code(&out), 1, "{}", stderr(&out));
}

fn keyword_sets(graph: &lcot_graph::KeywordGraph) -> serde_json::Value {
    let pages: Vec<serde_json::Value> = (0..graph.node_count())
        .map(|i| {
            let kws: Vec<&str> = graph.neighbors(i).iter().map(|&j| graph.nodes[j as usize].as_str()).collect();
            serde_json::json!({"source_page": graph.nodes[i], "keywords": kws})
        })
        .collect();
    serde_json::Value::Array(pages)
}

#[test]
fn cluster_splits_two_cliques_from_keyword_sets() {
    let (g, _) = clique_chain(&[10, 10]);
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("sets.json");
    std::fs::write(&input, keyword_sets(&g).to_string()).unwrap();
    let out_dir = dir.path().join("out");
    let out = lcot(&["cluster", s(&input), "--out", s(&out_dir), "--seed", "3"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let tree = CommunityTree::from_json(&std::fs::read_to_string(out_dir.join("tree.json")).unwrap()).unwrap();
    assert_eq!(tree.root.children.len(), 2);
    let mut sizes: Vec<usize> = tree.root.children.iter().map(|c| c.size).collect();
    sizes.sort();
    assert_eq!(sizes, [10, 10]);
    assert!(out_dir.join("graph/nodes.tsv").exists());
}

#[test]
fn cluster_random_graph_is_root_only_and_deterministic() {
    let g = erdos_renyi(300, 0.03, 11);
    let dir = tempfile::tempdir().unwrap();
    let graph_dir = dir.path().join("graph");
    g.save(&graph_dir).unwrap();
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = lcot(&["cluster", s(&graph_dir), "--out", s(&out_dir), "--seed", "5"]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        std::fs::read_to_string(out_dir.join("tree.json")).unwrap()
    };
    let a = run("a");
    let tree = CommunityTree::from_json(&a).unwrap();
    assert!(tree.root.is_leaf());
    assert_eq!(tree.root.size, 300);
    assert_eq!(a, run("b"));
}

#[test]
fn cluster_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, "[]").unwrap();
    let out = lcot(&["cluster", s(&empty), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&out), 1);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{").unwrap();
    assert_eq!(code(&lcot(&["cluster", s(&bad), "--out", s(&dir.path().join("o"))])), 2);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&lcot(&["frobnicate"])), 2);
    assert_eq!(code(&lcot(&["search", "Instanton"])), 2);
    let d = built();
    assert_eq!(code(&lcot(&["mcp", "--config", s(&d.config)])), 2);
}

#[test]
fn mcp_stdio_answers_over_pipes() {
    use std::io::Write;
    let d = built();
    let mut child = std::process::Command::new(env!("CARGO_BIN_EXE_lcot"))
        .args(["mcp", "--config", s(&d.config), "--mcp-stdio"])
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .stderr(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    writeln!(stdin, r#"{{"jsonrpc":"2.0","id":1,"method":"initialize","params":{{"protocolVersion":"2024-11-05"}}}}"#).unwrap();
    writeln!(stdin, r#"{{"jsonrpc":"2.0","method":"notifications/initialized"}}"#).unwrap();
    writeln!(
        stdin,
        r#"{{"jsonrpc":"2.0","id":2,"method":"tools/call","params":{{"name":"generate_article","arguments":{{"topic":"Instanton","language":"en"}}}}}}"#
    )
    .unwrap();
    drop(stdin);
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines: Vec<serde_json::Value> = stdout(&out).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["result"]["serverInfo"]["name"], "lcot-mcp");
    assert_eq!(lines[1]["result"]["isError"], false);
    let payload: serde_json::Value =
        serde_json::from_str(lines[1]["result"]["content"][0]["text"].as_str().unwrap()).unwrap();
    assert_eq!(payload["model_name"], "mock-author-1");
    assert!(payload["main_content"].as_str().unwrap().contains("## Principles and Mechanisms"));
}
