//! Scripted backends and a small knowledge base for driving the tool server.
#![allow(dead_code)]

pub mod golden;
pub mod raw;

use std::path::Path;
use std::sync::Arc;

use lcot_core::consensus::{ConsensusVerdict, FinalAnswer, LCoTTrace, VerdictStatus};
use lcot_core::gateway::{mock_backend, Gateway, MockScript, RetryPolicy};
use lcot_core::search::Index;
use lcot_core::socrates::{AnswerType, Category, Curriculum, PromptSpec, TargetLevel};
use lcot_core::store::KnowledgeStore;
use lcot_mcp::{KnowledgeBase, McpServer, Sandbox, SandboxConfig, ToolConfig, ToolService};

pub const AUTHOR: &str = "## Key Takeaways\n- Grounded in [{line:What & Why sources: }]\n\
## Introduction\nAn entry built from verified derivations.\n\
## Principles and Mechanisms\n{grep:] What & Why:}\n\
## Cross-Domain Applications\n{grep:] Application:}\n";

pub const PLAN: &str = "```json\n{\"thumbnails\": [\
{\"category\": \"reductionist\", \"sketch\": \"Derive the WKB transmission through a square barrier\", \"target_level\": \"graduate\"},\
{\"category\": \"application\", \"sketch\": \"Estimate the tunneling current in an STM junction\", \"target_level\": \"undergraduate\"},\
{\"category\": \"reductionist\", \"sketch\": \"Relate alpha decay lifetimes to barrier width\", \"target_level\": \"high_school\"}]}\n```";

pub const PROMPTS: &str = "```json\n{\"prompts\": [\
{\"text\": \"{line:Thumbnail: } (numeric form).\", \"answer_type\": \"numeric\"},\
{\"text\": \"{line:Thumbnail: } (choice form). A) grows B) decays\", \"answer_type\": \"multiple_choice\"}]}\n```";

pub const SOLVER: &str = "Apply the WKB approximation step by step.\nFINAL_ANSWER: 42";

pub fn gateway() -> Gateway {
    let mut gw = Gateway::with_retry(RetryPolicy::no_backoff());
    let mut author = mock_backend(MockScript::constant(AUTHOR)).with_id("author");
    author.model_name = "mock-author-1".into();
    gw.register_backend(author).unwrap();
    let script = MockScript::constant("unscripted")
        .rule("Problem (", SOLVER)
        .rule("Thumbnail: ", PROMPTS)
        .rule("Produce ", PLAN);
    let mut generator = mock_backend(script).with_id("generator");
    generator.model_name = "mock-generator-1".into();
    gw.register_backend(generator).unwrap();
    let mut solver = mock_backend(MockScript::constant("Reasoning.\n42")).with_id("solver");
    solver.model_name = "mock-solver-1".into();
    gw.register_backend(solver).unwrap();
    gw
}

pub fn knowledge(dir: &Path) -> KnowledgeBase {
    let cur = Curriculum::from_json(
        r#"{"courses":[
          {"course_id":"qm","title":"Quantum Mechanics","discipline":"physics","level":"undergraduate",
           "topics":[{"topic_id":"qm-1","title":"Barriers"}]},
          {"course_id":"dev","title":"Nanoelectronics","discipline":"engineering","level":"graduate",
           "topics":[{"topic_id":"dev-1","title":"Junctions"}]}]}"#,
    )
    .unwrap();
    let mut store = KnowledgeStore::create(dir, &cur).unwrap();
    let (mut vs, mut ps, mut ts) = (vec![], vec![], vec![]);
    for i in 0..30 {
        let id = format!("q{i:02}");
        let (topic, cat, text) = match i % 3 {
            0 => (
                "qm-1",
                Category::Reductionist,
                format!("Problem {i}: quantum tunneling through a barrier, tunneling amplitude {i}."),
            ),
            1 => (
                "dev-1",
                Category::Application,
                format!("Problem {i}: a junction current set by quantum tunneling at bias {i}."),
            ),
            _ => ("dev-1", Category::Reductionist, format!("Problem {i}: an ohmic contact of area {i}.")),
        };
        let answer = FinalAnswer::Numeric {
            value: i as f64,
            unit: None,
        };
        ts.push(LCoTTrace {
            trace_id: format!("{id}@a"),
            prompt_id: id.clone(),
            backend_id: "a".into(),
            chain_text: format!("Step by step for {text}\nFINAL_ANSWER: {i}"),
            raw_answer_span: String::new(),
            answer: answer.clone(),
            created_at: String::new(),
        });
        vs.push(ConsensusVerdict {
            prompt_id: id.clone(),
            status: VerdictStatus::Verified,
            traces: vec![format!("{id}@a")],
            agreed_answer: Some(answer),
        });
        ps.push(PromptSpec {
            prompt_id: id,
            thumbnail_id: "t".into(),
            topic_id: topic.into(),
            text,
            category: cat,
            answer_type: AnswerType::Numeric,
            target_level: TargetLevel::Undergraduate,
        });
    }
    store.ingest(&vs, &ps, &ts).unwrap();
    let index = Index::build(&store).unwrap();
    KnowledgeBase { index, store }
}

pub fn service(dir: &Path, workers: usize) -> ToolService {
    let mut config = ToolConfig::new("author", "generator", "solver");
    config.workers = workers;
    ToolService::new(Arc::new(gateway()), config, Arc::new(Sandbox::new(SandboxConfig::default())))
        .with_knowledge(knowledge(dir))
}

pub fn server(dir: &Path, workers: usize) -> McpServer {
    McpServer::new(service(dir, workers))
}

/// Decodes the text payload of a successful tools/call reply.
pub fn call_payload(reply: &str) -> serde_json::Value {
    let v: serde_json::Value = serde_json::from_str(reply).unwrap();
    assert_eq!(v["result"]["isError"], false, "tool failed: {reply}");
    serde_json::from_str(v["result"]["content"][0]["text"].as_str().unwrap()).unwrap()
}

pub fn call_message(id: u64, tool: &str, arguments: &str) -> String {
    format!(r#"{{"jsonrpc":"2.0","id":{id},"method":"tools/call","params":{{"name":"{tool}","arguments":{arguments}}}}}"#)
}
