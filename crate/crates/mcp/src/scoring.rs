//! `compute_score` implementations selected by data source.

use std::collections::BTreeMap;
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::{Duration, Instant};

use lcot_core::consensus::{extract_answer, parse_numeric, AnswerChecker, FinalAnswer, FINAL_ANSWER_MARKER};
use lcot_core::socrates::AnswerType;
use lcot_core::util::last_fenced_block;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::sandbox::Sandbox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResult {
    pub score: f64,
    pub passed: bool,
    pub execution_time_s: f64,
    pub detail: String,
}

/// Outcome of one scorer call before timing is attached.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub score: f64,
    pub detail: String,
}

impl Verdict {
    fn pass(detail: impl Into<String>) -> Self {
        Self {
            score: 1.0,
            detail: detail.into(),
        }
    }

    fn fail(detail: impl Into<String>) -> Self {
        Self {
            score: 0.0,
            detail: detail.into(),
        }
    }
}

pub trait Scorer: Send + Sync {
    /// `timeout_s` bounds any subprocess the scorer starts.
    fn score(&self, solution: &str, ground_truth: &str, extra: Option<&Value>, timeout_s: f64) -> Verdict;
}

/// Answer equivalence with the answer type taken from `extra.answer_type`
/// or inferred from the ground truth.
#[derive(Debug, Clone, Default)]
pub struct EquivalenceScorer {
    pub checker: AnswerChecker,
}

/// Byte equality after trimming surrounding whitespace.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactScorer;

/// Runs the solution program and compares its trimmed stdout with the ground truth.
#[derive(Debug, Clone)]
pub struct ProgramOutputScorer {
    pub sandbox: Arc<Sandbox>,
    pub default_language: String,
}

/// Wire spelling of answer types.
pub fn wire_answer_type(t: AnswerType) -> &'static str {
    match t {
        AnswerType::Numeric => "calculation",
        other => other.as_str(),
    }
}

pub fn parse_wire_answer_type(s: &str) -> Option<AnswerType> {
    match s.trim().to_ascii_lowercase().as_str() {
        "calculation" => Some(AnswerType::Numeric),
        other => AnswerType::parse(other),
    }
}

fn infer_answer_type(ground_truth: &str) -> AnswerType {
    let t = ground_truth.trim();
    if parse_numeric(t).is_some() {
        AnswerType::Numeric
    } else if t.len() == 1 && t.chars().all(|c| c.is_ascii_alphabetic()) {
        AnswerType::MultipleChoice
    } else {
        AnswerType::Symbolic
    }
}

/// Parses `text` as an answer of `answer_type`, with or without the marker line.
pub fn parse_answer(text: &str, answer_type: AnswerType) -> Result<FinalAnswer, String> {
    let chain = if text.contains(FINAL_ANSWER_MARKER) {
        text.to_string()
    } else {
        format!("{FINAL_ANSWER_MARKER} {}", text.trim())
    };
    extract_answer(&chain, answer_type).map_err(|e| e.to_string())
}

fn extra_str<'a>(extra: Option<&'a Value>, key: &str) -> Option<&'a str> {
    extra.and_then(|e| e.get(key)).and_then(Value::as_str)
}

impl Scorer for EquivalenceScorer {
    fn score(&self, solution: &str, ground_truth: &str, extra: Option<&Value>, _timeout_s: f64) -> Verdict {
        let answer_type = match extra_str(extra, "answer_type") {
            Some(raw) => match parse_wire_answer_type(raw) {
                Some(t) => t,
                None => return Verdict::fail(format!("unknown answer_type `{raw}`")),
            },
            None => infer_answer_type(ground_truth),
        };
        let truth = match parse_answer(ground_truth, answer_type) {
            Ok(a) => a,
            Err(e) => return Verdict::fail(format!("ground truth: {e}")),
        };
        let answer = match parse_answer(solution, answer_type) {
            Ok(a) => a,
            Err(e) => return Verdict::fail(format!("solution: {e}")),
        };
        match self.checker.equivalent(&answer, &truth, answer_type) {
            Ok(true) => Verdict::pass(format!("{} answer matches", answer_type.as_str())),
            Ok(false) => Verdict::fail(format!(
                "{} answer `{}` differs from `{}`",
                answer_type.as_str(),
                answer.display_text(),
                truth.display_text()
            )),
            Err(e) => Verdict::fail(e.to_string()),
        }
    }
}

impl Scorer for ExactScorer {
    fn score(&self, solution: &str, ground_truth: &str, _extra: Option<&Value>, _timeout_s: f64) -> Verdict {
        if solution.trim() == ground_truth.trim() {
            Verdict::pass("exact match")
        } else {
            Verdict::fail("mismatch")
        }
    }
}

impl Scorer for ProgramOutputScorer {
    fn score(&self, solution: &str, ground_truth: &str, extra: Option<&Value>, timeout_s: f64) -> Verdict {
        let (fence_lang, program) = match last_fenced_block(solution) {
            Some((lang, body)) => (Some(lang), body),
            None => (None, solution.to_string()),
        };
        let language = extra_str(extra, "language")
            .map(str::to_string)
            .or(fence_lang.filter(|l| !l.is_empty()))
            .unwrap_or_else(|| self.default_language.clone());
        match self.sandbox.execute(&language, &program, timeout_s) {
            Err(e) => Verdict::fail(e.to_string()),
            Ok(r) if r.timed_out => Verdict::fail("program timed out"),
            Ok(r) if r.exit_status != 0 => Verdict::fail(format!("program exited with {}", r.exit_status)),
            Ok(r) if r.stdout.trim() == ground_truth.trim() => Verdict::pass("output matches"),
            Ok(_) => Verdict::fail("output differs"),
        }
    }
}

#[derive(Clone, Default)]
pub struct ScorerRegistry {
    scorers: BTreeMap<String, Arc<dyn Scorer>>,
}

impl std::fmt::Debug for ScorerRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.scorers.keys()).finish()
    }
}

pub const EQUIVALENCE_SOURCES: [&str; 8] = [
    "default",
    "theoretical_physics",
    "physics",
    "chemistry",
    "mathematics",
    "biology",
    "engineering",
    "computation",
];

impl ScorerRegistry {
    pub fn standard(sandbox: Arc<Sandbox>) -> Self {
        let mut reg = Self::default();
        let eq: Arc<dyn Scorer> = Arc::new(EquivalenceScorer::default());
        for name in EQUIVALENCE_SOURCES {
            reg.register(name, eq.clone());
        }
        reg.register("exact_match", Arc::new(ExactScorer));
        reg.register(
            "program_output",
            Arc::new(ProgramOutputScorer {
                sandbox,
                default_language: "python".into(),
            }),
        );
        reg
    }

    pub fn register(&mut self, data_source: &str, scorer: Arc<dyn Scorer>) {
        self.scorers.insert(data_source.to_string(), scorer);
    }

    pub fn get(&self, data_source: &str) -> Option<Arc<dyn Scorer>> {
        self.scorers.get(data_source).cloned()
    }

    pub fn names(&self) -> Vec<String> {
        self.scorers.keys().cloned().collect()
    }
}

/// Extra wait beyond the timeout so scorers that honor it can clean up.
pub const SCORE_GRACE_S: f64 = 1.0;

/// Runs one scorer call on its own thread and gives up after `timeout_s` plus grace.
pub fn score_with_timeout(
    scorer: Arc<dyn Scorer>,
    solution: String,
    ground_truth: String,
    extra: Option<Value>,
    timeout_s: f64,
) -> ScoreResult {
    let started = Instant::now();
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let v = scorer.score(&solution, &ground_truth, extra.as_ref(), timeout_s);
        let _ = tx.send(v);
    });
    let verdict = rx
        .recv_timeout(Duration::from_secs_f64(timeout_s + SCORE_GRACE_S))
        .unwrap_or_else(|_| Verdict::fail(format!("scoring exceeded {timeout_s} s")));
    let score = verdict.score.clamp(0.0, 1.0);
    ScoreResult {
        score,
        passed: score >= 1.0,
        execution_time_s: started.elapsed().as_secs_f64(),
        detail: verdict.detail,
    }
}
