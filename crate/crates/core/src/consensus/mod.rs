//! Multi-solver answer extraction, comparison and unanimity judging.

pub mod expr;
mod simulate;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gateway::{ChatRequest, Gateway, GatewayError};
use crate::socrates::{AnswerType, PromptSpec};
use crate::util::{last_fenced_block, parallel_map, Clock};

pub use expr::Expr;
pub use simulate::{simulate_consensus, SimulationReport};

pub const FINAL_ANSWER_MARKER: &str = "FINAL_ANSWER:";
pub const REL_TOL: f64 = 1e-6;
pub const ABS_TOL: f64 = 1e-9;
pub const SAMPLE_POINTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FinalAnswer {
    Numeric {
        value: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        unit: Option<String>,
    },
    Symbolic {
        expression: String,
    },
    MultipleChoice {
        choice: char,
    },
    Code {
        program: String,
        language: String,
    },
}

impl FinalAnswer {
    pub fn answer_type(&self) -> AnswerType {
        match self {
            FinalAnswer::Numeric { .. } => AnswerType::Numeric,
            FinalAnswer::Symbolic { .. } => AnswerType::Symbolic,
            FinalAnswer::MultipleChoice { .. } => AnswerType::MultipleChoice,
            FinalAnswer::Code { .. } => AnswerType::Code,
        }
    }

    /// Short human-readable rendering used in stored records.
    pub fn display_text(&self) -> String {
        match self {
            FinalAnswer::Numeric { value, unit: Some(u) } => format!("{value} {u}"),
            FinalAnswer::Numeric { value, unit: None } => format!("{value}"),
            FinalAnswer::Symbolic { expression } => expression.clone(),
            FinalAnswer::MultipleChoice { choice } => choice.to_string(),
            FinalAnswer::Code { program, .. } => program.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LCoTTrace {
    pub trace_id: String,
    pub prompt_id: String,
    pub backend_id: String,
    pub chain_text: String,
    pub raw_answer_span: String,
    pub answer: FinalAnswer,
    pub created_at: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Verified,
    Divergent,
    Unverifiable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusVerdict {
    pub prompt_id: String,
    pub status: VerdictStatus,
    pub traces: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agreed_answer: Option<FinalAnswer>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConsensusError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("no `{FINAL_ANSWER_MARKER}` line in chain")]
    NoMarker,
    #[error("empty chain text")]
    EmptyChain,
    #[error("cannot parse {answer_type} answer from `{span}`: {reason}")]
    Unparseable {
        answer_type: String,
        span: String,
        reason: String,
    },
    #[error("answer kind mismatch: {left} vs {right} (expected {expected})")]
    KindMismatch {
        left: String,
        right: String,
        expected: String,
    },
    #[error("trace {trace_id} references prompt {found}, expected {expected}")]
    ForeignTrace {
        trace_id: String,
        found: String,
        expected: String,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Extracted answer plus the raw text it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Extracted {
    pub answer: FinalAnswer,
    pub raw_span: String,
}

pub fn extract_answer(chain_text: &str, answer_type: AnswerType) -> Result<FinalAnswer, ConsensusError> {
    extract_with_span(chain_text, answer_type).map(|e| e.answer)
}

pub fn extract_with_span(chain_text: &str, answer_type: AnswerType) -> Result<Extracted, ConsensusError> {
    if chain_text.trim().is_empty() {
        return Err(ConsensusError::EmptyChain);
    }
    let (line_start, marker_at) = chain_text
        .match_indices(FINAL_ANSWER_MARKER)
        .map(|(i, _)| (chain_text[..i].rfind('\n').map_or(0, |n| n + 1), i))
        .last()
        .ok_or(ConsensusError::NoMarker)?;
    let after = &chain_text[marker_at + FINAL_ANSWER_MARKER.len()..];
    let line = after.lines().next().unwrap_or("").trim();
    let unparseable = |reason: &str| ConsensusError::Unparseable {
        answer_type: answer_type.as_str().to_string(),
        span: line.to_string(),
        reason: reason.to_string(),
    };
    let answer = match answer_type {
        AnswerType::Numeric => {
            let (value, unit) = parse_numeric(line).ok_or_else(|| unparseable("no leading number"))?;
            FinalAnswer::Numeric { value, unit }
        }
        AnswerType::Symbolic => {
            let cleaned = strip_wrappers(line);
            let expression: String = cleaned.chars().filter(|c| !c.is_whitespace()).collect();
            if expression.is_empty() {
                return Err(unparseable("empty expression"));
            }
            Expr::parse(&expression).map_err(|e| unparseable(&e.to_string()))?;
            FinalAnswer::Symbolic { expression }
        }
        AnswerType::MultipleChoice => {
            let choice = parse_choice(line).ok_or_else(|| unparseable("no standalone choice letter"))?;
            FinalAnswer::MultipleChoice { choice }
        }
        AnswerType::Code => {
            let (language, program) = last_fenced_block(after)
                .or_else(|| last_fenced_block(&chain_text[..line_start]))
                .ok_or_else(|| unparseable("no fenced code block"))?;
            let language = if language.is_empty() { "python".to_string() } else { language };
            FinalAnswer::Code { program, language }
        }
    };
    Ok(Extracted {
        answer,
        raw_span: chain_text[line_start..].lines().next().unwrap_or("").to_string(),
    })
}

fn strip_wrappers(s: &str) -> &str {
    let mut s = s.trim().trim_end_matches('.').trim();
    for (open, close) in [("$", "$"), ("\\(", "\\)"), ("`", "`")] {
        if s.len() >= open.len() + close.len() && s.starts_with(open) && s.ends_with(close) {
            s = s[open.len()..s.len() - close.len()].trim();
        }
    }
    s
}

/// Leading number (sign, decimals, exponent, or a `x 10^n` suffix) and the
/// remaining unit text.
pub fn parse_numeric(text: &str) -> Option<(f64, Option<String>)> {
    let s = strip_wrappers(text);
    let b = s.as_bytes();
    let mut i = 0;
    if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        i += 1;
    }
    let digits_start = i;
    while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
        i += 1;
    }
    if !s[digits_start..i].bytes().any(|c| c.is_ascii_digit()) {
        return None;
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        let mut j = i + 1;
        if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
            j += 1;
        }
        if j < b.len() && b[j].is_ascii_digit() {
            while j < b.len() && b[j].is_ascii_digit() {
                j += 1;
            }
            i = j;
        }
    }
    let mut value: f64 = s[..i].parse().ok()?;
    let mut rest = &s[i..];
    if let Some((exp, tail)) = power_of_ten_suffix(rest) {
        value *= 10f64.powi(exp);
        rest = tail;
    }
    let unit = rest.trim();
    Some((value, (!unit.is_empty()).then(|| unit.to_string())))
}

fn power_of_ten_suffix(rest: &str) -> Option<(i32, &str)> {
    let t = rest.trim_start();
    let t = ["×", "x", "*", "\\times"].iter().find_map(|m| t.strip_prefix(m))?;
    let t = t.trim_start().strip_prefix("10")?;
    let t = t.strip_prefix("^").or_else(|| t.strip_prefix("**"))?;
    let t = t.strip_prefix('{').unwrap_or(t);
    let end = t
        .char_indices()
        .find(|&(k, c)| !(c.is_ascii_digit() || (k == 0 && (c == '-' || c == '+'))))
        .map_or(t.len(), |(k, _)| k);
    let exp = t[..end].parse().ok()?;
    let tail = t[end..].strip_prefix('}').unwrap_or(&t[end..]);
    Some((exp, tail))
}

fn parse_choice(text: &str) -> Option<char> {
    let chars: Vec<char> = text.chars().collect();
    (0..chars.len()).find_map(|k| {
        let c = chars[k];
        let before_ok = k == 0 || !chars[k - 1].is_alphanumeric();
        let after_ok = k + 1 == chars.len() || !chars[k + 1].is_alphanumeric();
        (c.is_ascii_alphabetic() && before_ok && after_ok).then(|| c.to_ascii_uppercase())
    })
}

fn normalize_unit(unit: &Option<String>) -> String {
    unit.as_deref()
        .unwrap_or("")
        .chars()
        .filter(|c| !c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect()
}

pub fn numbers_close(a: f64, b: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= ABS_TOL.max(REL_TOL * a.abs().max(b.abs()))
}

/// Runs a code answer against shared tests; `Ok(true)` means every test passed.
pub trait CodeHarness: Send + Sync {
    fn passes(&self, program: &str, language: &str) -> Result<bool, String>;
}

/// Comparison settings; the default compares code answers by normalized source.
#[derive(Clone, Default)]
pub struct AnswerChecker {
    pub code_harness: Option<Arc<dyn CodeHarness>>,
}

impl std::fmt::Debug for AnswerChecker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnswerChecker")
            .field("code_harness", &self.code_harness.is_some())
            .finish()
    }
}

pub fn answers_equivalent(a: &FinalAnswer, b: &FinalAnswer, answer_type: AnswerType) -> Result<bool, ConsensusError> {
    AnswerChecker::default().equivalent(a, b, answer_type)
}

impl AnswerChecker {
    pub fn with_harness(harness: Arc<dyn CodeHarness>) -> Self {
        Self {
            code_harness: Some(harness),
        }
    }

    pub fn equivalent(&self, a: &FinalAnswer, b: &FinalAnswer, answer_type: AnswerType) -> Result<bool, ConsensusError> {
        if a.answer_type() != answer_type || b.answer_type() != answer_type {
            return Err(ConsensusError::KindMismatch {
                left: a.answer_type().as_str().into(),
                right: b.answer_type().as_str().into(),
                expected: answer_type.as_str().into(),
            });
        }
        Ok(match (a, b) {
            (FinalAnswer::Numeric { value: x, unit: ux }, FinalAnswer::Numeric { value: y, unit: uy }) => {
                numbers_close(*x, *y) && normalize_unit(ux) == normalize_unit(uy)
            }
            (FinalAnswer::MultipleChoice { choice: x }, FinalAnswer::MultipleChoice { choice: y }) => {
                x.eq_ignore_ascii_case(y)
            }
            (FinalAnswer::Symbolic { expression: x }, FinalAnswer::Symbolic { expression: y }) => {
                symbolic_equivalent(x, y)
            }
            (
                FinalAnswer::Code { program: px, language: lx },
                FinalAnswer::Code { program: py, language: ly },
            ) => match &self.code_harness {
                Some(h) => h.passes(px, lx).unwrap_or(false) && h.passes(py, ly).unwrap_or(false),
                None => lx.eq_ignore_ascii_case(ly) && normalize_source(px) == normalize_source(py),
            },
            _ => unreachable!("kinds checked above"),
        })
    }
}

fn normalize_source(src: &str) -> String {
    src.lines()
        .map(str::trim_end)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Canonical-form equality, else agreement on sampled substitution points.
pub fn symbolic_equivalent(x: &str, y: &str) -> bool {
    let (Ok(ex), Ok(ey)) = (Expr::parse(x), Expr::parse(y)) else {
        return x.split_whitespace().collect::<String>() == y.split_whitespace().collect::<String>();
    };
    if ex.canonical_string() == ey.canonical_string() {
        return true;
    }
    let vars: BTreeSet<String> = ex.variables().union(&ey.variables()).cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_c0de);
    let mut agreed = 0;
    for _ in 0..200 {
        let point: BTreeMap<String, f64> = vars.iter().map(|v| (v.clone(), rng.gen_range(-2.0..=2.0))).collect();
        let (vx, vy) = (ex.eval(&point), ey.eval(&point));
        match (vx.is_finite(), vy.is_finite()) {
            (true, true) => {
                if (vx - vy).abs() > ABS_TOL.max(REL_TOL * vx.abs().max(vy.abs())) {
                    return false;
                }
                agreed += 1;
                if agreed == SAMPLE_POINTS {
                    return true;
                }
            }
            (false, false) => {}
            _ => return false,
        }
        if vars.is_empty() {
            break;
        }
    }
    false
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub attempts_per_backend: u32,
    pub retry_with_alternate: bool,
    pub alternates: Vec<String>,
    pub clock: Clock,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            attempts_per_backend: 1,
            retry_with_alternate: false,
            alternates: Vec::new(),
            clock: Clock::System,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveFailure {
    pub backend_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct SolveOutcome {
    pub traces: Vec<LCoTTrace>,
    pub failures: Vec<SolveFailure>,
}

pub fn solver_system_prompt(answer_type: AnswerType) -> String {
    let form = match answer_type {
        AnswerType::Numeric => "a single number, optionally followed by its unit",
        AnswerType::Symbolic => "a single closed-form expression in plain ASCII math",
        AnswerType::MultipleChoice => "the single letter of the correct option",
        AnswerType::Code => "nothing else; put the complete program in a fenced code block directly after it",
    };
    format!(
        "You are an expert problem solver. Derive the answer from first principles, step by step, \
         stating every assumption. End with one line of the form `{FINAL_ANSWER_MARKER} <answer>` where <answer> is {form}."
    )
}

pub fn solver_user_prompt(prompt: &PromptSpec) -> String {
    format!("Problem ({}):\n{}", prompt.answer_type.as_str(), prompt.text)
}

fn solve_one(
    gateway: &Gateway,
    prompt: &PromptSpec,
    backend_id: &str,
    opts: &SolveOptions,
) -> Result<LCoTTrace, SolveFailure> {
    let fail = |error: String| SolveFailure {
        backend_id: backend_id.to_string(),
        error,
    };
    let system = solver_system_prompt(prompt.answer_type);
    let user = solver_user_prompt(prompt);
    let mut last_error = String::from("no attempts");
    for attempt in 0..opts.attempts_per_backend.max(1) {
        let request = ChatRequest::solver(system.clone(), user.clone()).with_seed(u64::from(attempt));
        let response = match gateway.complete(backend_id, &request) {
            Ok(r) => r,
            Err(e) => {
                last_error = e.to_string();
                continue;
            }
        };
        match extract_with_span(&response.text, prompt.answer_type) {
            Ok(extracted) => {
                return Ok(LCoTTrace {
                    trace_id: format!("{}@{}", prompt.prompt_id, backend_id),
                    prompt_id: prompt.prompt_id.clone(),
                    backend_id: backend_id.to_string(),
                    chain_text: response.text,
                    raw_answer_span: extracted.raw_span,
                    answer: extracted.answer,
                    created_at: opts.clock.now(),
                })
            }
            Err(e) => last_error = e.to_string(),
        }
    }
    Err(fail(last_error))
}

/// Fans `prompt` out to every backend concurrently; one trace per backend
/// that produced a parseable answer.
pub fn solve(
    gateway: &Gateway,
    prompt: &PromptSpec,
    backend_ids: &[String],
    opts: &SolveOptions,
) -> Result<SolveOutcome, ConsensusError> {
    if backend_ids.len() < 2 {
        return Err(ConsensusError::Precondition(format!(
            "consensus needs at least 2 solver backends, got {}",
            backend_ids.len()
        )));
    }
    let mut providers = BTreeMap::new();
    for id in backend_ids {
        let spec = gateway.spec(id)?;
        if let Some(other) = providers.insert(spec.provider_name.clone(), id.clone()) {
            return Err(ConsensusError::Precondition(format!(
                "backends {other} and {id} share provider {}",
                spec.provider_name
            )));
        }
    }
    let results = parallel_map(backend_ids, backend_ids.len(), |id| solve_one(gateway, prompt, id, opts));
    let mut outcome = SolveOutcome::default();
    for r in results {
        match r {
            Ok(t) => outcome.traces.push(t),
            Err(f) => outcome.failures.push(f),
        }
    }
    if opts.retry_with_alternate {
        for alt in &opts.alternates {
            if outcome.traces.len() >= backend_ids.len() {
                break;
            }
            let spec = gateway.spec(alt)?;
            if providers.contains_key(&spec.provider_name) {
                continue;
            }
            providers.insert(spec.provider_name.clone(), alt.clone());
            match solve_one(gateway, prompt, alt, opts) {
                Ok(t) => outcome.traces.push(t),
                Err(f) => outcome.failures.push(f),
            }
        }
    }
    outcome.traces.sort_by(|a, b| a.backend_id.cmp(&b.backend_id));
    Ok(outcome)
}

pub fn judge_consensus(prompt: &PromptSpec, traces: &[LCoTTrace]) -> Result<ConsensusVerdict, ConsensusError> {
    AnswerChecker::default().judge(prompt, traces)
}

impl AnswerChecker {
    /// Unanimity over all traces; fewer than two traces is unverifiable.
    pub fn judge(&self, prompt: &PromptSpec, traces: &[LCoTTrace]) -> Result<ConsensusVerdict, ConsensusError> {
        self.judge_parts(&prompt.prompt_id, prompt.answer_type, traces)
    }

    pub fn judge_parts(
        &self,
        prompt_id: &str,
        answer_type: AnswerType,
        traces: &[LCoTTrace],
    ) -> Result<ConsensusVerdict, ConsensusError> {
        for t in traces {
            if t.prompt_id != prompt_id {
                return Err(ConsensusError::ForeignTrace {
                    trace_id: t.trace_id.clone(),
                    found: t.prompt_id.clone(),
                    expected: prompt_id.to_string(),
                });
            }
        }
        let mut ordered: Vec<&LCoTTrace> = traces.iter().collect();
        ordered.sort_by(|a, b| a.backend_id.cmp(&b.backend_id).then_with(|| a.trace_id.cmp(&b.trace_id)));
        let ids = ordered.iter().map(|t| t.trace_id.clone()).collect();
        if ordered.len() < 2 {
            return Ok(ConsensusVerdict {
                prompt_id: prompt_id.to_string(),
                status: VerdictStatus::Unverifiable,
                traces: ids,
                agreed_answer: None,
            });
        }
        for i in 0..ordered.len() {
            for j in i + 1..ordered.len() {
                let (a, b) = (&ordered[i].answer, &ordered[j].answer);
                let same = match self.equivalent(a, b, answer_type) {
                    Ok(v) => v,
                    Err(ConsensusError::KindMismatch { .. }) => false,
                    Err(e) => return Err(e),
                };
                if !same {
                    return Ok(ConsensusVerdict {
                        prompt_id: prompt_id.to_string(),
                        status: VerdictStatus::Divergent,
                        traces: ids,
                        agreed_answer: None,
                    });
                }
            }
        }
        Ok(ConsensusVerdict {
            prompt_id: prompt_id.to_string(),
            status: VerdictStatus::Verified,
            traces: ids,
            agreed_answer: Some(ordered[0].answer.clone()),
        })
    }
}
