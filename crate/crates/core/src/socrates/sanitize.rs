use serde::{Deserialize, Serialize};

use super::{PromptSpec, SocratesError};
use crate::gateway::{ChatRequest, Gateway};
use crate::util::parallel_map;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Keep,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SanitationReport {
    pub prompt_id: String,
    pub verdict: Verdict,
    pub reason: String,
}

/// `kept` and `rejected` partition the input. Prompts the checker could not
/// judge are rejected with a `recheck:` reason and also listed in `recheck`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SanitizeOutcome {
    pub kept: Vec<PromptSpec>,
    pub rejected: Vec<SanitationReport>,
    pub recheck: Vec<PromptSpec>,
}

impl SanitizeOutcome {
    pub fn rejection_rate(&self) -> f64 {
        let total = self.kept.len() + self.rejected.len();
        if total == 0 {
            0.0
        } else {
            (self.rejected.len() - self.recheck.len()) as f64 / total as f64
        }
    }
}

const CHECKER_SYSTEM: &str = "You review generated science problems before anyone tries to solve them.";

pub fn checker_prompt(prompt: &PromptSpec) -> String {
    format!(
        "Check the problem below for physically impossible premises, factual mistakes in its setup, \
         or numbers outside any plausible range.\n\
         Answer on the first line with KEEP, or with REJECT: <short reason>.\n\
         Problem ({}): {}",
        prompt.answer_type, prompt.text
    )
}

enum Check {
    Keep,
    Reject(String),
    Recheck(String),
}

fn parse_check(text: &str) -> Check {
    let first = text.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    let upper = first.to_ascii_uppercase();
    if upper.starts_with("KEEP") {
        Check::Keep
    } else if upper.starts_with("REJECT") {
        let reason = first[6..].trim_start_matches([':', ' ', '-']).trim();
        if reason.is_empty() {
            Check::Recheck("REJECT without a reason".into())
        } else {
            Check::Reject(reason.to_string())
        }
    } else {
        Check::Recheck(format!("unrecognized checker reply: {first}"))
    }
}

/// Screens `prompts` with `checker_id`, which must not be the generator.
pub fn sanitize_prompts(
    gateway: &Gateway,
    checker_id: &str,
    generator_id: &str,
    prompts: &[PromptSpec],
) -> Result<SanitizeOutcome, SocratesError> {
    if checker_id == generator_id {
        return Err(SocratesError::SameBackend(checker_id.to_string()));
    }
    let workers = gateway.spec(checker_id)?.max_concurrency;
    let checks = parallel_map(prompts, workers, |p| {
        match gateway.complete(checker_id, &ChatRequest::solver(CHECKER_SYSTEM, checker_prompt(p))) {
            Ok(resp) => parse_check(&resp.text),
            Err(e) => Check::Recheck(e.to_string()),
        }
    });
    let mut out = SanitizeOutcome::default();
    for (p, check) in prompts.iter().zip(checks) {
        match check {
            Check::Keep => out.kept.push(p.clone()),
            Check::Reject(reason) => out.rejected.push(SanitationReport {
                prompt_id: p.prompt_id.clone(),
                verdict: Verdict::Reject,
                reason,
            }),
            Check::Recheck(reason) => {
                tracing::warn!(prompt = %p.prompt_id, %reason, "routed to recheck");
                out.rejected.push(SanitationReport {
                    prompt_id: p.prompt_id.clone(),
                    verdict: Verdict::Reject,
                    reason: format!("recheck: {reason}"),
                });
                out.recheck.push(p.clone());
            }
        }
    }
    Ok(out)
}
