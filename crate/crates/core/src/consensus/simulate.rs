//! Monte Carlo model of the two-solver agreement filter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AnswerChecker, FinalAnswer, LCoTTrace, VerdictStatus};
use crate::socrates::AnswerType;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub prompts: usize,
    pub solvers: usize,
    pub verified: usize,
    pub verified_correct: usize,
    pub divergent: usize,
    /// Fraction of verified prompts whose agreed answer is correct.
    pub verified_accuracy: f64,
}

/// Each solver answers correctly with probability `accuracy`, otherwise picks
/// one of `choices - 1` decoys uniformly. Every prompt goes through the real
/// judge.
pub fn simulate_consensus(
    accuracy: f64,
    choices: usize,
    solvers: usize,
    prompts: usize,
    seed: u64,
) -> SimulationReport {
    assert!(choices >= 2 && solvers >= 2, "need at least 2 choices and 2 solvers");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let checker = AnswerChecker::default();
    let backend_ids: Vec<String> = (0..solvers).map(|s| format!("solver-{s}")).collect();
    let mut report = SimulationReport {
        prompts,
        solvers,
        verified: 0,
        verified_correct: 0,
        divergent: 0,
        verified_accuracy: 0.0,
    };
    let mut traces = Vec::with_capacity(solvers);
    for p in 0..prompts {
        let prompt_id = format!("sim-{p}");
        traces.clear();
        for backend_id in &backend_ids {
            let answer = if rng.gen_bool(accuracy) {
                0
            } else {
                rng.gen_range(1..choices)
            };
            traces.push(LCoTTrace {
                trace_id: format!("{prompt_id}@{backend_id}"),
                prompt_id: prompt_id.clone(),
                backend_id: backend_id.clone(),
                chain_text: format!("FINAL_ANSWER: {answer}"),
                raw_answer_span: format!("FINAL_ANSWER: {answer}"),
                answer: FinalAnswer::Numeric {
                    value: answer as f64,
                    unit: None,
                },
                created_at: String::new(),
            });
        }
        let verdict = checker
            .judge_parts(&prompt_id, AnswerType::Numeric, &traces)
            .expect("simulated traces are well formed");
        match verdict.status {
            VerdictStatus::Verified => {
                report.verified += 1;
                if let Some(FinalAnswer::Numeric { value, .. }) = verdict.agreed_answer {
                    if value == 0.0 {
                        report.verified_correct += 1;
                    }
                }
            }
            VerdictStatus::Divergent => report.divergent += 1,
            VerdictStatus::Unverifiable => {}
        }
    }
    if report.verified > 0 {
        report.verified_accuracy = report.verified_correct as f64 / report.verified as f64;
    }
    report
}
