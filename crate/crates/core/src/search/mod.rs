//! Keyword-driven retrieval over the verified corpus.
//!
//! A target concept is expanded into weighted terms, matched against a
//! positional BM25 index, re-ranked to favour hits from courses other than
//! the concept's home course, and split into the "what & why" and
//! "application" buckets that feed article synthesis.

mod index;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::gateway::{ChatRequest, Gateway};
use crate::socrates::Category;
use crate::store::{AuditEntry, KnowledgeStore};
use crate::text::normalize_keyword;

pub use index::{DocMeta, Index, IndexDoc};

pub const MAX_EXPANSION_TERMS: usize = 8;
pub const EXPANSION_WEIGHT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub k1: f64,
    pub b: f64,
    /// Weight of normalized relevance against cross-disciplinary score.
    pub alpha: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            k1: 1.2,
            b: 0.75,
            alpha: 0.7,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("cannot index an empty corpus")]
    EmptyCorpus,
    #[error("duplicate document {0}")]
    DuplicateDoc(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("empty search target")]
    EmptyTarget,
    #[error("corrupt index: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionSource {
    Deterministic,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTerm {
    pub term: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpandedQuery {
    pub target: String,
    pub terms: Vec<QueryTerm>,
    pub source: ExpansionSource,
}

impl ExpandedQuery {
    /// Adds `term` or raises the weight of an existing copy.
    fn push(&mut self, term: String, weight: f64) -> bool {
        match self.terms.iter_mut().find(|t| t.term == term) {
            Some(existing) => {
                existing.weight = existing.weight.max(weight);
                false
            }
            None => {
                self.terms.push(QueryTerm { term, weight });
                true
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub qa_id: String,
    pub course_id: String,
    pub category: Category,
    pub relevance: f64,
    pub xdisc: f64,
    pub score: f64,
    pub snippet: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaffold {
    pub target: String,
    pub what_why: Vec<SearchHit>,
    pub application: Vec<SearchHit>,
}

impl Scaffold {
    pub fn is_empty(&self) -> bool {
        self.what_why.is_empty() && self.application.is_empty()
    }

    pub fn qa_ids(&self) -> BTreeSet<&str> {
        self.what_why
            .iter()
            .chain(&self.application)
            .map(|h| h.qa_id.as_str())
            .collect()
    }
}

/// Target tokens (and the whole phrase, for multiword targets) at weight 1.
pub fn deterministic_expansion(target: &str) -> Result<ExpandedQuery, SearchError> {
    let normalized = normalize_keyword(target);
    if normalized.is_empty() {
        return Err(SearchError::EmptyTarget);
    }
    let mut q = ExpandedQuery {
        target: target.to_string(),
        terms: Vec::new(),
        source: ExpansionSource::Deterministic,
    };
    for token in normalized.split(' ') {
        q.push(token.to_string(), 1.0);
    }
    if normalized.contains(' ') {
        q.push(normalized, 1.0);
    }
    Ok(q)
}

pub fn expansion_prompt(target: &str) -> (String, String) {
    (
        "You expand search queries for a science knowledge base. Reply with up to eight closely \
         related technical terms, one per line, with no numbering or commentary."
            .to_string(),
        format!("Concept: {target}"),
    )
}

/// Expands `target`, optionally asking `backend` for related terms. Backend
/// failures fall back to the deterministic expansion.
pub fn expand_query(target: &str, backend: Option<(&Gateway, &str)>) -> Result<ExpandedQuery, SearchError> {
    let mut q = deterministic_expansion(target)?;
    let Some((gateway, backend_id)) = backend else {
        return Ok(q);
    };
    let (system, user) = expansion_prompt(target);
    let response = match gateway.complete(backend_id, &ChatRequest::solver(system, user)) {
        Ok(r) => r,
        Err(e) => {
            tracing::warn!(target, error = %e, "query expansion failed, using deterministic terms");
            return Ok(q);
        }
    };
    q.source = ExpansionSource::Llm;
    let mut added = 0;
    for line in response.text.lines() {
        if added == MAX_EXPANSION_TERMS {
            break;
        }
        let cleaned = line
            .trim()
            .trim_start_matches(|c: char| c.is_ascii_digit() || "-*.)•".contains(c))
            .trim();
        let term = normalize_keyword(cleaned);
        if !term.is_empty() && q.push(term, EXPANSION_WEIGHT) {
            added += 1;
        }
    }
    Ok(q)
}

pub fn search(index: &Index, query: &ExpandedQuery, k: usize) -> Result<Vec<SearchHit>, SearchError> {
    index.search(query, k, &SearchConfig::default())
}

/// Cross-disciplinary weight of a hit from `course`, given how many
/// already-ranked hits came from the same course.
pub fn xdisc(is_home: bool, same_course_before: usize) -> f64 {
    if is_home {
        0.0
    } else {
        1.0 / (1.0 + (1.0 + same_course_before as f64).ln())
    }
}

/// Greedy re-ranking: each step takes the hit with the best combined score
/// given the courses already placed, so repeated courses lose weight and
/// equally relevant hits interleave across courses.
pub fn rank_cross_domain(hits: &[SearchHit], index: &Index, home_course: &str, alpha: f64) -> Vec<SearchHit> {
    let max = hits.iter().map(|h| h.relevance).fold(0.0f64, f64::max);
    let norm = |h: &SearchHit| if max > 0.0 { h.relevance / max } else { 0.0 };
    let mut ordered: Vec<&SearchHit> = hits.iter().collect();
    ordered.sort_by(|a, b| b.relevance.total_cmp(&a.relevance).then_with(|| a.qa_id.cmp(&b.qa_id)));
    // Within one course every candidate shares the same xdisc, so only the
    // head of each course queue can win a step.
    let mut queues: BTreeMap<Option<&str>, VecDeque<&SearchHit>> = BTreeMap::new();
    for h in ordered {
        let course = index.doc_course(&h.qa_id);
        if course.is_none() {
            tracing::warn!(qa_id = %h.qa_id, "hit not in index, cross-disciplinary weight 0");
        }
        queues.entry(course).or_default().push_back(h);
    }
    let mut placed: BTreeMap<Option<&str>, usize> = BTreeMap::new();
    let mut out = Vec::with_capacity(hits.len());
    loop {
        let mut best: Option<(Option<&str>, f64, f64)> = None;
        for (course, q) in &queues {
            let Some(h) = q.front() else { continue };
            let x = match course {
                Some(c) => xdisc(*c == home_course, placed.get(course).copied().unwrap_or(0)),
                None => 0.0,
            };
            let score = alpha * norm(h) + (1.0 - alpha) * x;
            let better = match best {
                None => true,
                Some((bc, bs, _)) => {
                    let bh = queues[&bc].front().expect("best queue non-empty");
                    score > bs
                        || (score == bs
                            && (h.relevance > bh.relevance || (h.relevance == bh.relevance && h.qa_id < bh.qa_id)))
                }
            };
            if better {
                best = Some((*course, score, x));
            }
        }
        let Some((course, score, x)) = best else { break };
        let h = queues.get_mut(&course).and_then(VecDeque::pop_front).expect("chosen queue non-empty");
        *placed.entry(course).or_default() += 1;
        out.push(SearchHit {
            xdisc: x,
            score,
            ..h.clone()
        });
    }
    out
}

pub fn categorize_prompt(target: &str, question: &str) -> (String, String) {
    (
        "Classify a solved problem relative to a concept. Reply WHAT_WHY if it explains what the \
         concept is or why it holds, or APPLICATION if it uses the concept in a concrete setting."
            .to_string(),
        format!("Concept: {target}\nProblem: {question}"),
    )
}

/// Routes hits by their stored category; a backend, when given, may move
/// individual hits. Hits missing from the store are dropped and audited.
pub fn categorize(
    target: &str,
    hits: &[SearchHit],
    store: &KnowledgeStore,
    backend: Option<(&Gateway, &str)>,
) -> (Scaffold, Vec<AuditEntry>) {
    let mut scaffold = Scaffold {
        target: target.to_string(),
        what_why: Vec::new(),
        application: Vec::new(),
    };
    let mut audit = Vec::new();
    let mut seen = BTreeSet::new();
    for h in hits {
        if !seen.insert(h.qa_id.as_str()) {
            continue;
        }
        let Ok(qa) = store.get(&h.qa_id) else {
            audit.push(AuditEntry {
                prompt_id: h.qa_id.clone(),
                reason: "search hit not found in store".into(),
            });
            continue;
        };
        let mut category = qa.category;
        if let Some((gateway, backend_id)) = backend {
            let (system, user) = categorize_prompt(target, &qa.question);
            if let Ok(r) = gateway.complete(backend_id, &ChatRequest::solver(system, user)) {
                let upper = r.text.to_ascii_uppercase();
                if upper.contains("APPLICATION") {
                    category = Category::Application;
                } else if upper.contains("WHAT_WHY") || upper.contains("WHAT & WHY") {
                    category = Category::Reductionist;
                }
            }
        }
        match category {
            Category::Reductionist => scaffold.what_why.push(h.clone()),
            Category::Application => scaffold.application.push(h.clone()),
        }
    }
    (scaffold, audit)
}
