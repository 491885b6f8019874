//! Synthetic corpora and an exhaustive BM25 scorer.

use std::collections::HashMap;

use lcot_core::search::{ExpandedQuery, ExpansionSource, IndexDoc, QueryTerm};
use lcot_core::socrates::Category;
use lcot_core::text::tokenize;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const K1: f64 = 1.2;
pub const B: f64 = 0.75;

pub struct Corpus {
    pub docs: Vec<IndexDoc>,
    pub vocab: Vec<String>,
}

/// Documents over a skewed synthetic vocabulary; rare words make some
/// queries hit only a handful of documents.
pub fn synthetic_corpus(seed: u64, n_docs: usize) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab: Vec<String> = (0..400).map(|i| format!("w{i}")).collect();
    let courses = ["alg", "mech", "qft", "orgchem", "genetics", "circuits"];
    let pick = |rng: &mut ChaCha8Rng| {
        // Squaring a uniform draw concentrates mass on low indices.
        let u: f64 = rng.gen();
        vocab[((u * u) * vocab.len() as f64) as usize].clone()
    };
    let mut docs = Vec::with_capacity(n_docs);
    for d in 0..n_docs {
        let q_len = rng.gen_range(3..12);
        let c_len = rng.gen_range(5..80);
        let question: Vec<String> = (0..q_len).map(|_| pick(&mut rng)).collect();
        let chain: Vec<String> = (0..c_len).map(|_| pick(&mut rng)).collect();
        docs.push(IndexDoc {
            qa_id: format!("qa-{:016x}", rng.gen::<u64>() ^ d as u64),
            course_id: courses[rng.gen_range(0..courses.len())].to_string(),
            category: if rng.gen_bool(0.5) {
                Category::Reductionist
            } else {
                Category::Application
            },
            question: question.join(" ") + "?",
            chain_text: chain.join(", "),
        });
    }
    docs.shuffle(&mut rng);
    Corpus { docs, vocab }
}

pub fn random_query(rng: &mut ChaCha8Rng, corpus: &Corpus) -> ExpandedQuery {
    let mut terms: Vec<QueryTerm> = Vec::new();
    let n = rng.gen_range(1..=4);
    for _ in 0..n {
        let term = if rng.gen_bool(0.25) {
            // Phrase lifted from a real document so it has matches.
            let d = &corpus.docs[rng.gen_range(0..corpus.docs.len())];
            let toks = tokenize(&d.chain_text);
            let i = rng.gen_range(0..toks.len() - 1);
            format!("{} {}", toks[i], toks[i + 1])
        } else if rng.gen_bool(0.05) {
            "absentterm".to_string()
        } else {
            corpus.vocab[rng.gen_range(0..corpus.vocab.len())].clone()
        };
        if terms.iter().any(|t| t.term == term) {
            continue;
        }
        let weight = if terms.is_empty() { 1.0 } else { *[1.0, 0.5].choose(rng).unwrap() };
        terms.push(QueryTerm { term, weight });
    }
    ExpandedQuery {
        target: terms[0].term.clone(),
        terms,
        source: ExpansionSource::Deterministic,
    }
}

struct Tokenized {
    question: Vec<String>,
    chain: Vec<String>,
    counts: HashMap<String, u32>,
}

fn count_phrase(field: &[String], phrase: &[&str]) -> u32 {
    if field.len() < phrase.len() {
        return 0;
    }
    (0..=field.len() - phrase.len())
        .filter(|&i| phrase.iter().enumerate().all(|(k, w)| field[i + k] == *w))
        .count() as u32
}

/// Scores every document directly from its text.
pub struct BruteForce {
    ids: Vec<String>,
    docs: Vec<Tokenized>,
}

impl BruteForce {
    pub fn new(docs: &[IndexDoc]) -> Self {
        let mut ids = Vec::new();
        let mut toks = Vec::new();
        for d in docs {
            let question = tokenize(&d.question);
            let chain = tokenize(&d.chain_text);
            let mut counts = HashMap::new();
            for t in question.iter().chain(&chain) {
                *counts.entry(t.clone()).or_insert(0) += 1;
            }
            ids.push(d.qa_id.clone());
            toks.push(Tokenized {
                question,
                chain,
                counts,
            });
        }
        Self { ids, docs: toks }
    }

    fn tf(&self, doc: &Tokenized, term: &str) -> u32 {
        let parts: Vec<&str> = term.split(' ').collect();
        if parts.len() == 1 {
            doc.counts.get(term).copied().unwrap_or(0)
        } else {
            count_phrase(&doc.question, &parts) + count_phrase(&doc.chain, &parts)
        }
    }

    /// `(qa_id, relevance)` for the top `k`, ties by ascending qa_id.
    pub fn top_k(&self, query: &ExpandedQuery, k: usize) -> Vec<(String, f64)> {
        let n = self.docs.len() as f64;
        let total: u64 = self.docs.iter().map(|d| (d.question.len() + d.chain.len()) as u64).sum();
        let avgdl = total as f64 / n;
        let tfs: Vec<Vec<u32>> = query
            .terms
            .iter()
            .map(|t| self.docs.iter().map(|d| self.tf(d, &t.term)).collect())
            .collect();
        let dfs: Vec<f64> = tfs.iter().map(|col| col.iter().filter(|&&x| x > 0).count() as f64).collect();
        let mut scored = Vec::new();
        for (i, d) in self.docs.iter().enumerate() {
            let dl = (d.question.len() + d.chain.len()) as f64;
            let mut score = 0.0;
            let mut matched = false;
            for (j, qt) in query.terms.iter().enumerate() {
                let tf = tfs[j][i];
                if tf == 0 {
                    continue;
                }
                matched = true;
                let tf = f64::from(tf);
                let idf = ((n - dfs[j] + 0.5) / (dfs[j] + 0.5) + 1.0).ln();
                score += qt.weight * (idf * ((tf * (K1 + 1.0)) / (tf + K1 * (1.0 - B + B * dl / avgdl))));
            }
            if matched {
                scored.push((self.ids[i].clone(), score));
            }
        }
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k);
        scored
    }
}
