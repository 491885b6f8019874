use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::Article;
use crate::gateway::{ChatRequest, Gateway};
use crate::search::Index;
use crate::text::{normalize_keyword, tokenize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordSet {
    pub keywords: Vec<String>,
    pub source_page: String,
}

const STOPWORDS: &[&str] = &[
    "about", "above", "after", "again", "also", "among", "and", "any", "are", "because", "been", "before",
    "being", "between", "both", "but", "can", "cannot", "could", "does", "each", "even", "every", "for",
    "from", "has", "have", "here", "how", "into", "its", "just", "like", "many", "more", "most", "much",
    "must", "not", "now", "one", "only", "other", "our", "over", "same", "see", "should", "since", "some",
    "such", "than", "that", "the", "their", "them", "then", "there", "these", "they", "this", "those",
    "through", "too", "two", "under", "very", "was", "way", "were", "what", "when", "where", "which",
    "while", "who", "why", "will", "with", "would", "yet", "you", "your", "does", "did", "doing", "made",
    "make", "makes", "use", "used", "uses", "using", "within", "without", "knowledge", "base", "section",
];

pub fn keyword_prompt(article: &Article, n: usize) -> (String, String) {
    (
        format!(
            "Read the encyclopedia article and list the {n} most relevant technical keywords it \
             mentions, other than its own title. One keyword per line, no numbering or commentary."
        ),
        format!("Title: {}\n\n{}", article.keyword, article.body_text()),
    )
}

/// Up to `n` normalized, deduplicated keywords, never the page's own keyword.
/// Falls back to tf-idf terms when the backend is absent or fails.
pub fn extract_keywords(
    article: &Article,
    n: usize,
    backend: Option<(&Gateway, &str)>,
    corpus: Option<&Index>,
) -> KeywordSet {
    let own = normalize_keyword(&article.keyword);
    if let Some((gateway, backend_id)) = backend {
        let (system, user) = keyword_prompt(article, n);
        match gateway.complete(backend_id, &ChatRequest::solver(system, user)) {
            Ok(r) => {
                let mut seen = BTreeSet::new();
                let mut keywords = Vec::new();
                for line in r.text.lines() {
                    if keywords.len() == n {
                        break;
                    }
                    let cleaned = line
                        .trim()
                        .trim_start_matches(|c: char| c.is_ascii_digit() || "-*.)•".contains(c));
                    let k = normalize_keyword(cleaned);
                    if !k.is_empty() && k != own && seen.insert(k.clone()) {
                        keywords.push(k);
                    }
                }
                if !keywords.is_empty() {
                    return KeywordSet {
                        keywords,
                        source_page: article.keyword.clone(),
                    };
                }
            }
            Err(e) => tracing::warn!(keyword = %article.keyword, error = %e, "keyword backend failed, using tf-idf"),
        }
    }
    KeywordSet {
        keywords: tfidf_keywords(article, n, corpus),
        source_page: article.keyword.clone(),
    }
}

fn is_citation_label(token: &str) -> bool {
    token
        .strip_prefix('s')
        .is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
}

/// Top-`n` single-token terms of the article by tf * idf against `corpus`;
/// without a corpus every idf is 1. Ties break alphabetically.
pub fn tfidf_keywords(article: &Article, n: usize, corpus: Option<&Index>) -> Vec<String> {
    let own: BTreeSet<String> = tokenize(&article.keyword).into_iter().collect();
    let mut tf: BTreeMap<String, u32> = BTreeMap::new();
    for t in tokenize(&article.body_text()) {
        let keep = t.chars().count() >= 3
            && !t.chars().all(|c| c.is_ascii_digit())
            && !is_citation_label(&t)
            && !STOPWORDS.contains(&t.as_str())
            && !own.contains(&t);
        if keep {
            *tf.entry(t).or_default() += 1;
        }
    }
    let n_docs = corpus.map_or(0, Index::doc_count) as f64;
    let mut scored: Vec<(String, f64)> = tf
        .into_iter()
        .map(|(t, f)| {
            let idf = match corpus {
                Some(idx) => ((n_docs + 1.0) / (idx.postings(&t).len() as f64 + 1.0)).ln() + 1.0,
                None => 1.0,
            };
            (t, f64::from(f) * idf)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.into_iter().take(n).map(|(t, _)| t).collect()
}
