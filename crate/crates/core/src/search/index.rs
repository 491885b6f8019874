//! Positional inverted index with weighted BM25 scoring.
//!
//! Persisted as three files:
//!
//! ```text
//! index.json    format version, corpus constants, per-document metadata,
//!               term count and postings checksum
//! postings.bin  little-endian binary postings, terms in sorted order:
//!               u32 term_len, term bytes, u32 n_postings,
//!               then per posting u32 doc, u32 n_positions, u32 positions...
//! docs.jsonl    question and chain text per document, for snippets
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ExpandedQuery, SearchConfig, SearchError, SearchHit};
use crate::digest::sha256_hex;
use crate::socrates::Category;
use crate::store::{KnowledgeStore, ScanFilter};
use crate::text::{ceil_boundary, floor_boundary, tokenize, word_spans};
use crate::util::read_jsonl;

const POSTINGS_MAGIC: &[u8; 4] = b"LCPX";
const SNIPPET_RADIUS: usize = 80;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocMeta {
    pub qa_id: String,
    pub course_id: String,
    pub category: Category,
    pub length: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexDoc {
    pub qa_id: String,
    pub course_id: String,
    pub category: Category,
    pub question: String,
    pub chain_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Posting {
    doc: u32,
    positions: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexMeta {
    format_version: u32,
    doc_count: usize,
    total_length: u64,
    avg_doc_length: f64,
    term_count: usize,
    postings_sha256: String,
    docs: Vec<DocMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DocText {
    qa_id: String,
    question: String,
    chain_text: String,
}

/// Immutable once built; safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Index {
    docs: Vec<DocMeta>,
    texts: Vec<DocText>,
    postings: BTreeMap<String, Vec<Posting>>,
    doc_by_id: BTreeMap<String, u32>,
    total_length: u64,
}

/// Token positions of one document; the chain starts one slot after the
/// question so phrases never span the two fields.
fn positions_of(question: &str, chain: &str) -> (Vec<(String, u32)>, u32) {
    let q = tokenize(question);
    let c = tokenize(chain);
    let length = (q.len() + c.len()) as u32;
    let gap = q.len() as u32 + 1;
    let mut out = Vec::with_capacity(q.len() + c.len());
    out.extend(q.into_iter().enumerate().map(|(i, t)| (t, i as u32)));
    out.extend(c.into_iter().enumerate().map(|(i, t)| (t, gap + i as u32)));
    (out, length)
}

impl Index {
    pub fn build(store: &KnowledgeStore) -> Result<Index, SearchError> {
        let docs: Vec<IndexDoc> = store
            .scan(ScanFilter::default())
            .map(|qa| IndexDoc {
                qa_id: qa.qa_id.clone(),
                course_id: qa.course_id.clone(),
                category: qa.category,
                question: qa.question.clone(),
                chain_text: qa.chain_text.clone(),
            })
            .collect();
        Self::from_docs(docs)
    }

    /// Builds from raw documents; order does not matter, ids must be unique.
    pub fn from_docs(mut docs: Vec<IndexDoc>) -> Result<Index, SearchError> {
        if docs.is_empty() {
            return Err(SearchError::EmptyCorpus);
        }
        docs.sort_by(|a, b| a.qa_id.cmp(&b.qa_id));
        if let Some(w) = docs.windows(2).find(|w| w[0].qa_id == w[1].qa_id) {
            return Err(SearchError::DuplicateDoc(w[0].qa_id.clone()));
        }
        let tokenized: Vec<(Vec<(String, u32)>, u32)> =
            docs.par_iter().map(|d| positions_of(&d.question, &d.chain_text)).collect();
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut metas = Vec::with_capacity(docs.len());
        let mut total_length = 0u64;
        for (doc_no, (doc, (tokens, length))) in docs.iter().zip(tokenized).enumerate() {
            let mut per_term: BTreeMap<String, Vec<u32>> = BTreeMap::new();
            for (t, pos) in tokens {
                per_term.entry(t).or_default().push(pos);
            }
            for (t, positions) in per_term {
                postings.entry(t).or_default().push(Posting {
                    doc: doc_no as u32,
                    positions,
                });
            }
            total_length += u64::from(length);
            metas.push(DocMeta {
                qa_id: doc.qa_id.clone(),
                course_id: doc.course_id.clone(),
                category: doc.category,
                length,
            });
        }
        let texts = docs
            .into_iter()
            .map(|d| DocText {
                qa_id: d.qa_id,
                question: d.question,
                chain_text: d.chain_text,
            })
            .collect();
        Ok(Self::assemble(metas, texts, postings, total_length))
    }

    fn assemble(
        docs: Vec<DocMeta>,
        texts: Vec<DocText>,
        postings: BTreeMap<String, Vec<Posting>>,
        total_length: u64,
    ) -> Index {
        let doc_by_id = docs.iter().enumerate().map(|(i, d)| (d.qa_id.clone(), i as u32)).collect();
        Index {
            docs,
            texts,
            postings,
            doc_by_id,
            total_length,
        }
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.total_length as f64 / self.docs.len() as f64
    }

    pub fn docs(&self) -> &[DocMeta] {
        &self.docs
    }

    pub fn doc(&self, qa_id: &str) -> Option<&DocMeta> {
        self.doc_by_id.get(qa_id).map(|&i| &self.docs[i as usize])
    }

    pub fn doc_course(&self, qa_id: &str) -> Option<&str> {
        self.doc(qa_id).map(|d| d.course_id.as_str())
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    /// `(qa_id, term_frequency)` in qa_id order for a single token.
    pub fn postings(&self, term: &str) -> Vec<(&str, u32)> {
        self.postings
            .get(term)
            .map(|ps| {
                ps.iter()
                    .map(|p| (self.docs[p.doc as usize].qa_id.as_str(), p.positions.len() as u32))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Per-document frequency of a term, which may be a space-separated
    /// phrase matched on consecutive positions.
    fn frequencies(&self, term: &str) -> Vec<(u32, u32)> {
        let parts: Vec<&str> = term.split(' ').filter(|p| !p.is_empty()).collect();
        match parts.as_slice() {
            [] => Vec::new(),
            [single] => self
                .postings
                .get(*single)
                .map(|ps| ps.iter().map(|p| (p.doc, p.positions.len() as u32)).collect())
                .unwrap_or_default(),
            [first, rest @ ..] => {
                let Some(head) = self.postings.get(*first) else {
                    return Vec::new();
                };
                let mut tails = Vec::with_capacity(rest.len());
                for t in rest {
                    match self.postings.get(*t) {
                        Some(ps) => tails.push(ps),
                        None => return Vec::new(),
                    }
                }
                let mut out = Vec::new();
                for p in head {
                    let mut lists = Vec::with_capacity(tails.len());
                    for ps in &tails {
                        match ps.binary_search_by_key(&p.doc, |q| q.doc) {
                            Ok(i) => lists.push(&ps[i].positions),
                            Err(_) => break,
                        }
                    }
                    if lists.len() != tails.len() {
                        continue;
                    }
                    let tf = p
                        .positions
                        .iter()
                        .filter(|&&start| {
                            lists
                                .iter()
                                .enumerate()
                                .all(|(k, pos)| pos.binary_search(&(start + k as u32 + 1)).is_ok())
                        })
                        .count() as u32;
                    if tf > 0 {
                        out.push((p.doc, tf));
                    }
                }
                out
            }
        }
    }

    /// Weighted BM25 relevance of every matching document, summed over
    /// query terms in query order.
    fn relevance(&self, query: &ExpandedQuery, config: &SearchConfig) -> Vec<(u32, f64)> {
        let n = self.docs.len() as f64;
        let avgdl = self.avg_doc_length();
        let (k1, b) = (config.k1, config.b);
        let mut scores: BTreeMap<u32, f64> = BTreeMap::new();
        for qt in &query.terms {
            let freqs = self.frequencies(&qt.term);
            if freqs.is_empty() {
                continue;
            }
            let df = freqs.len() as f64;
            let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
            for (doc, tf) in freqs {
                let tf = f64::from(tf);
                let dl = f64::from(self.docs[doc as usize].length);
                let part = idf * ((tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * dl / avgdl)));
                *scores.entry(doc).or_insert(0.0) += qt.weight * part;
            }
        }
        scores.into_iter().collect()
    }

    /// Top-k documents by relevance, ties by ascending qa_id.
    pub fn search(&self, query: &ExpandedQuery, k: usize, config: &SearchConfig) -> Result<Vec<SearchHit>, SearchError> {
        if k == 0 {
            return Err(SearchError::InvalidK);
        }
        let mut scored = self.relevance(query, config);
        // Doc numbers follow qa_id order, so the secondary key is the doc number.
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(k);
        let max = scored.first().map_or(0.0, |s| s.1);
        Ok(scored
            .into_iter()
            .map(|(doc, relevance)| {
                let meta = &self.docs[doc as usize];
                let norm = if max > 0.0 { relevance / max } else { 0.0 };
                SearchHit {
                    qa_id: meta.qa_id.clone(),
                    course_id: meta.course_id.clone(),
                    category: meta.category,
                    relevance,
                    xdisc: 0.0,
                    score: config.alpha * norm,
                    snippet: self.snippet(doc, query),
                }
            })
            .collect())
    }

    /// Window around the earliest query-term match, taken from the question
    /// if it matches there, else from the chain.
    fn snippet(&self, doc: u32, query: &ExpandedQuery) -> String {
        let text = &self.texts[doc as usize];
        let phrases: Vec<Vec<&str>> = query.terms.iter().map(|t| t.term.split(' ').collect()).collect();
        for field in [&text.question, &text.chain_text] {
            let spans = word_spans(field);
            let hit = (0..spans.len()).find_map(|i| {
                phrases.iter().find_map(|ph| {
                    let ok = ph.iter().enumerate().all(|(k, w)| spans.get(i + k).is_some_and(|s| s.2 == *w));
                    ok.then(|| (spans[i].0, spans[i + ph.len() - 1].1))
                })
            });
            if let Some((start, end)) = hit {
                let from = floor_boundary(field, start.saturating_sub(SNIPPET_RADIUS));
                let to = ceil_boundary(field, end + SNIPPET_RADIUS);
                return field[from..to].trim().to_string();
            }
        }
        let to = floor_boundary(&text.question, 2 * SNIPPET_RADIUS);
        text.question[..to].trim().to_string()
    }

    pub fn question(&self, qa_id: &str) -> Option<&str> {
        self.doc_by_id.get(qa_id).map(|&i| self.texts[i as usize].question.as_str())
    }

    pub fn chain_text(&self, qa_id: &str) -> Option<&str> {
        self.doc_by_id.get(qa_id).map(|&i| self.texts[i as usize].chain_text.as_str())
    }

    fn postings_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(POSTINGS_MAGIC);
        for (term, ps) in &self.postings {
            out.extend_from_slice(&(term.len() as u32).to_le_bytes());
            out.extend_from_slice(term.as_bytes());
            out.extend_from_slice(&(ps.len() as u32).to_le_bytes());
            for p in ps {
                out.extend_from_slice(&p.doc.to_le_bytes());
                out.extend_from_slice(&(p.positions.len() as u32).to_le_bytes());
                for pos in &p.positions {
                    out.extend_from_slice(&pos.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn save(&self, dir: &Path) -> Result<(), SearchError> {
        fs::create_dir_all(dir)?;
        let bin = self.postings_bytes();
        let meta = IndexMeta {
            format_version: 1,
            doc_count: self.docs.len(),
            total_length: self.total_length,
            avg_doc_length: self.avg_doc_length(),
            term_count: self.postings.len(),
            postings_sha256: sha256_hex(&bin),
            docs: self.docs.clone(),
        };
        fs::write(dir.join("postings.bin"), &bin)?;
        fs::write(
            dir.join("index.json"),
            serde_json::to_string_pretty(&meta).expect("index metadata serializes"),
        )?;
        crate::util::write_jsonl(&dir.join("docs.jsonl"), &self.texts)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Index, SearchError> {
        let corrupt = |m: String| SearchError::Corrupt(m);
        let meta: IndexMeta = serde_json::from_str(&fs::read_to_string(dir.join("index.json"))?)
            .map_err(|e| corrupt(format!("index.json: {e}")))?;
        let bin = fs::read(dir.join("postings.bin"))?;
        if sha256_hex(&bin) != meta.postings_sha256 {
            return Err(corrupt("postings.bin checksum mismatch".into()));
        }
        let texts: Vec<DocText> = read_jsonl(&dir.join("docs.jsonl"))?;
        if texts.len() != meta.doc_count || meta.docs.len() != meta.doc_count {
            return Err(corrupt("document count mismatch".into()));
        }
        let mut r = Reader { buf: &bin, at: 0 };
        if r.take(4)? != POSTINGS_MAGIC {
            return Err(corrupt("postings.bin: bad magic".into()));
        }
        let mut postings = BTreeMap::new();
        while r.at < bin.len() {
            let len = r.u32()? as usize;
            let term = String::from_utf8(r.take(len)?.to_vec()).map_err(|e| corrupt(e.to_string()))?;
            let n = r.u32()?;
            let mut ps = Vec::with_capacity(n as usize);
            for _ in 0..n {
                let doc = r.u32()?;
                if doc as usize >= meta.doc_count {
                    return Err(corrupt(format!("posting for `{term}` references doc {doc}")));
                }
                let np = r.u32()?;
                let positions = (0..np).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
                ps.push(Posting { doc, positions });
            }
            postings.insert(term, ps);
        }
        if postings.len() != meta.term_count {
            return Err(corrupt("term count mismatch".into()));
        }
        Ok(Self::assemble(meta.docs, texts, postings, meta.total_length))
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SearchError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| SearchError::Corrupt("postings.bin truncated".into()))?;
        let out = &self.buf[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, SearchError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
