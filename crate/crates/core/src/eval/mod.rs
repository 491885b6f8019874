//! Judge-based article evaluation: knowledge-point counts, factual error
//! rates, and paired grounded-versus-baseline comparison.
//!
//! Judge output contracts:
//! - knowledge points: a numbered list (`1. ...` or `1) ...`), or `NONE`;
//! - claims: one `CLAIM: <sentence> VERDICT: correct|incorrect` line per
//!   claim, or `NONE`.
//!
//! A judged claim that does not occur in the article text is discarded and
//! audited.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::gateway::{ChatRequest, Gateway, GatewayError};
use crate::plato::{Article, ArticleVariant};
use crate::socrates::Discipline;
use crate::text::normalize_keyword;
use crate::util::parallel_map;

pub const JUDGE_PROMPT_VERSION: &str = "judge-v1";
pub const UNATTRIBUTED: &str = "unattributed";
pub const OVERALL: &str = "all";

const KNOWLEDGE_POINT_SYSTEM: &str = "You are grading an encyclopedia article (judge-v1). \
List every unique, learnable knowledge point the article contains: a fact, definition, \
mechanism or relation a reader could learn from it. Output a numbered list, one point per \
line, formatted `1. <point>`. Output NONE if there are no knowledge points.";

const CLAIM_SYSTEM: &str = "You are fact-checking an encyclopedia article (judge-v1). \
Split the article into atomic claims, one declarative sentence-level assertion each, copied \
verbatim from the article. For every claim output exactly one line \
`CLAIM: <claim> VERDICT: correct` or `CLAIM: <claim> VERDICT: incorrect`. \
Output NONE if the article makes no claims.";

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("judge backend failed: {0}")]
    Judge(#[from] GatewayError),
    #[error("unparseable judge output: {raw}")]
    Unparseable { raw: String },
    #[error("claim without verdict: {line}")]
    MissingVerdict { line: String },
    #[error("no articles in {0}")]
    NoArticles(String),
    #[error("no keyword appears in both article sets")]
    NoPairs,
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{path}: {message}")]
    Corrupt { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgedClaim {
    pub claim: String,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalAudit {
    pub keyword: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub keyword: String,
    pub variant: ArticleVariant,
    pub discipline: Option<Discipline>,
    pub knowledge_points: usize,
    pub claims: usize,
    pub errors: usize,
    pub error_rate: f64,
    pub words: usize,
    pub kp_per_1000_words: f64,
    pub judge_model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantAggregate {
    pub mean_knowledge_points: f64,
    pub mean_error_rate: f64,
    pub mean_kp_per_1000_words: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisciplineRow {
    pub discipline: String,
    pub pairs: usize,
    pub plato: VariantAggregate,
    pub baseline: VariantAggregate,
    pub reduction_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub judge_model: String,
    pub judge_prompt_version: String,
    pub rows: Vec<DisciplineRow>,
    pub overall: DisciplineRow,
    pub articles: Vec<EvalReport>,
    pub audit: Vec<EvalAudit>,
}

impl ComparisonReport {
    pub fn reduction_ratio(&self) -> Option<f64> {
        self.overall.reduction_ratio
    }

    /// Per-discipline rows followed by the overall row.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "discipline",
            "pairs",
            "plato_knowledge_points",
            "baseline_knowledge_points",
            "plato_error_rate",
            "baseline_error_rate",
            "reduction_ratio",
            "plato_kp_per_1000_words",
            "baseline_kp_per_1000_words",
        ])
        .expect("in-memory csv");
        for r in self.rows.iter().chain(std::iter::once(&self.overall)) {
            w.write_record([
                r.discipline.clone(),
                r.pairs.to_string(),
                fmt4(r.plato.mean_knowledge_points),
                fmt4(r.baseline.mean_knowledge_points),
                fmt4(r.plato.mean_error_rate),
                fmt4(r.baseline.mean_error_rate),
                r.reduction_ratio.map(fmt4).unwrap_or_default(),
                fmt4(r.plato.mean_kp_per_1000_words),
                fmt4(r.baseline.mean_kp_per_1000_words),
            ])
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8 csv")
    }

    pub fn articles_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "keyword",
            "variant",
            "discipline",
            "knowledge_points",
            "claims",
            "errors",
            "error_rate",
            "words",
        ])
        .expect("in-memory csv");
        for a in &self.articles {
            w.write_record([
                a.keyword.clone(),
                a.variant.as_str().to_string(),
                a.discipline.map(|d| d.as_str()).unwrap_or(UNATTRIBUTED).to_string(),
                a.knowledge_points.to_string(),
                a.claims.to_string(),
                a.errors.to_string(),
                fmt4(a.error_rate),
                a.words.to_string(),
            ])
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8 csv")
    }

    /// Fixed-width table of knowledge points and error rates per discipline.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<14} {:>5} {:>10} {:>10} {:>10} {:>10} {:>9}\n",
            "discipline", "pairs", "kp plato", "kp base", "err plato", "err base", "reduction"
        );
        for r in self.rows.iter().chain(std::iter::once(&self.overall)) {
            out.push_str(&format!(
                "{:<14} {:>5} {:>10.2} {:>10.2} {:>10.4} {:>10.4} {:>9}\n",
                r.discipline,
                r.pairs,
                r.plato.mean_knowledge_points,
                r.baseline.mean_knowledge_points,
                r.plato.mean_error_rate,
                r.baseline.mean_error_rate,
                r.reduction_ratio.map(fmt4).unwrap_or_else(|| "n/a".into()),
            ));
        }
        out
    }

    /// Writes `comparison.csv`, `comparison.json` and `articles.csv`.
    pub fn write(&self, dir: &Path) -> Result<(), EvalError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("comparison.csv"), self.to_csv())?;
        std::fs::write(dir.join("articles.csv"), self.articles_csv())?;
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(dir.join("comparison.json"), json + "\n")?;
        Ok(())
    }
}

fn fmt4(x: f64) -> String {
    format!("{x:.4}")
}

pub fn knowledge_point_request(article: &Article) -> ChatRequest {
    ChatRequest::solver(KNOWLEDGE_POINT_SYSTEM, article.render())
}

pub fn claim_request(article: &Article) -> ChatRequest {
    ChatRequest::solver(CLAIM_SYSTEM, article.render())
}

fn fold(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn fold_item(s: &str) -> String {
    fold(s).trim_end_matches(['.', ';', ',', ':']).trim().to_string()
}

fn is_none_reply(raw: &str) -> bool {
    raw.trim().trim_end_matches('.').eq_ignore_ascii_case("none")
}

fn strip_numbering(line: &str) -> Option<&str> {
    let digits = line.len() - line.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits == 0 {
        return None;
    }
    let rest = &line[digits..];
    let rest = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')'))?;
    rest.starts_with(char::is_whitespace).then(|| rest.trim())
}

/// Items of a numbered list, deduplicated case-insensitively in first-seen
/// order.
pub fn parse_knowledge_points(raw: &str) -> Result<Vec<String>, EvalError> {
    if is_none_reply(raw) {
        return Ok(vec![]);
    }
    let mut seen = BTreeSet::new();
    let mut items = vec![];
    let mut any = false;
    for line in raw.lines() {
        let Some(item) = strip_numbering(line.trim()) else { continue };
        any = true;
        if !item.is_empty() && seen.insert(fold_item(item)) {
            items.push(item.to_string());
        }
    }
    if !any {
        return Err(EvalError::Unparseable { raw: raw.to_string() });
    }
    Ok(items)
}

/// Claim lines with their verdicts.
pub fn parse_claims(raw: &str) -> Result<Vec<JudgedClaim>, EvalError> {
    if is_none_reply(raw) {
        return Ok(vec![]);
    }
    let mut out = vec![];
    for line in raw.lines() {
        let line = line.trim();
        let body = strip_numbering(line)
            .or_else(|| line.strip_prefix("- "))
            .unwrap_or(line);
        let lower = body.to_ascii_lowercase();
        if !lower.starts_with("claim:") {
            continue;
        }
        let Some(at) = lower.rfind("verdict:") else {
            return Err(EvalError::MissingVerdict { line: line.into() });
        };
        let claim = body["claim:".len()..at].trim().trim_end_matches(['|', ';', '-']).trim();
        let correct = match lower[at + "verdict:".len()..].trim().trim_end_matches('.') {
            "correct" => true,
            "incorrect" => false,
            _ => return Err(EvalError::MissingVerdict { line: line.into() }),
        };
        if claim.is_empty() {
            return Err(EvalError::Unparseable { raw: raw.to_string() });
        }
        out.push(JudgedClaim {
            claim: claim.to_string(),
            correct,
        });
    }
    if out.is_empty() {
        return Err(EvalError::Unparseable { raw: raw.to_string() });
    }
    Ok(out)
}

/// Case- and whitespace-insensitive containment, ignoring a trailing period
/// on the claim.
pub fn claim_in_article(claim: &str, article_text: &str) -> bool {
    let c = fold_item(claim);
    !c.is_empty() && fold(article_text).contains(&c)
}

fn is_empty_article(article: &Article) -> bool {
    article.sections.iter().all(|s| s.body.trim().is_empty())
}

pub fn count_knowledge_points(article: &Article, gateway: &Gateway, judge: &str) -> Result<usize, EvalError> {
    if is_empty_article(article) {
        return Ok(0);
    }
    let reply = gateway.complete(judge, &knowledge_point_request(article))?;
    Ok(parse_knowledge_points(&reply.text)?.len())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClaimCount {
    pub claims: usize,
    pub errors: usize,
    pub discarded: Vec<JudgedClaim>,
}

pub fn count_factual_errors(article: &Article, gateway: &Gateway, judge: &str) -> Result<ClaimCount, EvalError> {
    if is_empty_article(article) {
        return Ok(ClaimCount {
            claims: 0,
            errors: 0,
            discarded: vec![],
        });
    }
    let reply = gateway.complete(judge, &claim_request(article))?;
    let text = article.render();
    let (kept, discarded): (Vec<_>, Vec<_>) = parse_claims(&reply.text)?
        .into_iter()
        .partition(|c| claim_in_article(&c.claim, &text));
    Ok(ClaimCount {
        claims: kept.len(),
        errors: kept.iter().filter(|c| !c.correct).count(),
        discarded,
    })
}

/// Both judge passes for one article.
pub fn evaluate_article(
    article: &Article,
    gateway: &Gateway,
    judge: &str,
) -> Result<(EvalReport, Vec<EvalAudit>), EvalError> {
    let judge_model = gateway.spec(judge)?.model_name.clone();
    let knowledge_points = count_knowledge_points(article, gateway, judge)?;
    let counted = count_factual_errors(article, gateway, judge)?;
    let words = article.body_text().split_whitespace().count();
    let audit = counted
        .discarded
        .iter()
        .map(|c| EvalAudit {
            keyword: article.keyword.clone(),
            reason: format!(
                "{} judge claim not found in article, discarded: {}",
                article.variant.as_str(),
                c.claim
            ),
        })
        .collect();
    let report = EvalReport {
        keyword: article.keyword.clone(),
        variant: article.variant,
        discipline: article.discipline,
        knowledge_points,
        claims: counted.claims,
        errors: counted.errors,
        error_rate: if counted.claims == 0 {
            0.0
        } else {
            counted.errors as f64 / counted.claims as f64
        },
        words,
        kp_per_1000_words: if words == 0 {
            0.0
        } else {
            knowledge_points as f64 * 1000.0 / words as f64
        },
        judge_model,
    };
    Ok((report, audit))
}

fn keyed<'a>(
    articles: &'a [Article],
    label: &str,
    audit: &mut Vec<EvalAudit>,
) -> BTreeMap<String, &'a Article> {
    let mut out = BTreeMap::new();
    for a in articles {
        let key = normalize_keyword(&a.keyword);
        match out.entry(key) {
            std::collections::btree_map::Entry::Occupied(_) => audit.push(EvalAudit {
                keyword: a.keyword.clone(),
                reason: format!("duplicate {label} article, later copy ignored"),
            }),
            std::collections::btree_map::Entry::Vacant(slot) => {
                slot.insert(a);
            }
        }
    }
    out
}

fn aggregate(reports: &[&EvalReport]) -> VariantAggregate {
    let n = reports.len().max(1) as f64;
    VariantAggregate {
        mean_knowledge_points: reports.iter().map(|r| r.knowledge_points as f64).sum::<f64>() / n,
        mean_error_rate: reports.iter().map(|r| r.error_rate).sum::<f64>() / n,
        mean_kp_per_1000_words: reports.iter().map(|r| r.kp_per_1000_words).sum::<f64>() / n,
    }
}

fn row(discipline: String, pairs: &[(&EvalReport, &EvalReport)]) -> DisciplineRow {
    let plato = aggregate(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let baseline = aggregate(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
    let reduction_ratio = (baseline.mean_error_rate > 0.0)
        .then(|| (baseline.mean_error_rate - plato.mean_error_rate) / baseline.mean_error_rate);
    DisciplineRow {
        discipline,
        pairs: pairs.len(),
        plato,
        baseline,
        reduction_ratio,
    }
}

/// Pairs articles by normalized keyword, judges every paired article with the
/// same backend, and aggregates per discipline. The discipline of a pair is
/// the one recorded on the grounded article (its home course), else the
/// baseline's.
pub fn compare(
    plato: &[Article],
    baseline: &[Article],
    gateway: &Gateway,
    judge: &str,
    workers: usize,
) -> Result<ComparisonReport, EvalError> {
    let judge_model = gateway.spec(judge)?.model_name.clone();
    let mut audit = vec![];
    let p = keyed(plato, "plato", &mut audit);
    let b = keyed(baseline, "baseline", &mut audit);
    for (key, a) in &p {
        if !b.contains_key(key) {
            audit.push(EvalAudit {
                keyword: a.keyword.clone(),
                reason: "no baseline article for this keyword, excluded".into(),
            });
        }
    }
    for (key, a) in &b {
        if !p.contains_key(key) {
            audit.push(EvalAudit {
                keyword: a.keyword.clone(),
                reason: "no plato article for this keyword, excluded".into(),
            });
        }
    }
    let pairs: Vec<(&Article, &Article)> = p
        .iter()
        .filter_map(|(k, a)| b.get(k).map(|bb| (*a, *bb)))
        .collect();
    if pairs.is_empty() {
        return Err(EvalError::NoPairs);
    }
    let jobs: Vec<&Article> = pairs.iter().flat_map(|(a, b)| [*a, *b]).collect();
    let results = parallel_map(&jobs, workers, |a| evaluate_article(a, gateway, judge));
    let mut reports = Vec::with_capacity(results.len());
    for r in results {
        let (report, extra) = r?;
        audit.extend(extra);
        reports.push(report);
    }

    for (i, (pa, ba)) in pairs.iter().enumerate() {
        let d = pa.discipline.or(ba.discipline);
        reports[2 * i].discipline = d;
        reports[2 * i + 1].discipline = d;
    }
    let mut by_discipline: BTreeMap<String, Vec<(&EvalReport, &EvalReport)>> = BTreeMap::new();
    let mut all = vec![];
    for i in 0..pairs.len() {
        let discipline = reports[2 * i]
            .discipline
            .map(|d| d.as_str().to_string())
            .unwrap_or_else(|| UNATTRIBUTED.to_string());
        let pair = (&reports[2 * i], &reports[2 * i + 1]);
        by_discipline.entry(discipline).or_default().push(pair);
        all.push(pair);
    }
    let rows = by_discipline.into_iter().map(|(d, ps)| row(d, &ps)).collect();
    let overall = row(OVERALL.to_string(), &all);
    Ok(ComparisonReport {
        judge_model,
        judge_prompt_version: JUDGE_PROMPT_VERSION.into(),
        rows,
        overall,
        articles: reports,
        audit,
    })
}

/// Every `*.json` article in `dir`, in file-name order.
pub fn load_articles(dir: &Path) -> Result<Vec<Article>, EvalError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(EvalError::NoArticles(dir.display().to_string()));
    }
    paths
        .iter()
        .map(|p| {
            let raw = std::fs::read_to_string(p)?;
            serde_json::from_str(&raw).map_err(|e| EvalError::Corrupt {
                path: p.display().to_string(),
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests;
