//! Article synthesis from retrieved scaffolds, the ungrounded baseline, and
//! keyword extraction for recursive expansion.
//!
//! The scaffold is handed to the author model as numbered context blocks
//! (`[S1]`, `[S2]`, ...). The model cites blocks by label; citations are
//! parsed back into per-section provenance and checked against the scaffold.

mod keywords;
mod workflow;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::gateway::{ChatRequest, Gateway, GatewayError};
use crate::search::{Index, Scaffold, SearchHit};
use crate::socrates::Discipline;
use crate::store::KnowledgeStore;
use crate::text::{normalize_keyword, truncate_chars};

pub use keywords::{extract_keywords, tfidf_keywords, KeywordSet};
pub use workflow::{generate_page_workflow, PageOutput, WorkflowBackends, WorkflowError, WorkflowParams};

pub const KEY_TAKEAWAYS: &str = "Key Takeaways";
pub const INTRODUCTION: &str = "Introduction";
pub const PRINCIPLES: &str = "Principles and Mechanisms";
pub const APPLICATIONS: &str = "Cross-Domain Applications";
pub const SECTION_HEADINGS: [&str; 4] = [KEY_TAKEAWAYS, INTRODUCTION, PRINCIPLES, APPLICATIONS];

pub const WHAT_WHY_BUDGET: usize = 20;
pub const APPLICATION_BUDGET: usize = 30;
const CHAIN_EXCERPT_BYTES: usize = 1200;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleGuide {
    pub name: String,
    pub directives: Vec<String>,
}

impl Default for StyleGuide {
    fn default() -> Self {
        Self {
            name: "lecture-hall".into(),
            directives: vec![
                "Write for a curious reader with undergraduate science, not for specialists.".into(),
                "Build each idea from something the reader already knows before naming it.".into(),
                "Prefer physical pictures and worked reasoning over lists of facts.".into(),
                "Show where a result comes from, then what it is good for.".into(),
                "Keep equations few and explain every symbol that appears.".into(),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArticleVariant {
    Plato,
    Baseline,
}

impl ArticleVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            ArticleVariant::Plato => "plato",
            ArticleVariant::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub heading: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub keyword: String,
    pub language: String,
    pub variant: ArticleVariant,
    pub sections: Vec<Section>,
    /// Section heading to cited qa_ids, in first-citation order.
    pub provenance: BTreeMap<String, Vec<String>>,
    pub model_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub home_course: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discipline: Option<Discipline>,
}

impl Article {
    pub fn section(&self, heading: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.heading == heading)
    }

    pub fn cited_qa_ids(&self) -> std::collections::BTreeSet<&str> {
        self.provenance.values().flatten().map(String::as_str).collect()
    }

    /// Markdown rendering: title, then one `##` block per section.
    pub fn render(&self) -> String {
        let mut out = format!("# {}\n", self.keyword);
        for s in &self.sections {
            out.push_str(&format!("\n## {}\n\n{}\n", s.heading, s.body.trim()));
        }
        out
    }

    /// Concatenated section bodies.
    pub fn body_text(&self) -> String {
        self.sections.iter().map(|s| s.body.as_str()).collect::<Vec<_>>().join("\n\n")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PlatoError {
    #[error("scaffold target `{scaffold}` does not match keyword `{keyword}`")]
    TargetMismatch { keyword: String, scaffold: String },
    #[error("no coverage: the knowledge base has nothing on `{0}`")]
    NoCoverage(String),
    #[error("author backend failed: {0}")]
    Backend(#[from] GatewayError),
    #[error("article is missing section `{0}`")]
    MissingSection(String),
    #[error("article cites [{label}], which is not in the scaffold")]
    UnknownCitation { label: String },
    #[error("section `{0}` cites no scaffold source")]
    MissingProvenance(String),
    #[error("scaffold hit {0} has no text in the corpus")]
    MissingSource(String),
    #[error("empty article")]
    EmptyArticle,
}

/// Question and chain text for a qa_id.
pub trait ChainSource {
    fn question(&self, qa_id: &str) -> Option<&str>;
    fn chain_text(&self, qa_id: &str) -> Option<&str>;
}

impl ChainSource for Index {
    fn question(&self, qa_id: &str) -> Option<&str> {
        Index::question(self, qa_id)
    }
    fn chain_text(&self, qa_id: &str) -> Option<&str> {
        Index::chain_text(self, qa_id)
    }
}

impl ChainSource for KnowledgeStore {
    fn question(&self, qa_id: &str) -> Option<&str> {
        self.get(qa_id).ok().map(|q| q.question.as_str())
    }
    fn chain_text(&self, qa_id: &str) -> Option<&str> {
        self.get(qa_id).ok().map(|q| q.chain_text.as_str())
    }
}

/// System and user prompt for the author model. `context` is the only part
/// that differs between grounded and baseline generation.
pub fn author_prompt(keyword: &str, style: &StyleGuide, language: &str, context: &str) -> (String, String) {
    let mut system = format!(
        "You are an encyclopedia author. Follow the style guide \"{}\":\n",
        style.name
    );
    for d in &style.directives {
        system.push_str(&format!("- {d}\n"));
    }
    system.push_str(&format!(
        "Write in language `{language}`. Use exactly these level-2 headings, in order: {}. \
         When a sentence draws on a context block, cite the block label in square brackets, \
         for example [S2]. Never cite a label that does not appear in the context. If the context \
         has no material for a section, say that the knowledge base does not cover it rather than \
         inventing content.",
        SECTION_HEADINGS.iter().map(|h| format!("## {h}")).collect::<Vec<_>>().join(", ")
    ));
    let user = format!("Keyword: {keyword}\n\nContext:\n{context}\n\nWrite the article.");
    (system, user)
}

/// Context label to its qa_id and the section it grounds.
pub type Labels = BTreeMap<String, (String, &'static str)>;

/// Labelled context blocks plus the label of each scaffold hit.
pub fn context_block(
    scaffold: &Scaffold,
    source: &dyn ChainSource,
) -> Result<(String, Labels), PlatoError> {
    let what_why: Vec<&SearchHit> = scaffold.what_why.iter().take(WHAT_WHY_BUDGET).collect();
    let application: Vec<&SearchHit> = scaffold.application.iter().take(APPLICATION_BUDGET).collect();
    let mut labels = BTreeMap::new();
    let mut blocks = String::new();
    let mut ww_labels = Vec::new();
    let mut app_labels = Vec::new();
    let mut n = 0;
    for (hits, kind, section) in [
        (&what_why, "What & Why", PRINCIPLES),
        (&application, "Application", APPLICATIONS),
    ] {
        for h in hits.iter() {
            n += 1;
            let label = format!("S{n}");
            let question = source
                .question(&h.qa_id)
                .ok_or_else(|| PlatoError::MissingSource(h.qa_id.clone()))?;
            let chain = source
                .chain_text(&h.qa_id)
                .ok_or_else(|| PlatoError::MissingSource(h.qa_id.clone()))?;
            let question = question.split_whitespace().collect::<Vec<_>>().join(" ");
            blocks.push_str(&format!(
                "[{label}] {kind}: {question}\n{}\n\n",
                truncate_chars(chain.trim(), CHAIN_EXCERPT_BYTES)
            ));
            if section == PRINCIPLES {
                ww_labels.push(label.clone());
            } else {
                app_labels.push(label.clone());
            }
            labels.insert(label, (h.qa_id.clone(), section));
        }
    }
    let list = |ls: &[String]| if ls.is_empty() { "none".to_string() } else { ls.join(", ") };
    let header = format!(
        "What & Why sources: {}\nApplication sources: {}\n\n",
        list(&ww_labels),
        list(&app_labels)
    );
    Ok((format!("{header}{}", blocks.trim_end()), labels))
}

/// Splits `## ` headed markdown into the four standard sections, in
/// standard order, followed by any extra sections.
pub fn parse_sections(text: &str) -> Result<Vec<Section>, PlatoError> {
    if text.trim().is_empty() {
        return Err(PlatoError::EmptyArticle);
    }
    let mut found: Vec<Section> = Vec::new();
    for line in text.lines() {
        if let Some(h) = line.trim_start().strip_prefix("## ") {
            let h = h.trim().trim_end_matches('#').trim();
            let heading = SECTION_HEADINGS
                .iter()
                .find(|s| s.eq_ignore_ascii_case(h))
                .map_or(h.to_string(), |s| s.to_string());
            found.push(Section {
                heading,
                body: String::new(),
            });
        } else if let Some(cur) = found.last_mut() {
            cur.body.push_str(line);
            cur.body.push('\n');
        }
    }
    for s in &mut found {
        s.body = s.body.trim().to_string();
    }
    let mut ordered = Vec::with_capacity(found.len());
    for h in SECTION_HEADINGS {
        let i = found
            .iter()
            .position(|s| s.heading == h)
            .ok_or_else(|| PlatoError::MissingSection(h.to_string()))?;
        ordered.push(found.remove(i));
    }
    found.retain(|s| !SECTION_HEADINGS.contains(&s.heading.as_str()));
    ordered.extend(found);
    Ok(ordered)
}

/// Labels cited in `text`: bracket groups made only of `S<n>` items, such as
/// `[S1]` or `[S2, S5]`.
pub fn parse_citations(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('[') {
        let after = &rest[open + 1..];
        let Some(close) = after.find(']') else { break };
        let inner = &after[..close];
        let items: Vec<&str> = inner.split([',', ';']).map(str::trim).collect();
        let is_citation = !inner.trim().is_empty()
            && items.iter().all(|it| {
                it.strip_prefix('S')
                    .is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
            });
        if is_citation {
            out.extend(items.iter().map(|s| s.to_string()));
        }
        rest = &after[close + 1..];
    }
    out
}

pub fn coverage_note(keyword: &str, section: &str) -> String {
    let what = if section == PRINCIPLES {
        "the principles behind"
    } else {
        "applications of"
    };
    format!("The verified knowledge base does not yet contain derivations covering {what} {keyword}.")
}

fn model_name(gateway: &Gateway, backend_id: &str) -> String {
    gateway
        .spec(backend_id)
        .map(|s| s.model_name.clone())
        .unwrap_or_else(|_| backend_id.to_string())
}

/// Narrates `scaffold` into a four-section article with per-section provenance.
pub fn synthesize(
    keyword: &str,
    scaffold: &Scaffold,
    source: &dyn ChainSource,
    style: &StyleGuide,
    language: &str,
    gateway: &Gateway,
    backend_id: &str,
) -> Result<Article, PlatoError> {
    if normalize_keyword(&scaffold.target) != normalize_keyword(keyword) {
        return Err(PlatoError::TargetMismatch {
            keyword: keyword.to_string(),
            scaffold: scaffold.target.clone(),
        });
    }
    if scaffold.is_empty() {
        return Err(PlatoError::NoCoverage(keyword.to_string()));
    }
    let (context, labels) = context_block(scaffold, source)?;
    let (system, user) = author_prompt(keyword, style, language, &context);
    let response = gateway.complete(backend_id, &ChatRequest::author(system, user))?;
    let mut sections = parse_sections(&response.text)?;
    let mut provenance: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for s in &sections {
        for label in parse_citations(&s.body) {
            let (qa_id, _) = labels
                .get(&label)
                .ok_or_else(|| PlatoError::UnknownCitation { label: label.clone() })?;
            let cited = provenance.entry(s.heading.clone()).or_default();
            if !cited.contains(qa_id) {
                cited.push(qa_id.clone());
            }
        }
    }
    for (section, side_empty) in [
        (PRINCIPLES, scaffold.what_why.is_empty()),
        (APPLICATIONS, scaffold.application.is_empty()),
    ] {
        let sec = sections.iter_mut().find(|s| s.heading == section).expect("standard sections present");
        if side_empty {
            // Nothing to ground this section in; state the gap instead of
            // keeping whatever the author produced.
            sec.body = coverage_note(keyword, section);
            provenance.remove(section);
        } else if provenance.get(section).is_none_or(Vec::is_empty) {
            return Err(PlatoError::MissingProvenance(section.to_string()));
        }
    }
    Ok(Article {
        keyword: keyword.to_string(),
        language: language.to_string(),
        variant: ArticleVariant::Plato,
        sections,
        provenance,
        model_name: model_name(gateway, backend_id),
        home_course: None,
        discipline: None,
    })
}

/// Same template with an empty context block and no provenance.
pub fn baseline_generate(
    keyword: &str,
    style: &StyleGuide,
    language: &str,
    gateway: &Gateway,
    backend_id: &str,
) -> Result<Article, PlatoError> {
    let (system, user) = author_prompt(keyword, style, language, "");
    let response = gateway.complete(backend_id, &ChatRequest::author(system, user))?;
    Ok(Article {
        keyword: keyword.to_string(),
        language: language.to_string(),
        variant: ArticleVariant::Baseline,
        sections: parse_sections(&response.text)?,
        provenance: BTreeMap::new(),
        model_name: model_name(gateway, backend_id),
        home_course: None,
        discipline: None,
    })
}
