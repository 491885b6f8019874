use serde::{Deserialize, Serialize};

use super::{synthesize, Article, PlatoError, StyleGuide};
use crate::gateway::Gateway;
use crate::search::{categorize, expand_query, rank_cross_domain, ExpandedQuery, Index, Scaffold, SearchConfig, SearchError};
use crate::store::{AuditEntry, KnowledgeStore};

#[derive(Clone, Copy)]
pub struct WorkflowBackends<'a> {
    pub gateway: &'a Gateway,
    pub author: &'a str,
    pub expander: Option<&'a str>,
    pub categorizer: Option<&'a str>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkflowParams {
    /// Hits retrieved before re-ranking and categorization.
    pub k: usize,
    pub search: SearchConfig,
}

impl Default for WorkflowParams {
    fn default() -> Self {
        Self {
            k: 200,
            search: SearchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageOutput {
    pub article: Article,
    pub query: ExpandedQuery,
    pub scaffold: Scaffold,
    pub audit: Vec<AuditEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum WorkflowError {
    #[error("expand: {0}")]
    Expand(#[source] SearchError),
    #[error("search: {0}")]
    Search(#[source] SearchError),
    #[error("search: no coverage for `{0}`")]
    NoCoverage(String),
    #[error("synthesize: {0}")]
    Synthesize(#[source] PlatoError),
}

impl WorkflowError {
    pub fn stage(&self) -> &'static str {
        match self {
            WorkflowError::Expand(_) => "expand",
            WorkflowError::Search(_) | WorkflowError::NoCoverage(_) => "search",
            WorkflowError::Synthesize(_) => "synthesize",
        }
    }
}

/// Keyword to article: expand, search, re-rank around the home course of
/// the most relevant hit, categorize, synthesize.
pub fn generate_page_workflow(
    keyword: &str,
    index: &Index,
    store: &KnowledgeStore,
    style: &StyleGuide,
    language: &str,
    backends: WorkflowBackends<'_>,
    params: &WorkflowParams,
) -> Result<PageOutput, WorkflowError> {
    let gw = backends.gateway;
    let query = expand_query(keyword, backends.expander.map(|b| (gw, b))).map_err(WorkflowError::Expand)?;
    let hits = index.search(&query, params.k, &params.search).map_err(WorkflowError::Search)?;
    let Some(top) = hits.first() else {
        return Err(WorkflowError::NoCoverage(keyword.to_string()));
    };
    let home_course = top.course_id.clone();
    let ranked = rank_cross_domain(&hits, index, &home_course, params.search.alpha);
    let (scaffold, audit) = categorize(keyword, &ranked, store, backends.categorizer.map(|b| (gw, b)));
    let mut article = synthesize(keyword, &scaffold, store, style, language, gw, backends.author)
        .map_err(WorkflowError::Synthesize)?;
    article.discipline = store.curriculum().course(&home_course).map(|c| c.discipline);
    article.home_course = Some(home_course);
    Ok(PageOutput {
        article,
        query,
        scaffold,
        audit,
    })
}
