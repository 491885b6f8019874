//! Verbs other than `pipeline`, each returning what it prints.

use std::path::{Path, PathBuf};

use lcot_core::eval::{compare, load_articles, ComparisonReport, EvalError};
use lcot_core::gateway::{Gateway, RetryPolicy, Transcript};
use lcot_core::plato::{generate_page_workflow, KeywordSet, PageOutput, StyleGuide, WorkflowBackends, WorkflowError, WorkflowParams};
use lcot_core::search::{deterministic_expansion, Index, SearchConfig, SearchHit};
use lcot_core::store::KnowledgeStore;
use lcot_graph::{build_graph, build_hierarchy, CommunityTree, HierarchyParams, KeywordGraph};

use crate::config::Loaded;
use crate::error::{runtime, CliError, CliResult};
use crate::pipeline::{CORPUS_DIR, INDEX_DIR};

/// Ranked hits for `keyword`; no hits is `Empty`.
pub fn search(index_dir: &Path, keyword: &str, k: usize, config: &SearchConfig) -> CliResult<Vec<SearchHit>> {
    let index = Index::load(index_dir).map_err(|e| CliError::validation(format!("index: {e}")))?;
    let query = deterministic_expansion(keyword).map_err(|e| CliError::validation(e.to_string()))?;
    let hits = index.search(&query, k, config).map_err(runtime("search"))?;
    if hits.is_empty() {
        return Err(CliError::empty(format!("no coverage for `{keyword}`")));
    }
    Ok(hits)
}

pub fn format_hits(hits: &[SearchHit]) -> String {
    let mut out = String::new();
    for (rank, h) in hits.iter().enumerate() {
        out.push_str(&format!(
            "{:>3}  {:.4}  {}  {}  {}\n     {}\n",
            rank + 1,
            h.score,
            h.qa_id,
            h.course_id,
            h.category.as_str(),
            h.snippet.replace('\n', " ")
        ));
    }
    out
}

/// Store and index built by a previous pipeline run.
pub struct Knowledge {
    pub store: KnowledgeStore,
    pub index: Index,
}

impl Knowledge {
    pub fn open(work_dir: &Path) -> CliResult<Knowledge> {
        let store = KnowledgeStore::open(work_dir.join(CORPUS_DIR))
            .map_err(|e| CliError::validation(format!("corpus: {e}; run `lcot pipeline` first")))?;
        let index = Index::load(&work_dir.join(INDEX_DIR))
            .map_err(|e| CliError::validation(format!("index: {e}; run `lcot pipeline` first")))?;
        Ok(Knowledge { store, index })
    }
}

/// One article from the configured author over the built corpus.
pub fn article(loaded: &Loaded, gateway: &Gateway, knowledge: &Knowledge, keyword: &str) -> CliResult<PageOutput> {
    let a = &loaded.config.articles;
    let author = a
        .author
        .as_deref()
        .ok_or_else(|| CliError::validation("articles.author is not configured"))?;
    let backends = WorkflowBackends {
        gateway,
        author,
        expander: a.expander.as_deref(),
        categorizer: a.categorizer.as_deref(),
    };
    let params = WorkflowParams { k: a.k, search: a.search };
    generate_page_workflow(
        keyword,
        &knowledge.index,
        &knowledge.store,
        &StyleGuide::default(),
        &a.language,
        backends,
        &params,
    )
    .map_err(|e| match e {
        WorkflowError::NoCoverage(_) => CliError::empty(e.to_string()),
        other => CliError::runtime(format!("{}: {other}", other.stage())),
    })
}

pub const JUDGE_BACKEND: &str = "judge";

/// Paired comparison graded by a recorded judge transcript.
pub fn eval(plato: &Path, baseline: &Path, judge: &Path, workers: usize) -> CliResult<ComparisonReport> {
    let raw = std::fs::read_to_string(judge)
        .map_err(|e| CliError::validation(format!("cannot read judge transcript {}: {e}", judge.display())))?;
    let transcript: Transcript =
        serde_json::from_str(&raw).map_err(|e| CliError::validation(format!("judge transcript: {e}")))?;
    let mut gw = Gateway::with_retry(RetryPolicy::no_backoff());
    gw.register_backend(transcript.into_spec(JUDGE_BACKEND))
        .map_err(runtime("judge"))?;
    let load = |dir: &Path| {
        load_articles(dir).map_err(|e| match e {
            EvalError::NoArticles(_) | EvalError::Io(_) | EvalError::Corrupt { .. } => CliError::validation(e.to_string()),
            other => CliError::runtime(other.to_string()),
        })
    };
    let p = load(plato)?;
    let b = load(baseline)?;
    compare(&p, &b, &gw, JUDGE_BACKEND, workers.max(1)).map_err(|e| match e {
        EvalError::NoPairs => CliError::empty(e.to_string()),
        other => CliError::runtime(other.to_string()),
    })
}

/// A saved graph directory or a JSON array of keyword sets.
pub fn load_graph(input: &Path) -> CliResult<KeywordGraph> {
    if input.is_dir() {
        return KeywordGraph::load(input).map_err(|e| CliError::validation(format!("graph: {e}")));
    }
    let raw = std::fs::read_to_string(input)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", input.display())))?;
    let sets: Vec<KeywordSet> =
        serde_json::from_str(&raw).map_err(|e| CliError::validation(format!("keyword sets: {e}")))?;
    Ok(build_graph(&sets).0)
}

pub struct ClusterOutput {
    pub tree: CommunityTree,
    pub tree_path: PathBuf,
}

pub fn cluster(input: &Path, out: &Path, params: &HierarchyParams) -> CliResult<ClusterOutput> {
    let graph = load_graph(input)?;
    if graph.node_count() == 0 {
        return Err(CliError::empty("keyword graph has no nodes"));
    }
    let tree = build_hierarchy(&graph, params).map_err(runtime("cluster"))?;
    std::fs::create_dir_all(out)?;
    graph.save(&out.join("graph")).map_err(runtime("graph"))?;
    let tree_path = out.join("tree.json");
    std::fs::write(&tree_path, tree.to_json())?;
    Ok(ClusterOutput { tree, tree_path })
}

pub fn format_tree(tree: &CommunityTree) -> String {
    let mut out = String::new();
    for n in tree.nodes() {
        let title = n.title.as_deref().unwrap_or("");
        out.push_str(&format!(
            "{}{}  size={}  {}\n",
            "  ".repeat(n.level),
            n.id,
            n.size,
            title
        ));
    }
    out
}
