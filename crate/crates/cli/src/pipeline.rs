//! Staged corpus build with per-stage checkpoints.
//!
//! Every stage reads its inputs from and writes its outputs to the work
//! directory. A stage is skipped when its checkpoint fingerprint (stage
//! config plus the bytes of its inputs) matches and its outputs still exist.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lcot_core::consensus::{judge_consensus, solve, ConsensusError, ConsensusVerdict, LCoTTrace, SolveFailure, SolveOptions};
use lcot_core::gateway::Gateway;
use lcot_core::plato::{extract_keywords, generate_page_workflow, Article, KeywordSet, StyleGuide, WorkflowBackends, WorkflowError, WorkflowParams};
use lcot_core::search::Index;
use lcot_core::socrates::{
    check_provenance, generate_prompts, plan_thumbnails, sanitize_prompts, Curriculum, PlannerConfig, PromptSpec,
    PromptThumbnail, SocratesError,
};
use lcot_core::store::{AuditEntry, KnowledgeStore};
use lcot_core::util::{parallel_map, read_jsonl, write_jsonl, Clock};
use lcot_core::{sha256_hex, short_digest};
use lcot_graph::{build_graph, build_hierarchy, summarize_communities, KeywordGraph};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{digest_json, Loaded};
use crate::error::{runtime, CliError, CliResult};
use crate::lock::WorkLock;

pub const STAGES: [&str; 10] = [
    "plan",
    "generate",
    "sanitize",
    "solve",
    "consensus",
    "ingest",
    "index",
    "articles",
    "keywords",
    "cluster",
];

pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const RUN_MANIFEST: &str = "run_manifest.json";
pub const CORPUS_DIR: &str = "corpus";
pub const INDEX_DIR: &str = "index";
pub const ARTICLES_DIR: &str = "articles";
pub const GRAPH_DIR: &str = "graph";
pub const TREE_FILE: &str = "tree.json";

pub type Counts = BTreeMap<String, usize>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ran,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub stage: String,
    pub fingerprint: String,
    pub counts: Counts,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub status: StageStatus,
    pub fingerprint: String,
    pub counts: Counts,
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub started: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished: Option<String>,
    pub stages: Vec<StageRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunManifest {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == name)
    }

    pub fn load(work_dir: &Path) -> CliResult<RunManifest> {
        let raw = std::fs::read_to_string(work_dir.join(RUN_MANIFEST)).map_err(runtime("run manifest"))?;
        serde_json::from_str(&raw).map_err(runtime("run manifest"))
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    /// Ignore every checkpoint.
    pub fresh: bool,
}

struct Ctx<'a> {
    loaded: &'a Loaded,
    gateway: &'a Gateway,
    curriculum: &'a Curriculum,
    dir: PathBuf,
    clock: Clock,
}

impl Ctx<'_> {
    fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn workers(&self) -> usize {
        self.loaded.config.pipeline.workers.max(1)
    }

    fn spec(&self, id: Option<&String>) -> Value {
        id.and_then(|id| self.loaded.config.backend(id))
            .map_or(Value::Null, |s| serde_json::to_value(s).expect("backend spec serializes"))
    }
}

/// Files a stage consumes, relative to the work directory.
fn stage_inputs(stage: &str) -> &'static [&'static str] {
    match stage {
        "plan" => &[],
        "generate" => &["thumbnails.jsonl"],
        "sanitize" => &["prompts.jsonl"],
        "solve" => &["kept.jsonl"],
        "consensus" => &["kept.jsonl", "traces.jsonl"],
        "ingest" => &["kept.jsonl", "traces.jsonl", "verdicts.jsonl"],
        "index" => &[CORPUS_DIR],
        "articles" => &[CORPUS_DIR, INDEX_DIR],
        "keywords" => &[ARTICLES_DIR, INDEX_DIR],
        "cluster" => &[GRAPH_DIR],
        _ => unreachable!("unknown stage {stage}"),
    }
}

/// Config that determines a stage's output.
fn stage_config(ctx: &Ctx<'_>, stage: &str) -> Value {
    let c = &ctx.loaded.config;
    let p = &c.pipeline;
    let a = &c.articles;
    match stage {
        "plan" => json!({
            "curriculum": ctx.curriculum.to_json(),
            "generator": ctx.spec(Some(&p.generator)),
            "thumbnails_per_topic": p.thumbnails_per_topic,
            "reductionist_fraction": p.reductionist_fraction,
        }),
        "generate" => json!({"generator": ctx.spec(Some(&p.generator))}),
        "sanitize" => json!({"checker": ctx.spec(p.checker.as_ref())}),
        "solve" => json!({
            "solvers": p.solvers.iter().map(|s| ctx.spec(Some(s))).collect::<Vec<_>>(),
            "attempts_per_backend": p.attempts_per_backend,
            "clock": c.clock,
        }),
        "ingest" => json!({"curriculum": ctx.curriculum.to_json()}),
        "articles" => json!({
            "author": ctx.spec(a.author.as_ref()),
            "expander": ctx.spec(a.expander.as_ref()),
            "categorizer": ctx.spec(a.categorizer.as_ref()),
            "keywords": a.keywords,
            "language": a.language,
            "k": a.k,
            "search": a.search,
        }),
        "keywords" => json!({
            "backend": ctx.spec(a.keyword_backend.as_ref()),
            "per_page": a.keywords_per_page,
        }),
        "cluster" => json!({
            "section": c.cluster,
            "seed": c.seed,
            "titler": ctx.spec(c.cluster.titler.as_ref()),
        }),
        _ => Value::Null,
    }
}

/// SHA-256 over every file under `path` in sorted relative-path order.
pub fn digest_path(path: &Path) -> CliResult<String> {
    let mut files = Vec::new();
    collect_files(path, path, &mut files)?;
    files.sort();
    let mut buf = Vec::new();
    for rel in files {
        let file = if rel.is_empty() { path.to_path_buf() } else { path.join(&rel) };
        let bytes = std::fs::read(&file).map_err(runtime("digest"))?;
        buf.extend_from_slice(rel.as_bytes());
        buf.push(0);
        buf.extend_from_slice(sha256_hex(&bytes).as_bytes());
        buf.push(b'\n');
    }
    Ok(sha256_hex(&buf))
}

fn collect_files(root: &Path, path: &Path, out: &mut Vec<String>) -> CliResult<()> {
    if path.is_file() {
        let rel = path.strip_prefix(root).map_or_else(|_| String::new(), |p| p.display().to_string());
        out.push(rel);
        return Ok(());
    }
    if !path.exists() {
        return Ok(());
    }
    for entry in std::fs::read_dir(path)? {
        collect_files(root, &entry?.path(), out)?;
    }
    Ok(())
}

fn fingerprint(ctx: &Ctx<'_>, stage: &str) -> CliResult<String> {
    let mut inputs = BTreeMap::new();
    for rel in stage_inputs(stage) {
        inputs.insert(*rel, digest_path(&ctx.path(rel))?);
    }
    Ok(digest_json(&json!({
        "stage": stage,
        "config": stage_config(ctx, stage),
        "inputs": inputs,
    })))
}

fn checkpoint_path(dir: &Path, stage: &str) -> PathBuf {
    dir.join(CHECKPOINT_DIR).join(format!("{stage}.json"))
}

fn read_checkpoint(dir: &Path, stage: &str) -> Option<Checkpoint> {
    let raw = std::fs::read_to_string(checkpoint_path(dir, stage)).ok()?;
    serde_json::from_str(&raw).ok()
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let text = serde_json::to_string_pretty(value).map_err(runtime("serialize"))? + "\n";
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

struct StageOutput {
    counts: Counts,
    outputs: Vec<String>,
}

impl StageOutput {
    fn new(outputs: &[&str]) -> Self {
        Self {
            counts: Counts::new(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn count(mut self, key: &str, n: usize) -> Self {
        self.counts.insert(key.to_string(), n);
        self
    }
}

/// Runs every stage in order, resuming from matching checkpoints.
pub fn run(loaded: &Loaded, opts: &RunOptions) -> CliResult<RunManifest> {
    let mut loaded = loaded.clone();
    if let Some(seed) = opts.seed {
        loaded.config.seed = seed;
    }
    check_solvers(&loaded)?;
    let curriculum = loaded.curriculum()?;
    let gateway = loaded.config.gateway()?;
    let dir = loaded.work_dir();
    let _lock = WorkLock::acquire(&dir)?;
    if opts.fresh {
        let _ = std::fs::remove_dir_all(dir.join(CHECKPOINT_DIR));
    }
    let clock = loaded.config.clock();
    let config_hash = loaded.config_hash()?;
    let started = clock.now();
    let mut manifest = RunManifest {
        run_id: short_digest(format!("{config_hash}\n{started}").as_bytes()),
        config_hash,
        seed: loaded.config.seed,
        inputs: BTreeMap::from([
            ("config".to_string(), loaded.source.display().to_string()),
            ("curriculum".to_string(), loaded.curriculum_path().display().to_string()),
        ]),
        started,
        finished: None,
        stages: Vec::new(),
        error: None,
    };
    let ctx = Ctx {
        loaded: &loaded,
        gateway: &gateway,
        curriculum: &curriculum,
        dir: dir.clone(),
        clock,
    };
    for stage in STAGES {
        let fp = fingerprint(&ctx, stage)?;
        if let Some(cp) = read_checkpoint(&dir, stage) {
            if cp.fingerprint == fp && cp.outputs.iter().all(|o| dir.join(o).exists()) {
                tracing::info!(stage, "checkpoint matches, skipping");
                manifest.stages.push(StageRecord {
                    stage: stage.into(),
                    status: StageStatus::Skipped,
                    fingerprint: fp,
                    counts: cp.counts,
                    outputs: cp.outputs,
                    error: None,
                });
                continue;
            }
        }
        let _ = std::fs::remove_file(checkpoint_path(&dir, stage));
        tracing::info!(stage, "running");
        match run_stage(&ctx, stage) {
            Ok(out) => {
                write_json_file(
                    &checkpoint_path(&dir, stage),
                    &Checkpoint {
                        stage: stage.into(),
                        fingerprint: fp.clone(),
                        counts: out.counts.clone(),
                        outputs: out.outputs.clone(),
                    },
                )?;
                manifest.stages.push(StageRecord {
                    stage: stage.into(),
                    status: StageStatus::Ran,
                    fingerprint: fp,
                    counts: out.counts,
                    outputs: out.outputs,
                    error: None,
                });
            }
            Err(e) => {
                let message = format!("{stage}: {e}");
                manifest.stages.push(StageRecord {
                    stage: stage.into(),
                    status: StageStatus::Failed,
                    fingerprint: fp,
                    counts: Counts::new(),
                    outputs: Vec::new(),
                    error: Some(e.message.clone()),
                });
                manifest.error = Some(message.clone());
                manifest.finished = Some(ctx.clock.now());
                write_json_file(&dir.join(RUN_MANIFEST), &manifest)?;
                return Err(CliError { kind: e.kind, message });
            }
        }
    }
    manifest.finished = Some(ctx.clock.now());
    write_json_file(&dir.join(RUN_MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Consensus needs two or more solvers from distinct providers.
fn check_solvers(loaded: &Loaded) -> CliResult<()> {
    let solvers = &loaded.config.pipeline.solvers;
    if solvers.len() < 2 {
        return Err(CliError::validation(format!(
            "pipeline.solvers needs at least 2 backends, got {}",
            solvers.len()
        )));
    }
    let mut providers = BTreeMap::new();
    for id in solvers {
        let spec = loaded
            .config
            .backend(id)
            .ok_or_else(|| CliError::validation(format!("unknown solver backend `{id}`")))?;
        if let Some(other) = providers.insert(&spec.provider_name, id) {
            return Err(CliError::validation(format!(
                "solvers `{other}` and `{id}` share provider `{}`",
                spec.provider_name
            )));
        }
    }
    Ok(())
}

fn run_stage(ctx: &Ctx<'_>, stage: &str) -> CliResult<StageOutput> {
    match stage {
        "plan" => plan(ctx),
        "generate" => generate(ctx),
        "sanitize" => sanitize(ctx),
        "solve" => solve_all(ctx),
        "consensus" => consensus(ctx),
        "ingest" => ingest(ctx),
        "index" => index(ctx),
        "articles" => articles(ctx),
        "keywords" => keywords(ctx),
        "cluster" => cluster(ctx),
        _ => unreachable!("unknown stage {stage}"),
    }
}

fn read<T: serde::de::DeserializeOwned>(ctx: &Ctx<'_>, rel: &str) -> CliResult<Vec<T>> {
    read_jsonl(&ctx.path(rel)).map_err(runtime(rel))
}

fn write<T: Serialize>(ctx: &Ctx<'_>, rel: &str, records: &[T]) -> CliResult<()> {
    write_jsonl(&ctx.path(rel), records).map_err(runtime(rel))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StageFailure {
    item: String,
    error: String,
}

fn plan(ctx: &Ctx<'_>) -> CliResult<StageOutput> {
    let p = &ctx.loaded.config.pipeline;
    let config = PlannerConfig {
        reductionist_fraction: p.reductionist_fraction,
    };
    let topics = ctx.curriculum.topics().to_vec();
    let results = parallel_map(&topics, ctx.workers(), |topic| {
        let course = ctx
            .curriculum
            .course_of_topic(&topic.topic_id)
            .expect("curriculum validates topic courses");
        plan_thumbnails(ctx.gateway, &p.generator, course, topic, p.thumbnails_per_topic, &config)
    });
    let mut thumbs = Vec::new();
    let mut failures = Vec::new();
    for (topic, r) in topics.iter().zip(results) {
        match r {
            Ok(t) => thumbs.extend(t),
            Err(e) => {
                tracing::warn!(topic = %topic.topic_id, error = %e, "planning failed");
                failures.push(StageFailure {
                    item: topic.topic_id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    if thumbs.is_empty() && !topics.is_empty() {
        return Err(CliError::runtime(format!(
            "no thumbnails planned; first failure: {}",
            failures.first().map_or("none", |f| f.error.as_str())
        )));
    }
    write(ctx, "thumbnails.jsonl", &thumbs)?;
    write(ctx, "plan_failures.jsonl", &failures)?;
    Ok(StageOutput::new(&["thumbnails.jsonl", "plan_failures.jsonl"])
        .count("topics", topics.len())
        .count("thumbnails", thumbs.len())
        .count("failed_topics", failures.len()))
}

fn generate(ctx: &Ctx<'_>) -> CliResult<StageOutput> {
    let generator = &ctx.loaded.config.pipeline.generator;
    let thumbs: Vec<PromptThumbnail> = read(ctx, "thumbnails.jsonl")?;
    let results = parallel_map(&thumbs, ctx.workers(), |t| {
        let title = ctx.curriculum.topic(&t.topic_id).map_or(t.topic_id.as_str(), |x| x.title.as_str());
        generate_prompts(ctx.gateway, generator, t, title)
    });
    let mut prompts = Vec::new();
    let mut skipped = Vec::new();
    let mut failures = Vec::new();
    for (t, r) in thumbs.iter().zip(results) {
        match r {
            Ok(out) => {
                prompts.extend(out.prompts);
                skipped.extend(out.skipped);
            }
            Err(e) => {
                tracing::warn!(thumbnail = %t.thumbnail_id, error = %e, "generation failed");
                failures.push(StageFailure {
                    item: t.thumbnail_id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    check_provenance(&prompts, &thumbs, ctx.curriculum).map_err(runtime("provenance"))?;
    write(ctx, "prompts.jsonl", &prompts)?;
    write(ctx, "skipped.jsonl", &skipped)?;
    write(ctx, "generate_failures.jsonl", &failures)?;
    Ok(StageOutput::new(&["prompts.jsonl", "skipped.jsonl", "generate_failures.jsonl"])
        .count("prompts", prompts.len())
        .count("skipped", skipped.len())
        .count("failed_thumbnails", failures.len()))
}

fn sanitize(ctx: &Ctx<'_>) -> CliResult<StageOutput> {
    let p = &ctx.loaded.config.pipeline;
    let prompts: Vec<PromptSpec> = read(ctx, "prompts.jsonl")?;
    let (kept, rejected, recheck) = match &p.checker {
        None => (prompts.clone(), Vec::new(), Vec::new()),
        Some(checker) => match sanitize_prompts(ctx.gateway, checker, &p.generator, &prompts) {
            Ok(out) => (out.kept, out.rejected, out.recheck),
            Err(e @ SocratesError::SameBackend(_)) => return Err(CliError::validation(e.to_string())),
            Err(e) => return Err(CliError::runtime(e.to_string())),
        },
    };
    write(ctx, "kept.jsonl", &kept)?;
    write(ctx, "rejected.jsonl", &rejected)?;
    write(ctx, "recheck.jsonl", &recheck)?;
    Ok(StageOutput::new(&["kept.jsonl", "rejected.jsonl", "recheck.jsonl"])
        .count("kept", kept.len())
        .count("rejected", rejected.len())
        .count("recheck", recheck.len()))
}

fn solve_all(ctx: &Ctx<'_>) -> CliResult<StageOutput> {
    let p = &ctx.loaded.config.pipeline;
    let prompts: Vec<PromptSpec> = read(ctx, "kept.jsonl")?;
    let opts = SolveOptions {
        attempts_per_backend: p.attempts_per_backend,
        clock: ctx.clock.clone(),
        ..Default::default()
    };
    let results = parallel_map(&prompts, ctx.workers(), |prompt| solve(ctx.gateway, prompt, &p.solvers, &opts));
    let mut traces: Vec<LCoTTrace> = Vec::new();
    let mut failures: Vec<SolveFailure> = Vec::new();
    for r in results {
        match r {
            Ok(out) => {
                traces.extend(out.traces);
                failures.extend(out.failures);
            }
            Err(e @ ConsensusError::Precondition(_)) => return Err(CliError::validation(e.to_string())),
            Err(e) => return Err(CliError::runtime(e.to_string())),
        }
    }
    write(ctx, "traces.jsonl", &traces)?;
    write(ctx, "solve_failures.jsonl", &failures)?;
    Ok(StageOutput::new(&["traces.jsonl", "solve_failures.jsonl"])
        .count("prompts", prompts.len())
        .count("traces", traces.len())
        .count("failures", failures.len()))
}

fn consensus(ctx: &Ctx<'_>) -> CliResult<StageOutput> {
    let prompts: Vec<PromptSpec> = read(ctx, "kept.jsonl")?;
    let traces: Vec<LCoTTrace> = read(ctx, "traces.jsonl")?;
    let mut by_prompt: BTreeMap<&str, Vec<LCoTTrace>> = BTreeMap::new();
    for t in &traces {
        by_prompt.entry(t.prompt_id.as_str()).or_default().push(t.clone());
    }
    let mut verdicts: Vec<ConsensusVerdict> = Vec::new();
    let mut failures = Vec::new();
    for prompt in &prompts {
        let ts = by_prompt.get(prompt.prompt_id.as_str()).map_or(&[][..], Vec::as_slice);
        match judge_consensus(prompt, ts) {
            Ok(v) => verdicts.push(v),
            Err(e) => failures.push(StageFailure {
                item: prompt.prompt_id.clone(),
                error: e.to_string(),
            }),
        }
    }
    let mut counts = Counts::new();
    for v in &verdicts {
        let key = serde_json::to_value(v.status).expect("status serializes");
        *counts.entry(key.as_str().unwrap_or("unknown").to_string()).or_default() += 1;
    }
    write(ctx, "verdicts.jsonl", &verdicts)?;
    write(ctx, "consensus_failures.jsonl", &failures)?;
    let mut out = StageOutput::new(&["verdicts.jsonl", "consensus_failures.jsonl"])
        .count("verdicts", verdicts.len())
        .count("failures", failures.len());
    out.counts.extend(counts);
    Ok(out)
}

fn ingest(ctx: &Ctx<'_>) -> CliResult<StageOutput> {
    let prompts: Vec<PromptSpec> = read(ctx, "kept.jsonl")?;
    let traces: Vec<LCoTTrace> = read(ctx, "traces.jsonl")?;
    let verdicts: Vec<ConsensusVerdict> = read(ctx, "verdicts.jsonl")?;
    let corpus = ctx.path(CORPUS_DIR);
    if corpus.exists() {
        std::fs::remove_dir_all(&corpus)?;
    }
    let mut store = KnowledgeStore::create(&corpus, ctx.curriculum).map_err(runtime("corpus"))?;
    let report = store.ingest(&verdicts, &prompts, &traces).map_err(runtime("ingest"))?;
    write(ctx, "ingest_audit.jsonl", &report.rejected)?;
    Ok(StageOutput::new(&[CORPUS_DIR, "ingest_audit.jsonl"])
        .count("ingested", report.ingested)
        .count("duplicates", report.duplicates)
        .count("rejected", report.rejected.len())
        .count("records", store.len()))
}

fn index(ctx: &Ctx<'_>) -> CliResult<StageOutput> {
    let store = KnowledgeStore::open(ctx.path(CORPUS_DIR)).map_err(runtime("corpus"))?;
    let out = ctx.path(INDEX_DIR);
    if out.exists() {
        std::fs::remove_dir_all(&out)?;
    }
    if store.is_empty() {
        return Ok(StageOutput::new(&[]).count("docs", 0));
    }
    let index = Index::build(&store).map_err(runtime("index"))?;
    index.save(&out).map_err(runtime("index"))?;
    Ok(StageOutput::new(&[INDEX_DIR])
        .count("docs", index.doc_count())
        .count("terms", index.term_count()))
}

/// File stem for a keyword: lowercase ASCII alphanumerics joined by `-`.
pub fn slug(keyword: &str) -> String {
    let mut out = String::new();
    for c in keyword.chars() {
        if c.is_alphanumeric() {
            out.extend(c.to_lowercase());
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    let trimmed = out.trim_end_matches('-');
    if trimmed.is_empty() {
        short_digest(keyword.as_bytes())
    } else {
        trimmed.to_string()
    }
}

fn load_index(ctx: &Ctx<'_>) -> CliResult<Option<Index>> {
    let dir = ctx.path(INDEX_DIR);
    if !dir.exists() {
        return Ok(None);
    }
    Index::load(&dir).map(Some).map_err(runtime("index"))
}

pub fn write_article(dir: &Path, article: &Article) -> CliResult<()> {
    let stem = slug(&article.keyword);
    write_json_file(&dir.join(format!("{stem}.json")), article)?;
    std::fs::write(dir.join(format!("{stem}.md")), article.render())?;
    Ok(())
}

fn articles(ctx: &Ctx<'_>) -> CliResult<StageOutput> {
    let a = &ctx.loaded.config.articles;
    let out_dir = ctx.path(ARTICLES_DIR);
    if out_dir.exists() {
        std::fs::remove_dir_all(&out_dir)?;
    }
    std::fs::create_dir_all(&out_dir)?;
    let mut audit: Vec<AuditEntry> = Vec::new();
    let mut written = 0;
    let mut uncovered = 0;
    if let (Some(author), false) = (&a.author, a.keywords.is_empty()) {
        let store = KnowledgeStore::open(ctx.path(CORPUS_DIR)).map_err(runtime("corpus"))?;
        let index = load_index(ctx)?;
        let backends = WorkflowBackends {
            gateway: ctx.gateway,
            author,
            expander: a.expander.as_deref(),
            categorizer: a.categorizer.as_deref(),
        };
        let params = WorkflowParams { k: a.k, search: a.search };
        let style = StyleGuide::default();
        for keyword in &a.keywords {
            let Some(index) = &index else {
                uncovered += 1;
                audit.push(AuditEntry {
                    prompt_id: keyword.clone(),
                    reason: "search: empty corpus".into(),
                });
                continue;
            };
            match generate_page_workflow(keyword, index, &store, &style, &a.language, backends, &params) {
                Ok(page) => {
                    write_article(&out_dir, &page.article)?;
                    audit.extend(page.audit);
                    written += 1;
                }
                Err(e @ WorkflowError::NoCoverage(_)) => {
                    tracing::warn!(%keyword, "no coverage, skipping");
                    uncovered += 1;
                    audit.push(AuditEntry {
                        prompt_id: keyword.clone(),
                        reason: e.to_string(),
                    });
                }
                Err(e) => return Err(CliError::runtime(format!("`{keyword}` at {}: {e}", e.stage()))),
            }
        }
    }
    write(ctx, "articles_audit.jsonl", &audit)?;
    Ok(StageOutput::new(&[ARTICLES_DIR, "articles_audit.jsonl"])
        .count("requested", a.keywords.len())
        .count("written", written)
        .count("uncovered", uncovered))
}

fn load_article_dir(dir: &Path) -> CliResult<Vec<Article>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let raw = std::fs::read_to_string(p)?;
            serde_json::from_str(&raw).map_err(runtime(&p.display().to_string()))
        })
        .collect()
}

fn keywords(ctx: &Ctx<'_>) -> CliResult<StageOutput> {
    let a = &ctx.loaded.config.articles;
    let articles = load_article_dir(&ctx.path(ARTICLES_DIR))?;
    let index = load_index(ctx)?;
    let backend = a.keyword_backend.as_deref().map(|b| (ctx.gateway, b));
    let sets: Vec<KeywordSet> = articles
        .iter()
        .map(|art| extract_keywords(art, a.keywords_per_page, backend, index.as_ref()))
        .collect();
    write_json_file(&ctx.path("keywords.json"), &sets)?;
    let (graph, stats) = build_graph(&sets);
    let graph_dir = ctx.path(GRAPH_DIR);
    if graph_dir.exists() {
        std::fs::remove_dir_all(&graph_dir)?;
    }
    graph.save(&graph_dir).map_err(runtime("graph"))?;
    Ok(StageOutput::new(&["keywords.json", GRAPH_DIR])
        .count("pages", stats.pages)
        .count("nodes", graph.node_count())
        .count("edges", graph.undirected_edge_count()))
}

fn cluster(ctx: &Ctx<'_>) -> CliResult<StageOutput> {
    let c = &ctx.loaded.config;
    let graph = KeywordGraph::load(&ctx.path(GRAPH_DIR)).map_err(runtime("graph"))?;
    let tree_path = ctx.path(TREE_FILE);
    let _ = std::fs::remove_file(&tree_path);
    if graph.node_count() == 0 {
        tracing::info!("keyword graph is empty, no hierarchy");
        return Ok(StageOutput::new(&[]).count("nodes", 0));
    }
    let mut tree = build_hierarchy(&graph, &c.cluster.params(c.seed)).map_err(runtime("cluster"))?;
    let titled = match &c.cluster.titler {
        Some(t) => summarize_communities(&mut tree, &graph, ctx.gateway, t, c.cluster.min_size),
        None => 0,
    };
    std::fs::write(&tree_path, tree.to_json())?;
    Ok(StageOutput::new(&[TREE_FILE])
        .count("nodes", graph.node_count())
        .count("communities", tree.nodes().len())
        .count("leaves", tree.leaves().len())
        .count("depth", tree.depth())
        .count("titled", titled))
}
