//! The seven tools, their argument types and the published manifest.

use std::sync::Arc;

use lcot_core::consensus::{extract_with_span, solver_system_prompt, FINAL_ANSWER_MARKER};
use lcot_core::gateway::{ChatRequest, Gateway};
use lcot_core::plato::{generate_page_workflow, StyleGuide, WorkflowBackends, WorkflowParams};
use lcot_core::search::Index;
use lcot_core::socrates::{
    generate_prompts, plan_thumbnails, AnswerType, Course, CourseLevel, Discipline, PlannerConfig, TargetLevel, Topic,
};
use lcot_core::store::KnowledgeStore;
use lcot_core::util::parallel_map;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use serde_json::{json, Value};

use crate::sandbox::{ExecResult, Sandbox, SandboxError};
use crate::scoring::{parse_wire_answer_type, score_with_timeout, wire_answer_type, ScoreResult, ScorerRegistry};

pub const DEFAULT_EDUCATION_LEVEL: &str = "advanced_undergraduate";
pub const DEFAULT_EXEC_TIMEOUT_S: f64 = 10.0;
pub const DEFAULT_SCORE_TIMEOUT_S: f64 = 30.0;

pub const TOOL_NAMES: [&str; 7] = [
    "generate_article",
    "generate_problems",
    "solve_problems",
    "list_supported_languages",
    "execute_code",
    "execute_codes_parallel",
    "compute_score_parallel",
];

#[derive(Debug, thiserror::Error)]
pub enum ToolError {
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
    #[error("invalid arguments: {0}")]
    Validation(String),
    #[error("unknown model_name `{0}`")]
    UnknownModel(String),
    #[error("{0}")]
    Unavailable(String),
    #[error("generation failed: {0}")]
    Generation(String),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
}

impl ToolError {
    /// Caller mistakes surface as protocol errors; the rest as tool results.
    pub fn is_argument_error(&self) -> bool {
        matches!(self, ToolError::UnknownTool(_) | ToolError::Validation(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleContent {
    pub topic: String,
    pub style_guide: String,
    pub language: String,
    pub model_name: String,
    pub main_content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub task_id: i64,
    pub problem: String,
    pub answer_type: String,
    #[serde(default)]
    pub solution: String,
    #[serde(default)]
    pub answer: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct GenerateArticleArgs {
    pub topic: String,
    pub language: String,
    #[serde(default)]
    pub style_guide: Option<String>,
    #[serde(default)]
    pub model_name: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct GenerateProblemsArgs {
    pub subject: String,
    pub field: String,
    pub count: i64,
    #[serde(default = "default_education_level")]
    pub education_level: String,
}

#[derive(Debug, Deserialize)]
pub struct SolveProblemsArgs<'a> {
    pub subject: String,
    pub field: String,
    #[serde(borrow)]
    pub problems: Vec<&'a RawValue>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ExecuteCodeArgs {
    pub language: String,
    pub code: String,
    #[serde(default = "default_exec_timeout")]
    pub timeout: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ExecuteCodesArgs {
    pub language: String,
    pub code_list: Vec<String>,
    #[serde(default = "default_exec_timeout")]
    pub timeout: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ComputeScoreArgs {
    pub data_source: String,
    pub solution_list: Vec<String>,
    pub ground_truth_list: Vec<String>,
    #[serde(default)]
    pub extra_info_list: Option<Vec<Value>>,
    #[serde(default = "default_score_timeout")]
    pub timeout: f64,
}

fn default_education_level() -> String {
    DEFAULT_EDUCATION_LEVEL.into()
}

fn default_exec_timeout() -> f64 {
    DEFAULT_EXEC_TIMEOUT_S
}

fn default_score_timeout() -> f64 {
    DEFAULT_SCORE_TIMEOUT_S
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolConfig {
    pub author_backend: String,
    pub generator_backend: String,
    pub solver_backend: String,
    #[serde(default)]
    pub expander_backend: Option<String>,
    #[serde(default)]
    pub categorizer_backend: Option<String>,
    /// Worker pool size for the batch tools.
    pub workers: usize,
    #[serde(default)]
    pub workflow: WorkflowParams,
}

impl ToolConfig {
    pub fn new(author: &str, generator: &str, solver: &str) -> Self {
        Self {
            author_backend: author.into(),
            generator_backend: generator.into(),
            solver_backend: solver.into(),
            expander_backend: None,
            categorizer_backend: None,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            workflow: WorkflowParams::default(),
        }
    }
}

/// Index and store backing `generate_article`.
pub struct KnowledgeBase {
    pub index: Index,
    pub store: KnowledgeStore,
}

pub struct ToolService {
    gateway: Arc<Gateway>,
    config: ToolConfig,
    knowledge: Option<KnowledgeBase>,
    sandbox: Arc<Sandbox>,
    scorers: ScorerRegistry,
}

fn parse_args<T: DeserializeOwned>(raw: &str) -> Result<T, ToolError> {
    serde_json::from_str(raw).map_err(|e| ToolError::Validation(e.to_string()))
}

fn require(name: &str, value: &str) -> Result<(), ToolError> {
    if value.trim().is_empty() {
        return Err(ToolError::Validation(format!("`{name}` must be non-empty")));
    }
    Ok(())
}

fn check_timeout(timeout: f64) -> Result<(), ToolError> {
    if !timeout.is_finite() || timeout < 0.0 {
        return Err(ToolError::Validation(format!("`timeout` must be a nonnegative number, got {timeout}")));
    }
    Ok(())
}

fn to_text<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("tool outputs serialize")
}

/// Keyword guess; "computational physics" is physics.
fn discipline_of(subject: &str) -> Discipline {
    let s = subject.to_lowercase();
    let table = [
        ("physic", Discipline::Physics),
        ("chem", Discipline::Chemistry),
        ("bio", Discipline::Biology),
        ("math", Discipline::Mathematics),
        ("engineer", Discipline::Engineering),
        ("comput", Discipline::Computation),
    ];
    table
        .iter()
        .find(|(k, _)| s.contains(k))
        .map_or(Discipline::Physics, |(_, d)| *d)
}

fn target_level_of(education_level: &str) -> TargetLevel {
    let s = education_level.to_lowercase();
    if s.contains("high") {
        TargetLevel::HighSchool
    } else if s.contains("grad") && !s.contains("undergrad") {
        TargetLevel::Graduate
    } else {
        TargetLevel::Undergraduate
    }
}

fn slug(s: &str) -> String {
    let raw: String = s
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { '-' })
        .collect();
    raw.split('-').filter(|p| !p.is_empty()).collect::<Vec<_>>().join("-")
}

/// Concise answer: the extracted span, else the last non-empty line, without the marker.
fn split_answer(text: &str, answer_type: AnswerType) -> String {
    let span = match extract_with_span(text, answer_type) {
        Ok(e) => e.raw_span,
        Err(_) => text
            .lines()
            .rev()
            .map(str::trim)
            .find(|l| !l.is_empty())
            .unwrap_or("")
            .to_string(),
    };
    let span = span.trim();
    span.strip_prefix(FINAL_ANSWER_MARKER).unwrap_or(span).trim().to_string()
}

fn solve_request(subject: &str, field: &str, text: &str, answer_type: AnswerType) -> ChatRequest {
    ChatRequest::solver(
        solver_system_prompt(answer_type),
        format!(
            "Subject: {subject}\nField: {field}\nProblem ({}):\n{text}",
            answer_type.as_str()
        ),
    )
}

#[derive(Serialize)]
struct SolvedItem<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    task_id: Option<&'a RawValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    problem: Option<&'a RawValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    answer_type: Option<&'a RawValue>,
    solution: String,
    answer: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Deserialize)]
struct ProblemFields<'a> {
    #[serde(borrow, default)]
    task_id: Option<&'a RawValue>,
    #[serde(borrow, default)]
    problem: Option<&'a RawValue>,
    #[serde(borrow, default)]
    answer_type: Option<&'a RawValue>,
}

struct Prepared<'a> {
    fields: Option<ProblemFields<'a>>,
    job: Result<(String, AnswerType), String>,
}

fn prepare(raw: &RawValue) -> Prepared<'_> {
    let fields: ProblemFields<'_> = match serde_json::from_str(raw.get()) {
        Ok(f) => f,
        Err(e) => {
            return Prepared {
                fields: None,
                job: Err(format!("problem must be an object: {e}")),
            }
        }
    };
    let job = (|| {
        let task_id = fields.task_id.ok_or("missing task_id")?;
        serde_json::from_str::<i64>(task_id.get()).map_err(|_| "task_id must be an integer".to_string())?;
        let problem = fields.problem.ok_or("missing problem")?;
        let text: String = serde_json::from_str(problem.get()).map_err(|_| "problem must be a string".to_string())?;
        let answer_type = fields.answer_type.ok_or("missing answer_type")?;
        let label: String =
            serde_json::from_str(answer_type.get()).map_err(|_| "answer_type must be a string".to_string())?;
        let ty = parse_wire_answer_type(&label).ok_or_else(|| format!("unsupported answer_type `{label}`"))?;
        Ok::<_, String>((text, ty))
    })();
    Prepared {
        fields: Some(fields),
        job,
    }
}

impl ToolService {
    pub fn new(gateway: Arc<Gateway>, config: ToolConfig, sandbox: Arc<Sandbox>) -> Self {
        let scorers = ScorerRegistry::standard(sandbox.clone());
        Self {
            gateway,
            config,
            knowledge: None,
            sandbox,
            scorers,
        }
    }

    pub fn with_knowledge(mut self, knowledge: KnowledgeBase) -> Self {
        self.knowledge = Some(knowledge);
        self
    }

    pub fn with_scorers(mut self, scorers: ScorerRegistry) -> Self {
        self.scorers = scorers;
        self
    }

    pub fn config(&self) -> &ToolConfig {
        &self.config
    }

    pub fn sandbox(&self) -> &Sandbox {
        &self.sandbox
    }

    /// Dispatches a call and returns the JSON text the tool publishes.
    pub fn call(&self, name: &str, arguments: &str) -> Result<String, ToolError> {
        match name {
            "generate_article" => self.generate_article(parse_args(arguments)?).map(|r| to_text(&r)),
            "generate_problems" => self.generate_problems(parse_args(arguments)?).map(|r| to_text(&r)),
            "solve_problems" => self.solve_problems(arguments),
            "list_supported_languages" => Ok(to_text(&self.list_supported_languages())),
            "execute_code" => self.execute_code(parse_args(arguments)?).map(|r| to_text(&r)),
            "execute_codes_parallel" => self.execute_codes_parallel(parse_args(arguments)?).map(|r| to_text(&r)),
            "compute_score_parallel" => self.compute_score_parallel(parse_args(arguments)?).map(|r| to_text(&r)),
            other => Err(ToolError::UnknownTool(other.to_string())),
        }
    }

    fn resolve_model(&self, model_name: Option<&str>) -> Result<String, ToolError> {
        let Some(name) = model_name else {
            return Ok(self.config.author_backend.clone());
        };
        if self.gateway.contains(name) {
            return Ok(name.to_string());
        }
        self.gateway
            .list()
            .into_iter()
            .find(|s| s.model_name == name)
            .map(|s| s.backend_id.clone())
            .ok_or_else(|| ToolError::UnknownModel(name.to_string()))
    }

    pub fn generate_article(&self, args: GenerateArticleArgs) -> Result<ArticleContent, ToolError> {
        require("topic", &args.topic)?;
        require("language", &args.language)?;
        let backend = self.resolve_model(args.model_name.as_deref())?;
        let kb = self
            .knowledge
            .as_ref()
            .ok_or_else(|| ToolError::Unavailable("no knowledge base loaded".into()))?;
        let style = match args.style_guide.as_deref().map(str::trim) {
            Some(s) if !s.is_empty() => StyleGuide {
                name: s.to_string(),
                directives: vec![s.to_string()],
            },
            _ => StyleGuide::default(),
        };
        let backends = WorkflowBackends {
            gateway: &self.gateway,
            author: &backend,
            expander: self.config.expander_backend.as_deref(),
            categorizer: self.config.categorizer_backend.as_deref(),
        };
        let out = generate_page_workflow(
            args.topic.trim(),
            &kb.index,
            &kb.store,
            &style,
            &args.language,
            backends,
            &self.config.workflow,
        )
        .map_err(|e| ToolError::Generation(e.to_string()))?;
        let model_name = self
            .gateway
            .spec(&backend)
            .map(|s| s.model_name.clone())
            .unwrap_or(backend);
        Ok(ArticleContent {
            topic: args.topic,
            style_guide: style.name,
            language: args.language,
            model_name,
            main_content: out.article.render(),
        })
    }

    pub fn generate_problems(&self, args: GenerateProblemsArgs) -> Result<Vec<Problem>, ToolError> {
        require("subject", &args.subject)?;
        require("field", &args.field)?;
        if args.count < 1 {
            return Err(ToolError::Validation(format!("`count` must be at least 1, got {}", args.count)));
        }
        let count = args.count as usize;
        let level = target_level_of(&args.education_level);
        let course = Course {
            course_id: slug(&args.subject),
            title: args.subject.clone(),
            discipline: discipline_of(&args.subject),
            level: if level == TargetLevel::Graduate {
                CourseLevel::Graduate
            } else {
                CourseLevel::Undergraduate
            },
        };
        let topic = Topic {
            topic_id: format!("{}/{}", course.course_id, slug(&args.field)),
            course_id: course.course_id.clone(),
            title: args.field.clone(),
        };
        let backend = &self.config.generator_backend;
        let gen_err = |e: lcot_core::socrates::SocratesError| ToolError::Generation(e.to_string());
        let thumbnails =
            plan_thumbnails(&self.gateway, backend, &course, &topic, count, &PlannerConfig::default()).map_err(gen_err)?;
        let topic_title = format!("{} ({}, {} level)", args.field, args.subject, args.education_level);
        let mut prompts = Vec::new();
        for mut thumb in thumbnails {
            if prompts.len() >= count {
                break;
            }
            thumb.target_level = level;
            let out = generate_prompts(&self.gateway, backend, &thumb, &topic_title).map_err(gen_err)?;
            prompts.extend(out.prompts);
        }
        prompts.truncate(count);
        let solved = parallel_map(&prompts, self.config.workers, |p| {
            let request = solve_request(&args.subject, &args.field, &p.text, p.answer_type);
            self.gateway.complete(backend, &request).map(|r| r.text)
        });
        let mut problems = Vec::with_capacity(prompts.len());
        for (i, (p, reply)) in prompts.iter().zip(solved).enumerate() {
            let solution = reply.map_err(|e| ToolError::Generation(e.to_string()))?;
            problems.push(Problem {
                task_id: i as i64 + 1,
                problem: p.text.clone(),
                answer_type: wire_answer_type(p.answer_type).to_string(),
                answer: split_answer(&solution, p.answer_type),
                solution,
            });
        }
        Ok(problems)
    }

    /// Echoes task_id, problem and answer_type as the exact input tokens.
    pub fn solve_problems(&self, arguments: &str) -> Result<String, ToolError> {
        let args: SolveProblemsArgs<'_> =
            serde_json::from_str(arguments).map_err(|e| ToolError::Validation(e.to_string()))?;
        require("subject", &args.subject)?;
        require("field", &args.field)?;
        let prepared: Vec<Prepared<'_>> = args.problems.iter().map(|raw| prepare(raw)).collect();
        let replies = parallel_map(&prepared, self.config.workers, |p| match &p.job {
            Ok((text, ty)) => {
                let request = solve_request(&args.subject, &args.field, text, *ty);
                self.gateway
                    .complete(&self.config.solver_backend, &request)
                    .map(|r| split_pair(r.text, *ty))
                    .map_err(|e| e.to_string())
            }
            Err(e) => Err(e.clone()),
        });
        let items: Vec<SolvedItem<'_>> = prepared
            .iter()
            .zip(replies)
            .map(|(p, reply)| {
                let (task_id, problem, answer_type) = p
                    .fields
                    .as_ref()
                    .map_or((None, None, None), |f| (f.task_id, f.problem, f.answer_type));
                let (solution, answer, error) = match reply {
                    Ok((s, a)) => (s, a, None),
                    Err(e) => (String::new(), String::new(), Some(e)),
                };
                SolvedItem {
                    task_id,
                    problem,
                    answer_type,
                    solution,
                    answer,
                    error,
                }
            })
            .collect();
        Ok(to_text(&items))
    }

    pub fn list_supported_languages(&self) -> Vec<String> {
        self.sandbox.languages()
    }

    pub fn execute_code(&self, args: ExecuteCodeArgs) -> Result<ExecResult, ToolError> {
        check_timeout(args.timeout)?;
        Ok(self.sandbox.execute(&args.language, &args.code, args.timeout)?)
    }

    pub fn execute_codes_parallel(&self, args: ExecuteCodesArgs) -> Result<Vec<ExecResult>, ToolError> {
        check_timeout(args.timeout)?;
        if args.code_list.is_empty() {
            return Err(ToolError::Validation("`code_list` must be non-empty".into()));
        }
        Ok(parallel_map(&args.code_list, self.config.workers, |code| {
            self.sandbox
                .execute(&args.language, code, args.timeout)
                .unwrap_or_else(|e| ExecResult::failed(&args.language, e.to_string()))
        }))
    }

    pub fn compute_score_parallel(&self, args: ComputeScoreArgs) -> Result<Vec<ScoreResult>, ToolError> {
        check_timeout(args.timeout)?;
        let n = args.solution_list.len();
        if args.ground_truth_list.len() != n {
            return Err(ToolError::Validation(format!(
                "solution_list has {n} items but ground_truth_list has {}",
                args.ground_truth_list.len()
            )));
        }
        if let Some(extra) = &args.extra_info_list {
            if extra.len() != n {
                return Err(ToolError::Validation(format!(
                    "solution_list has {n} items but extra_info_list has {}",
                    extra.len()
                )));
            }
        }
        let scorer = self
            .scorers
            .get(&args.data_source)
            .ok_or_else(|| ToolError::Unavailable(format!("unknown data_source `{}`", args.data_source)))?;
        let indices: Vec<usize> = (0..n).collect();
        Ok(parallel_map(&indices, self.config.workers, |&i| {
            let extra = args
                .extra_info_list
                .as_ref()
                .and_then(|e| extra_object(&e[i]));
            score_with_timeout(
                scorer.clone(),
                args.solution_list[i].clone(),
                args.ground_truth_list[i].clone(),
                extra,
                args.timeout,
            )
        }))
    }
}

fn split_pair(text: String, ty: AnswerType) -> (String, String) {
    let answer = split_answer(&text, ty);
    (text, answer)
}

/// Extra info may arrive as an object, a JSON-encoded object string, or null.
fn extra_object(v: &Value) -> Option<Value> {
    match v {
        Value::Null => None,
        Value::String(s) => serde_json::from_str::<Value>(s).ok().filter(Value::is_object),
        other => Some(other.clone()),
    }
}

fn string_prop(description: &str) -> Value {
    json!({"type": "string", "description": description})
}

fn timeout_prop(default: f64, description: &str) -> Value {
    json!({"type": "number", "minimum": 0, "default": default, "description": description})
}

/// MCP `tools/list` entries.
pub fn manifest() -> Value {
    let problem = json!({
        "type": "object",
        "properties": {
            "task_id": {"type": "integer"},
            "problem": {"type": "string"},
            "answer_type": {"type": "string"},
            "solution": {"type": "string"},
            "answer": {"type": "string"}
        },
        "required": ["task_id", "problem", "answer_type"]
    });
    json!([
        {
            "name": "generate_article",
            "description": "Write an encyclopedia article on a topic from verified derivations in the knowledge base.",
            "inputSchema": {
                "type": "object",
                "properties": {
                    "topic": string_prop("Subject of the article."),
                    "language": string_prop("Output language tag such as en-US or zh-CN."),
                    "style_guide": string_prop("Writing style instructions; the lecture-hall style is used when omitted."),
                    "model_name": string_prop("Backend id or model name used for writing.")
                },
                "required": ["topic", "language"]
            }
        },
        {
            "name": "generate_problems",
            "description": "Plan and write problems for a subject and field, each with the generator's own solution and answer.",
            "inputSchema": {
                "type": "object",
                "properties": {
                    "subject": string_prop("Broad discipline."),
                    "field": string_prop("Subdomain within the subject."),
                    "count": {"type": "integer", "minimum": 1, "description": "Upper bound on the number of problems returned."},
                    "education_level": {"type": "string", "default": DEFAULT_EDUCATION_LEVEL, "description": "Target audience."}
                },
                "required": ["subject", "field", "count"]
            }
        },
        {
            "name": "solve_problems",
            "description": "Solve problems independently; task_id, problem and answer_type are returned unchanged.",
            "inputSchema": {
                "type": "object",
                "properties": {
                    "subject": string_prop("Broad discipline."),
                    "field": string_prop("Subdomain within the subject."),
                    "problems": {"type": "array", "items": problem}
                },
                "required": ["subject", "field", "problems"]
            }
        },
        {
            "name": "list_supported_languages",
            "description": "Languages the code sandbox can run.",
            "inputSchema": {"type": "object", "properties": {}}
        },
        {
            "name": "execute_code",
            "description": "Run one snippet in an isolated process without network access.",
            "inputSchema": {
                "type": "object",
                "properties": {
                    "language": string_prop("One of list_supported_languages."),
                    "code": string_prop("Source code."),
                    "timeout": timeout_prop(DEFAULT_EXEC_TIMEOUT_S, "Wall-clock limit in seconds.")
                },
                "required": ["language", "code"]
            }
        },
        {
            "name": "execute_codes_parallel",
            "description": "Run several snippets concurrently; results follow input order.",
            "inputSchema": {
                "type": "object",
                "properties": {
                    "language": string_prop("One of list_supported_languages."),
                    "code_list": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                    "timeout": timeout_prop(DEFAULT_EXEC_TIMEOUT_S, "Wall-clock limit per snippet in seconds.")
                },
                "required": ["language", "code_list"]
            }
        },
        {
            "name": "compute_score_parallel",
            "description": "Score solutions against ground truths with the scorer registered for data_source; results follow input order.",
            "inputSchema": {
                "type": "object",
                "properties": {
                    "data_source": string_prop("Registered scorer name such as theoretical_physics."),
                    "solution_list": {"type": "array", "items": {"type": "string"}},
                    "ground_truth_list": {"type": "array", "items": {"type": "string"}},
                    "extra_info_list": {"type": ["array", "null"], "items": {"type": ["object", "string", "null"]}},
                    "timeout": timeout_prop(DEFAULT_SCORE_TIMEOUT_S, "Limit per score computation in seconds.")
                },
                "required": ["data_source", "solution_list", "ground_truth_list", "extra_info_list"]
            }
        }
    ])
}
