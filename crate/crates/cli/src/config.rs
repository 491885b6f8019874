//! One TOML or JSON file with a section per stage.

use std::path::{Path, PathBuf};
use std::time::Duration;

use lcot_core::gateway::{BackendSpec, Gateway, RetryPolicy};
use lcot_core::search::SearchConfig;
use lcot_core::socrates::{load_curriculum, Curriculum};
use lcot_core::util::Clock;
use lcot_core::sha256_hex;
use lcot_mcp::SandboxConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    /// Fixed RFC 3339 timestamp for every artifact; wall clock when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock: Option<String>,
    pub work_dir: PathBuf,
    pub curriculum: PathBuf,
    #[serde(default)]
    pub gateway: GatewaySection,
    pub backends: Vec<BackendSpec>,
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub articles: ArticleSection,
    #[serde(default)]
    pub cluster: ClusterSection,
    #[serde(default)]
    pub serve: ServeSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcp: Option<McpSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySection {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
}

impl Default for GatewaySection {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff_ms: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    pub generator: String,
    /// Prompt sanitizer; sanitation is skipped when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checker: Option<String>,
    pub solvers: Vec<String>,
    #[serde(default = "default_thumbnails")]
    pub thumbnails_per_topic: usize,
    #[serde(default = "default_fraction")]
    pub reductionist_fraction: f64,
    #[serde(default = "default_attempts")]
    pub attempts_per_backend: u32,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_thumbnails() -> usize {
    4
}

fn default_fraction() -> f64 {
    0.5
}

fn default_attempts() -> u32 {
    1
}

fn default_workers() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArticleSection {
    pub author: Option<String>,
    pub expander: Option<String>,
    pub categorizer: Option<String>,
    /// Pages written by `pipeline`.
    pub keywords: Vec<String>,
    pub language: String,
    pub k: usize,
    pub search: SearchConfig,
    /// Keyword extractor for the link graph; tf-idf when absent.
    pub keyword_backend: Option<String>,
    pub keywords_per_page: usize,
}

impl Default for ArticleSection {
    fn default() -> Self {
        Self {
            author: None,
            expander: None,
            categorizer: None,
            keywords: Vec::new(),
            language: "en".into(),
            k: 200,
            search: SearchConfig::default(),
            keyword_backend: None,
            keywords_per_page: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub min_size: usize,
    pub max_depth: usize,
    pub q_max: usize,
    pub n_null: usize,
    pub titler: Option<String>,
}

impl Default for ClusterSection {
    fn default() -> Self {
        let p = lcot_graph::HierarchyParams::default();
        Self {
            min_size: p.min_size,
            max_depth: p.max_depth,
            q_max: p.structure.q_max,
            n_null: p.structure.n_null,
            titler: None,
        }
    }
}

impl ClusterSection {
    pub fn params(&self, seed: u64) -> lcot_graph::HierarchyParams {
        let mut p = lcot_graph::HierarchyParams {
            min_size: self.min_size,
            max_depth: self.max_depth,
            ..Default::default()
        };
        p.structure.q_max = self.q_max;
        p.structure.n_null = self.n_null;
        p.structure.seed = seed;
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub addr: String,
}

impl Default for ServeSection {
    fn default() -> Self {
        Self {
            addr: "127.0.0.1:8080".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McpSection {
    pub author: String,
    pub generator: String,
    pub solver: String,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub sandbox: SandboxConfig,
}

/// Parsed config plus the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: Config,
    pub base: PathBuf,
    pub source: PathBuf,
}

impl Config {
    pub fn parse(text: &str, json: bool) -> CliResult<Config> {
        let parsed = if json {
            serde_json::from_str(text).map_err(|e| e.to_string())
        } else {
            toml::from_str(text).map_err(|e| e.to_string())
        };
        let config: Config = parsed.map_err(|e| CliError::validation(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> CliResult<()> {
        let known = |id: &str| self.backends.iter().any(|b| b.backend_id == id);
        let mut referenced = vec![("pipeline.generator", Some(&self.pipeline.generator))];
        referenced.push(("pipeline.checker", self.pipeline.checker.as_ref()));
        referenced.push(("articles.author", self.articles.author.as_ref()));
        referenced.push(("articles.expander", self.articles.expander.as_ref()));
        referenced.push(("articles.categorizer", self.articles.categorizer.as_ref()));
        referenced.push(("articles.keyword_backend", self.articles.keyword_backend.as_ref()));
        referenced.push(("cluster.titler", self.cluster.titler.as_ref()));
        if let Some(m) = &self.mcp {
            referenced.push(("mcp.author", Some(&m.author)));
            referenced.push(("mcp.generator", Some(&m.generator)));
            referenced.push(("mcp.solver", Some(&m.solver)));
        }
        for (field, id) in referenced {
            if let Some(id) = id {
                if !known(id) {
                    return Err(CliError::validation(format!("{field} names unknown backend `{id}`")));
                }
            }
        }
        for id in &self.pipeline.solvers {
            if !known(id) {
                return Err(CliError::validation(format!("pipeline.solvers names unknown backend `{id}`")));
            }
        }
        if self.pipeline.thumbnails_per_topic == 0 {
            return Err(CliError::validation("pipeline.thumbnails_per_topic must be at least 1"));
        }
        if !self.articles.keywords.is_empty() && self.articles.author.is_none() {
            return Err(CliError::validation("articles.keywords needs articles.author"));
        }
        Ok(())
    }

    /// Canonical JSON digest of the parsed config.
    pub fn hash(&self) -> String {
        digest_json(self)
    }

    pub fn clock(&self) -> Clock {
        match &self.clock {
            Some(t) => Clock::Fixed(t.clone()),
            None => Clock::System,
        }
    }

    pub fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.gateway.max_attempts.max(1),
            initial_backoff: Duration::from_millis(self.gateway.initial_backoff_ms),
        }
    }

    pub fn gateway(&self) -> CliResult<Gateway> {
        let mut gw = Gateway::with_retry(self.retry());
        for spec in &self.backends {
            gw.register_backend(spec.clone())
                .map_err(|e| CliError::validation(format!("backend {}: {e}", spec.backend_id)))?;
        }
        Ok(gw)
    }

    pub fn backend(&self, id: &str) -> Option<&BackendSpec> {
        self.backends.iter().find(|b| b.backend_id == id)
    }
}

impl Loaded {
    pub fn from_path(path: &Path) -> CliResult<Loaded> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation(format!("cannot read config {}: {e}", path.display())))?;
        let json = path.extension().is_some_and(|e| e == "json");
        let config = Config::parse(&text, json)?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Loaded {
            config,
            base,
            source: path.to_path_buf(),
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn work_dir(&self) -> PathBuf {
        self.resolve(&self.config.work_dir)
    }

    pub fn curriculum_path(&self) -> PathBuf {
        self.resolve(&self.config.curriculum)
    }

    pub fn curriculum(&self) -> CliResult<Curriculum> {
        load_curriculum(self.curriculum_path()).map_err(|e| CliError::validation(format!("curriculum: {e}")))
    }

    /// Config digest extended with the curriculum bytes.
    pub fn config_hash(&self) -> CliResult<String> {
        let curriculum = std::fs::read(self.curriculum_path())
            .map_err(|e| CliError::validation(format!("cannot read curriculum: {e}")))?;
        let mut bytes = self.config.hash().into_bytes();
        bytes.push(b'\n');
        bytes.extend_from_slice(&curriculum);
        Ok(sha256_hex(&bytes))
    }
}

pub fn digest_json<T: Serialize>(value: &T) -> String {
    let text = serde_json::to_string(value).expect("config values serialize");
    sha256_hex(text.as_bytes())
}
