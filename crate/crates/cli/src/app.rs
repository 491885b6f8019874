//! Argument parsing and verb dispatch.

use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use lcot_core::search::SearchConfig;
use lcot_graph::HierarchyParams;

use crate::commands;
use crate::config::{ClusterSection, Loaded};
use crate::error::{runtime, CliError, CliResult};
use crate::pipeline::{self, RunOptions};
use crate::serve;

#[derive(Debug, Parser)]
#[command(name = "lcot", version, about = "Build, search and publish a verified reasoning corpus")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan, generate, verify and ingest problems, then index, write articles and cluster.
    Pipeline(PipelineArgs),
    /// Rank indexed records for a keyword.
    Search(SearchArgs),
    /// Write one article from the built corpus.
    Article(ArticleArgs),
    /// Compare grounded articles against baseline articles with a recorded judge.
    Eval(EvalArgs),
    /// Build the community hierarchy of a keyword graph.
    Cluster(ClusterArgs),
    /// Serve the HTTP API over a built work directory.
    Serve(ServeArgs),
    /// Run the MCP tool server.
    Mcp(McpArgs),
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Ignore checkpoints and rerun every stage.
    #[arg(long)]
    pub fresh: bool,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub index: PathBuf,
    pub keyword: String,
    #[arg(short, long, default_value_t = 10)]
    pub k: usize,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ArticleArgs {
    #[arg(long)]
    pub config: PathBuf,
    pub keyword: String,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub plato: PathBuf,
    #[arg(long)]
    pub baseline: PathBuf,
    /// Recorded judge transcript.
    #[arg(long)]
    pub judge: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Graph directory (`nodes.tsv`, `edges.txt`) or a JSON array of keyword sets.
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub min_size: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub addr: Option<SocketAddr>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("transport").required(true).args(["mcp_stdio", "mcp_http"])))]
pub struct McpArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Newline-delimited JSON-RPC on stdin and stdout.
    #[arg(long)]
    pub mcp_stdio: bool,
    /// `POST /mcp` on this address.
    #[arg(long, value_name = "ADDR")]
    pub mcp_http: Option<SocketAddr>,
}

fn runtime_for_server() -> CliResult<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(runtime("tokio"))
}

fn emit(out: &mut dyn Write, text: &str) -> CliResult<()> {
    out.write_all(text.as_bytes())?;
    Ok(())
}

fn json_line<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output serializes") + "\n"
}

pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Pipeline(a) => {
            let loaded = Loaded::from_path(&a.config)?;
            let manifest = pipeline::run(
                &loaded,
                &RunOptions {
                    seed: a.seed,
                    fresh: a.fresh,
                },
            )?;
            for s in &manifest.stages {
                let counts: Vec<String> = s.counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
                emit(
                    out,
                    &format!("{:<10} {:<8} {}\n", s.stage, format!("{:?}", s.status).to_lowercase(), counts.join(" ")),
                )?;
            }
            emit(out, &format!("run {} written to {}\n", manifest.run_id, loaded.work_dir().display()))
        }
        Command::Search(a) => {
            let hits = commands::search(&a.index, &a.keyword, a.k, &SearchConfig::default())?;
            if a.json {
                emit(out, &json_line(&hits))
            } else {
                emit(out, &commands::format_hits(&hits))
            }
        }
        Command::Article(a) => {
            let loaded = Loaded::from_path(&a.config)?;
            let gateway = loaded.config.gateway()?;
            let knowledge = commands::Knowledge::open(&loaded.work_dir())?;
            let page = commands::article(&loaded, &gateway, &knowledge, &a.keyword)?;
            for entry in &page.audit {
                eprintln!("audit: {} {}", entry.prompt_id, entry.reason);
            }
            if a.json {
                emit(out, &json_line(&page))
            } else {
                emit(out, &page.article.render())
            }
        }
        Command::Eval(a) => {
            let report = commands::eval(&a.plato, &a.baseline, &a.judge, a.workers)?;
            for entry in &report.audit {
                eprintln!("audit: {} {}", entry.keyword, entry.reason);
            }
            report.write(&a.out).map_err(runtime("write report"))?;
            emit(out, &report.table())
        }
        Command::Cluster(a) => {
            let mut section = ClusterSection::default();
            if let Some(m) = a.min_size {
                section.min_size = m;
            }
            if let Some(d) = a.max_depth {
                section.max_depth = d;
            }
            let params: HierarchyParams = section.params(a.seed.unwrap_or(0));
            let result = commands::cluster(&a.input, &a.out, &params)?;
            emit(out, &commands::format_tree(&result.tree))?;
            emit(out, &format!("tree written to {}\n", result.tree_path.display()))
        }
        Command::Serve(a) => {
            let loaded = Loaded::from_path(&a.config)?;
            let addr = match a.addr {
                Some(addr) => addr,
                None => loaded
                    .config
                    .serve
                    .addr
                    .parse()
                    .map_err(|e| CliError::validation(format!("serve.addr: {e}")))?,
            };
            let router = serve::router(&loaded)?;
            runtime_for_server()?
                .block_on(serve::serve(router, addr))
                .map_err(runtime("serve"))
        }
        Command::Mcp(a) => {
            let loaded = Loaded::from_path(&a.config)?;
            let server = serve::mcp_server(&loaded)?;
            match a.mcp_http {
                Some(addr) => runtime_for_server()?
                    .block_on(lcot_mcp::serve_http(std::sync::Arc::new(server), addr))
                    .map_err(runtime("mcp http")),
                None => {
                    let stdin = std::io::stdin();
                    lcot_mcp::serve_stdio(&server, stdin.lock(), out).map_err(runtime("mcp stdio"))
                }
            }
        }
    }
}
