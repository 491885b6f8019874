use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use lcot_core::plato::KeywordSet;
use lcot_core::text::normalize_keyword;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("empty graph")]
    Empty,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Directed keyword graph plus its symmetrized adjacency.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordGraph {
    pub nodes: Vec<String>,
    /// Directed edges, sorted, without duplicates or self-loops.
    pub edges: Vec<(u32, u32)>,
    /// Sorted neighbor lists of the undirected graph (edge iff either direction).
    #[serde(skip)]
    adjacency: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildStats {
    pub pages: usize,
    pub edges: usize,
    pub skipped_unknown: usize,
    pub self_references: usize,
    pub duplicates: usize,
}

impl KeywordGraph {
    /// Graph over `nodes`; edges are deduplicated and self-loops dropped.
    pub fn new(nodes: Vec<String>, edges: impl IntoIterator<Item = (u32, u32)>) -> Result<Self, GraphError> {
        let n = nodes.len() as u32;
        let unique: BTreeSet<&String> = nodes.iter().collect();
        if unique.len() != nodes.len() {
            return Err(GraphError::InvalidParam("duplicate node id".into()));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(GraphError::InvalidParam(format!("edge ({a}, {b}) references a missing node")));
            }
            if a != b {
                set.insert((a, b));
            }
        }
        let mut g = Self {
            nodes,
            edges: set.into_iter().collect(),
            adjacency: vec![],
        };
        g.symmetrize();
        Ok(g)
    }

    /// Undirected graph with nodes named by index.
    pub fn from_undirected(n: usize, edges: &[(u32, u32)]) -> Result<Self, GraphError> {
        Self::new((0..n).map(|i| i.to_string()).collect(), edges.iter().copied())
    }

    fn symmetrize(&mut self) {
        let mut adj = vec![BTreeSet::new(); self.nodes.len()];
        for &(a, b) in &self.edges {
            adj[a as usize].insert(b);
            adj[b as usize].insert(a);
        }
        self.adjacency = adj.into_iter().map(|s| s.into_iter().collect()).collect();
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    /// Symmetrized degrees.
    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    /// Undirected edge count.
    pub fn undirected_edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Undirected edges with `a < b`, sorted.
    pub fn undirected_edges(&self) -> Vec<(u32, u32)> {
        let mut out = vec![];
        for (a, ns) in self.adjacency.iter().enumerate() {
            for &b in ns {
                if (a as u32) < b {
                    out.push((a as u32, b));
                }
            }
        }
        out
    }

    pub fn mean_degree(&self) -> f64 {
        if self.nodes.is_empty() {
            return 0.0;
        }
        2.0 * self.undirected_edge_count() as f64 / self.nodes.len() as f64
    }

    /// Induced subgraph on `members` (indices into this graph), keeping their
    /// order; directed edges are carried over.
    pub fn induced(&self, members: &[u32]) -> KeywordGraph {
        let pos: BTreeMap<u32, u32> = members.iter().enumerate().map(|(i, &m)| (m, i as u32)).collect();
        let edges: Vec<(u32, u32)> = self
            .edges
            .iter()
            .filter_map(|(a, b)| Some((*pos.get(a)?, *pos.get(b)?)))
            .collect();
        let nodes = members.iter().map(|&m| self.nodes[m as usize].clone()).collect();
        KeywordGraph::new(nodes, edges).expect("induced subgraph is valid")
    }

    /// Connected components of the symmetrized graph, each sorted, ordered by
    /// smallest member.
    pub fn components(&self) -> Vec<Vec<u32>> {
        let n = self.nodes.len();
        let mut seen = vec![false; n];
        let mut out = vec![];
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut stack = vec![start as u32];
            let mut comp = vec![];
            while let Some(v) = stack.pop() {
                comp.push(v);
                for &w in &self.adjacency[v as usize] {
                    if !seen[w as usize] {
                        seen[w as usize] = true;
                        stack.push(w);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// `nodes.tsv` (index, tab, keyword) and `edges.txt` (one `src dst` per line).
    pub fn save(&self, dir: &Path) -> Result<(), GraphError> {
        std::fs::create_dir_all(dir)?;
        let mut nodes = std::io::BufWriter::new(std::fs::File::create(dir.join("nodes.tsv"))?);
        for (i, k) in self.nodes.iter().enumerate() {
            writeln!(nodes, "{i}\t{k}")?;
        }
        nodes.flush()?;
        let mut edges = std::io::BufWriter::new(std::fs::File::create(dir.join("edges.txt"))?);
        for (a, b) in &self.edges {
            writeln!(edges, "{a} {b}")?;
        }
        edges.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, GraphError> {
        let nodes_path = dir.join("nodes.tsv");
        let mut nodes = vec![];
        for (i, line) in BufReader::new(std::fs::File::open(&nodes_path)?).lines().enumerate() {
            let line = line?;
            let bad = |message: &str| GraphError::Parse {
                path: nodes_path.display().to_string(),
                line: i + 1,
                message: message.into(),
            };
            let (idx, name) = line.split_once('\t').ok_or_else(|| bad("expected `index<TAB>keyword`"))?;
            if idx.parse::<usize>().ok() != Some(i) {
                return Err(bad("node indices must be 0, 1, 2, ... in order"));
            }
            nodes.push(name.to_string());
        }
        let edges_path = dir.join("edges.txt");
        let mut edges = vec![];
        for (i, line) in BufReader::new(std::fs::File::open(&edges_path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Option<(u32, u32)> = line
                .split_once(' ')
                .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
            edges.push(parsed.ok_or_else(|| GraphError::Parse {
                path: edges_path.display().to_string(),
                line: i + 1,
                message: "expected `src dst`".into(),
            })?);
        }
        KeywordGraph::new(nodes, edges)
    }
}

/// Node per page (normalized title); edge `i -> j` when page `i` lists
/// keyword `j` and `j` is itself a page.
pub fn build_graph(pages: &[KeywordSet]) -> (KeywordGraph, BuildStats) {
    let titles: BTreeSet<String> = pages.iter().map(|p| normalize_keyword(&p.source_page)).collect();
    let nodes: Vec<String> = titles.into_iter().collect();
    let index: BTreeMap<&str, u32> = nodes.iter().enumerate().map(|(i, k)| (k.as_str(), i as u32)).collect();
    let mut stats = BuildStats {
        pages: pages.len(),
        ..Default::default()
    };
    let mut edges = BTreeSet::new();
    for p in pages {
        let src = index[normalize_keyword(&p.source_page).as_str()];
        for k in &p.keywords {
            match index.get(normalize_keyword(k).as_str()) {
                None => stats.skipped_unknown += 1,
                Some(&dst) if dst == src => stats.self_references += 1,
                Some(&dst) => {
                    if !edges.insert((src, dst)) {
                        stats.duplicates += 1;
                    }
                }
            }
        }
    }
    stats.edges = edges.len();
    let graph = KeywordGraph::new(nodes.clone(), edges).expect("edges reference known nodes");
    (graph, stats)
}

impl KeywordGraph {
    /// Restores the symmetrized adjacency after deserialization.
    pub fn from_json(raw: &str) -> Result<Self, serde_json::Error> {
        let g: KeywordGraph = serde_json::from_str(raw)?;
        KeywordGraph::new(g.nodes, g.edges).map_err(<serde_json::Error as serde::de::Error>::custom)
    }
}
