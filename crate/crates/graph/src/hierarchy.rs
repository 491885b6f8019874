//! Top-down community tree: select `q`, split, recurse on each induced
//! subgraph until a part is too small, structureless, or at the depth cap.

use std::collections::BTreeMap;

use lcot_core::gateway::{ChatRequest, Gateway};
use lcot_core::util::parallel_map;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::GraphError;
use crate::structure::{mix, select_q, StructureParams};
use crate::KeywordGraph;

pub const DEFAULT_MIN_SIZE: usize = 10;
pub const DEFAULT_MAX_DEPTH: usize = 25;
const TITLE_MEMBERS: usize = 25;
const TITLE_MAX_CHARS: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureTest {
    Structured,
    Structureless,
    TooSmall,
    DepthLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HierarchyParams {
    pub min_size: usize,
    pub max_depth: usize,
    pub structure: StructureParams,
}

impl Default for HierarchyParams {
    fn default() -> Self {
        Self {
            min_size: DEFAULT_MIN_SIZE,
            max_depth: DEFAULT_MAX_DEPTH,
            structure: StructureParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityNode {
    /// Dotted path from the root, e.g. `0.1.0`.
    pub id: String,
    pub level: usize,
    pub size: usize,
    /// Member keywords, sorted.
    pub members: Vec<String>,
    #[serde(default)]
    pub title: Option<String>,
    pub structure_test: StructureTest,
    /// Chosen community count and modularity when the node was split by BP.
    #[serde(default)]
    pub q: Option<usize>,
    #[serde(default)]
    pub modularity: Option<f64>,
    pub children: Vec<CommunityNode>,
}

impl CommunityNode {
    fn leaf(id: String, level: usize, members: Vec<String>, structure_test: StructureTest) -> Self {
        Self {
            id,
            level,
            size: members.len(),
            members,
            title: None,
            structure_test,
            q: None,
            modularity: None,
            children: vec![],
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Pre-order traversal.
    pub fn walk(&self) -> Vec<&CommunityNode> {
        let mut out = vec![self];
        for c in &self.children {
            out.extend(c.walk());
        }
        out
    }

    fn walk_mut(&mut self, f: &mut impl FnMut(&mut CommunityNode)) {
        f(self);
        for c in &mut self.children {
            c.walk_mut(f);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityTree {
    pub root: CommunityNode,
    pub params: HierarchyParams,
}

impl CommunityTree {
    pub fn nodes(&self) -> Vec<&CommunityNode> {
        self.root.walk()
    }

    pub fn leaves(&self) -> Vec<&CommunityNode> {
        self.nodes().into_iter().filter(|n| n.is_leaf()).collect()
    }

    /// Deepest level present; the root is level 0.
    pub fn depth(&self) -> usize {
        self.nodes().iter().map(|n| n.level).max().unwrap_or(0)
    }

    pub fn find(&self, id: &str) -> Option<&CommunityNode> {
        self.nodes().into_iter().find(|n| n.id == id)
    }

    /// Nodes at `level`.
    pub fn level(&self, level: usize) -> Vec<&CommunityNode> {
        self.nodes().into_iter().filter(|n| n.level == level).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serializes") + "\n"
    }

    pub fn from_json(raw: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(raw)
    }
}

pub fn build_hierarchy(graph: &KeywordGraph, params: &HierarchyParams) -> Result<CommunityTree, GraphError> {
    if graph.node_count() == 0 {
        return Err(GraphError::Empty);
    }
    let all: Vec<u32> = (0..graph.node_count() as u32).collect();
    let root = recurse(graph, all, 0, "0".into(), params)?;
    Ok(CommunityTree { root, params: *params })
}

fn names(graph: &KeywordGraph, members: &[u32]) -> Vec<String> {
    let mut v: Vec<String> = members.iter().map(|&m| graph.nodes[m as usize].clone()).collect();
    v.sort();
    v
}

fn children(
    graph: &KeywordGraph,
    parts: Vec<Vec<u32>>,
    level: usize,
    id: &str,
    params: &HierarchyParams,
) -> Result<Vec<CommunityNode>, GraphError> {
    parts
        .into_par_iter()
        .enumerate()
        .map(|(i, part)| recurse(graph, part, level + 1, format!("{id}.{i}"), params))
        .collect()
}

fn recurse(
    graph: &KeywordGraph,
    mut members: Vec<u32>,
    level: usize,
    id: String,
    params: &HierarchyParams,
) -> Result<CommunityNode, GraphError> {
    members.sort_unstable();
    let member_names = names(graph, &members);
    if members.len() < params.min_size {
        return Ok(CommunityNode::leaf(id, level, member_names, StructureTest::TooSmall));
    }
    if level >= params.max_depth {
        return Ok(CommunityNode::leaf(id, level, member_names, StructureTest::DepthLimit));
    }
    let sub = graph.induced(&members);
    if sub.undirected_edge_count() == 0 {
        return Ok(CommunityNode::leaf(id, level, member_names, StructureTest::Structureless));
    }
    let components = sub.components();
    if components.len() > 1 {
        let parts = components
            .into_iter()
            .map(|c| c.into_iter().map(|l| members[l as usize]).collect())
            .collect();
        let mut node = CommunityNode::leaf(id.clone(), level, member_names, StructureTest::Structured);
        node.children = children(graph, parts, level, &id, params)?;
        return Ok(node);
    }
    let structure = StructureParams {
        seed: mix(params.structure.seed, level as u64, members[0] as u64),
        ..params.structure
    };
    let selection = select_q(&sub, &structure)?;
    let Some(best) = selection.best() else {
        return Ok(CommunityNode::leaf(id, level, member_names, StructureTest::Structureless));
    };
    let parts: Vec<Vec<u32>> = best
        .partition
        .groups()
        .into_iter()
        .map(|g| g.into_iter().map(|l| members[l as usize]).collect())
        .collect();
    let mut node = CommunityNode::leaf(id.clone(), level, member_names, StructureTest::Structured);
    node.q = Some(best.q);
    node.modularity = Some(best.partition.retrieval_modularity);
    node.children = children(graph, parts, level, &id, params)?;
    Ok(node)
}

pub fn title_request(keywords: &[String]) -> ChatRequest {
    ChatRequest::solver(
        "You name clusters of encyclopedia keywords. Reply with one title of at most six words.",
        format!("Keywords:\n{}\n\nTitle:", keywords.join("\n")),
    )
}

fn clean_title(raw: &str) -> Option<String> {
    let line = raw.lines().map(str::trim).find(|l| !l.is_empty())?;
    let line = line.trim_start_matches(['#', '*', '-', ' ']);
    let line = line.strip_prefix("Title:").unwrap_or(line);
    let t = line.trim().trim_matches(['"', '\'', '*']).trim();
    (!t.is_empty()).then(|| t.chars().take(TITLE_MAX_CHARS).collect())
}

/// Titles every community with at least `min_size` members from its
/// highest-degree keywords. Communities whose backend call fails stay
/// untitled. Returns the number titled.
pub fn summarize_communities(
    tree: &mut CommunityTree,
    graph: &KeywordGraph,
    gateway: &Gateway,
    backend: &str,
    min_size: usize,
) -> usize {
    let index: BTreeMap<&str, usize> = graph.nodes.iter().enumerate().map(|(i, k)| (k.as_str(), i)).collect();
    let jobs: Vec<(String, ChatRequest)> = tree
        .nodes()
        .into_iter()
        .filter(|n| n.size >= min_size)
        .map(|n| {
            let mut ranked: Vec<&String> = n.members.iter().collect();
            ranked.sort_by_key(|k| (std::cmp::Reverse(index.get(k.as_str()).map_or(0, |&i| graph.degree(i))), *k));
            let top: Vec<String> = ranked.into_iter().take(TITLE_MEMBERS).cloned().collect();
            (n.id.clone(), title_request(&top))
        })
        .collect();
    let workers = gateway.spec(backend).map_or(1, |s| s.max_concurrency);
    let titles: BTreeMap<String, Option<String>> = parallel_map(&jobs, workers, |(id, req)| {
        let title = match gateway.complete(backend, req) {
            Ok(r) => clean_title(&r.text),
            Err(e) => {
                tracing::warn!(community = %id, error = %e, "community left untitled");
                None
            }
        };
        (id.clone(), title)
    })
    .into_iter()
    .collect();
    let mut titled = 0;
    tree.root.walk_mut(&mut |n| {
        n.title = titles.get(&n.id).cloned().flatten();
        titled += n.title.is_some() as usize;
    });
    titled
}
