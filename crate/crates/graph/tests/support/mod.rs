#![allow(dead_code)]

use std::collections::BTreeSet;

use lcot_graph::{CommunityNode, CommunityTree, KeywordGraph};

/// `(1/2m) sum_ij (A_ij - d_i d_j / 2m) [g_i == g_j]` by direct double sum
/// over a dense adjacency matrix.
pub fn direct_modularity(graph: &KeywordGraph, labels: &[usize]) -> f64 {
    let n = graph.node_count();
    let mut a = vec![vec![0.0f64; n]; n];
    for &(s, t) in &graph.edges {
        a[s as usize][t as usize] = 1.0;
        a[t as usize][s as usize] = 1.0;
    }
    let d: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
    let two_m: f64 = d.iter().sum();
    if two_m == 0.0 {
        return 0.0;
    }
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                q += a[i][j] - d[i] * d[j] / two_m;
            }
        }
    }
    q / two_m
}

/// Children partition their parent's members, levels step by one, leaves
/// respect the depth cap, and the root covers every node.
pub fn check_tree(tree: &CommunityTree, graph: &KeywordGraph) -> Result<(), String> {
    let all: BTreeSet<&str> = graph.nodes.iter().map(String::as_str).collect();
    let root: BTreeSet<&str> = tree.root.members.iter().map(String::as_str).collect();
    if root != all || tree.root.level != 0 {
        return Err("root does not cover the graph at level 0".into());
    }
    fn visit(n: &CommunityNode, max_depth: usize) -> Result<(), String> {
        if n.level > max_depth {
            return Err(format!("{} exceeds depth cap", n.id));
        }
        if n.size != n.members.len() {
            return Err(format!("{} size mismatch", n.id));
        }
        if n.children.is_empty() {
            return Ok(());
        }
        if n.children.len() < 2 {
            return Err(format!("{} has a single child", n.id));
        }
        let mut union = BTreeSet::new();
        for c in &n.children {
            if c.level != n.level + 1 {
                return Err(format!("{} level is not parent + 1", c.id));
            }
            for m in &c.members {
                if !union.insert(m.as_str()) {
                    return Err(format!("{m} appears in two children of {}", n.id));
                }
            }
            visit(c, max_depth)?;
        }
        let parent: BTreeSet<&str> = n.members.iter().map(String::as_str).collect();
        if union != parent {
            return Err(format!("children of {} do not cover it", n.id));
        }
        Ok(())
    }
    visit(&tree.root, tree.params.max_depth)
}

/// Member sets of a tree level, as sorted index lists.
pub fn level_sets(tree: &CommunityTree, level: usize) -> BTreeSet<Vec<usize>> {
    tree.level(level)
        .iter()
        .map(|n| {
            let mut v: Vec<usize> = n.members.iter().map(|m| m.parse().unwrap()).collect();
            v.sort();
            v
        })
        .collect()
}
