//! Synthetic graphs with known structure, and degree-preserving rewiring.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::KeywordGraph;

fn ordered(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// G(n, p).
pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> KeywordGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = vec![];
    for a in 0..n as u32 {
        for b in a + 1..n as u32 {
            if rng.gen_bool(p) {
                edges.push((a, b));
            }
        }
    }
    KeywordGraph::from_undirected(n, &edges).expect("valid edges")
}

/// Planted partition with `blocks` equal blocks of `block_size` nodes. Each
/// node expects `c_in` neighbors inside its block and `c_out` outside.
/// Returns the graph and the planted labels.
pub fn planted_partition(blocks: usize, block_size: usize, c_in: f64, c_out: f64, seed: u64) -> (KeywordGraph, Vec<usize>) {
    let n = blocks * block_size;
    let p_in = (c_in / (block_size - 1) as f64).min(1.0);
    let p_out = if blocks > 1 {
        (c_out / (n - block_size) as f64).min(1.0)
    } else {
        0.0
    };
    let truth: Vec<usize> = (0..n).map(|i| i / block_size).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = vec![];
    for a in 0..n {
        for b in a + 1..n {
            let p = if truth[a] == truth[b] { p_in } else { p_out };
            if rng.gen_bool(p) {
                edges.push((a as u32, b as u32));
            }
        }
    }
    (KeywordGraph::from_undirected(n, &edges).expect("valid edges"), truth)
}

/// Disjoint cliques of the given sizes, consecutive cliques joined by one
/// edge between their first nodes. Returns the graph and clique labels.
pub fn clique_chain(sizes: &[usize]) -> (KeywordGraph, Vec<usize>) {
    let mut edges = vec![];
    let mut truth = vec![];
    let mut start = 0u32;
    let mut firsts = vec![];
    for (c, &k) in sizes.iter().enumerate() {
        firsts.push(start);
        for a in 0..k as u32 {
            truth.push(c);
            for b in a + 1..k as u32 {
                edges.push((start + a, start + b));
            }
        }
        start += k as u32;
    }
    for w in firsts.windows(2) {
        edges.push((w[0], w[1]));
    }
    (KeywordGraph::from_undirected(truth.len(), &edges).expect("valid edges"), truth)
}

/// Four cliques of `k` nodes in two pairs. Siblings within a pair are joined
/// by `links` edges per node; the pairs are joined by a single edge.
/// Returns the graph, pair labels and clique labels.
pub fn super_pairs(k: usize, links: usize) -> (KeywordGraph, Vec<usize>, Vec<usize>) {
    let k32 = k as u32;
    let mut edges = vec![];
    for c in 0..4u32 {
        for a in 0..k32 {
            for b in a + 1..k32 {
                edges.push((c * k32 + a, c * k32 + b));
            }
        }
    }
    for pair in 0..2u32 {
        let (x, y) = (2 * pair * k32, (2 * pair + 1) * k32);
        for i in 0..k32 {
            for j in 0..links as u32 {
                edges.push((x + i, y + (i + j) % k32));
            }
        }
    }
    edges.push((0, 2 * k32));
    let leaves: Vec<usize> = (0..4 * k).map(|i| i / k).collect();
    let pairs = leaves.iter().map(|c| c / 2).collect();
    (KeywordGraph::from_undirected(4 * k, &edges).expect("valid edges"), pairs, leaves)
}

/// Degree-preserving randomization by double edge swaps on the symmetrized
/// graph: `(a,b),(c,d) -> (a,d),(c,b)`, rejecting self-loops and multi-edges.
/// Attempts `swaps_per_edge * m` swaps.
pub fn rewire(graph: &KeywordGraph, swaps_per_edge: usize, seed: u64) -> KeywordGraph {
    let mut edges = graph.undirected_edges();
    let m = edges.len();
    if m >= 2 {
        let mut present: HashSet<(u32, u32)> = edges.iter().copied().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..swaps_per_edge * m {
            let i = rng.gen_range(0..m);
            let j = rng.gen_range(0..m);
            if i == j {
                continue;
            }
            let (a, b) = edges[i];
            let (mut c, mut d) = edges[j];
            if rng.gen_bool(0.5) {
                std::mem::swap(&mut c, &mut d);
            }
            let (e1, e2) = (ordered(a, d), ordered(c, b));
            if a == d || c == b || e1 == e2 || present.contains(&e1) || present.contains(&e2) {
                continue;
            }
            present.remove(&edges[i]);
            present.remove(&edges[j]);
            present.insert(e1);
            present.insert(e2);
            edges[i] = e1;
            edges[j] = e2;
        }
    }
    KeywordGraph::new(graph.nodes.clone(), edges).expect("rewired edges stay in range")
}
