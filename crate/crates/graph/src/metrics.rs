//! Partition quality measures.

use std::collections::BTreeMap;

use crate::KeywordGraph;

/// Newman modularity of `labels` on the symmetrized graph:
/// `Q = sum_c [ e_c / m - (D_c / 2m)^2 ]`, with `e_c` the intra-community edge
/// count and `D_c` the community degree total. Zero for an edgeless graph.
pub fn modularity(graph: &KeywordGraph, labels: &[usize]) -> f64 {
    assert_eq!(labels.len(), graph.node_count(), "one label per node");
    let m = graph.undirected_edge_count() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let k = labels.iter().copied().max().map_or(0, |x| x + 1);
    let mut intra = vec![0.0f64; k];
    let mut degree = vec![0.0f64; k];
    for (i, &c) in labels.iter().enumerate() {
        degree[c] += graph.degree(i) as f64;
    }
    for (a, b) in graph.undirected_edges() {
        if labels[a as usize] == labels[b as usize] {
            intra[labels[a as usize]] += 1.0;
        }
    }
    (0..k).map(|c| intra[c] / m - (degree[c] / (2.0 * m)).powi(2)).sum()
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information `2 I(A;B) / (H(A) + H(B))`; 1 when both
/// labelings are trivial.
pub fn nmi(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must cover the same nodes");
    let n = a.len() as f64;
    if a.is_empty() {
        return 1.0;
    }
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut ca: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cb: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *ca.entry(x).or_default() += 1;
        *cb.entry(y).or_default() += 1;
    }
    let ha = entropy(ca.values().copied(), n);
    let hb = entropy(cb.values().copied(), n);
    if ha + hb == 0.0 {
        return 1.0;
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let pxy = c as f64 / n;
            pxy * (pxy * n * n / (ca[&x] as f64 * cb[&y] as f64)).ln()
        })
        .sum();
    (2.0 * mi / (ha + hb)).clamp(0.0, 1.0)
}
