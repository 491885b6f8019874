//! Belief propagation for the modularity Potts model.
//!
//! Messages live on directed edges of the symmetrized graph. For an edge
//! `i -> j` and group `t`:
//!
//! ```text
//! psi[i->j][t] ∝ exp(-beta d_i theta[t] / 2m) * prod_{k in N(i) \ j} (1 + psi[k->i][t] (e^beta - 1))
//! theta[t]     = sum_k d_k psi[k][t]
//! ```
//!
//! Products are accumulated as sums of logarithms and normalized with a
//! max-shifted exponential. Nodes are updated asynchronously in a fresh
//! random order each sweep, with damping on the outgoing messages.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::GraphError;
use crate::metrics::modularity;
use crate::KeywordGraph;

pub const DEFAULT_DAMPING: f64 = 0.1;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 500;
pub const BETA_MIN: f64 = 0.1;
pub const BETA_MAX: f64 = 5.0;
/// Marginals closer than this to uniform in every component mean BP found
/// no retrieval state.
pub const PARAMAGNETIC_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModbpParams {
    pub q: usize,
    /// `None` selects [`default_beta`].
    pub beta: Option<f64>,
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl ModbpParams {
    pub fn new(q: usize, seed: u64) -> Self {
        Self {
            q,
            beta: None,
            damping: DEFAULT_DAMPING,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            seed,
        }
    }

    pub fn beta_for(&self, graph: &KeywordGraph) -> f64 {
        self.beta.unwrap_or_else(|| default_beta(self.q, graph.mean_degree()))
    }
}

/// `ln(q / (sqrt(c) - 1) + 1)` for mean degree `c`, clamped to
/// `[BETA_MIN, BETA_MAX]`.
pub fn default_beta(q: usize, mean_degree: f64) -> f64 {
    let s = mean_degree.sqrt() - 1.0;
    if s <= 0.0 {
        return BETA_MAX;
    }
    (q as f64 / s + 1.0).ln().clamp(BETA_MIN, BETA_MAX)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    /// Community per node, numbered by first appearance.
    pub labels: Vec<usize>,
    pub q: usize,
    pub beta: f64,
    pub retrieval_modularity: f64,
    pub converged: bool,
    pub iterations: usize,
    pub paramagnetic: bool,
    pub free_energy: f64,
}

impl Partition {
    /// Number of non-empty communities.
    pub fn communities(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |x| x + 1)
    }

    /// Members of each community, in label order.
    pub fn groups(&self) -> Vec<Vec<u32>> {
        let mut out = vec![vec![]; self.communities()];
        for (i, &c) in self.labels.iter().enumerate() {
            out[c].push(i as u32);
        }
        out
    }
}

/// Renumbers labels by order of first appearance.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::BTreeMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Message-passing state for one graph and one `(q, beta)`.
pub struct Modbp<'g> {
    graph: &'g KeywordGraph,
    q: usize,
    beta: f64,
    damping: f64,
    expm1_beta: f64,
    two_m: f64,
    /// CSR offsets into `targets`; directed edge `e` runs from its row node to `targets[e]`.
    offsets: Vec<usize>,
    targets: Vec<u32>,
    /// Index of the reverse directed edge.
    reverse: Vec<usize>,
    messages: Vec<f64>,
    marginals: Vec<f64>,
    theta: Vec<f64>,
    order: Vec<u32>,
    rng: ChaCha8Rng,
    scratch: Vec<f64>,
}

fn normalize_log(logs: &mut [f64]) {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in logs.iter_mut() {
        *x = (*x - max).exp();
        z += *x;
    }
    for x in logs.iter_mut() {
        *x /= z;
    }
}

fn log_sum_exp(logs: &[f64]) -> f64 {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl<'g> Modbp<'g> {
    pub fn new(graph: &'g KeywordGraph, q: usize, beta: f64, damping: f64, seed: u64) -> Result<Self, GraphError> {
        let n = graph.node_count();
        if n == 0 || graph.undirected_edge_count() == 0 {
            return Err(GraphError::Empty);
        }
        if q < 2 {
            return Err(GraphError::InvalidParam(format!("q must be >= 2, got {q}")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(GraphError::InvalidParam(format!("beta must be > 0, got {beta}")));
        }
        if !(0.0..1.0).contains(&damping) {
            return Err(GraphError::InvalidParam(format!("damping must be in [0, 1), got {damping}")));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = vec![];
        offsets.push(0);
        for i in 0..n {
            targets.extend_from_slice(graph.neighbors(i));
            offsets.push(targets.len());
        }
        let reverse = (0..n)
            .flat_map(|i| (offsets[i]..offsets[i + 1]).map(move |e| (i, e)))
            .map(|(i, e)| {
                let j = targets[e] as usize;
                let slot = graph.neighbors(j).binary_search(&(i as u32)).expect("symmetric adjacency");
                offsets[j] + slot
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut random_dist = |len: usize| -> Vec<f64> {
            let mut v: Vec<f64> = (0..len).map(|_| rng.gen::<f64>() + 1e-3).collect();
            for chunk in v.chunks_mut(q) {
                let z: f64 = chunk.iter().sum();
                chunk.iter_mut().for_each(|x| *x /= z);
            }
            v
        };
        let messages = random_dist(targets.len() * q);
        let marginals = random_dist(n * q);
        let mut theta = vec![0.0; q];
        for i in 0..n {
            let d = graph.degree(i) as f64;
            for t in 0..q {
                theta[t] += d * marginals[i * q + t];
            }
        }
        Ok(Self {
            graph,
            q,
            beta,
            damping,
            expm1_beta: beta.exp_m1(),
            two_m: 2.0 * graph.undirected_edge_count() as f64,
            offsets,
            targets,
            reverse,
            messages,
            marginals,
            theta,
            order: (0..n as u32).collect(),
            rng,
            scratch: vec![],
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn messages(&self) -> &[f64] {
        &self.messages
    }

    pub fn marginals(&self) -> &[f64] {
        &self.marginals
    }

    /// Largest `|sum - 1|` over all message and marginal vectors.
    pub fn normalization_error(&self) -> f64 {
        self.messages
            .chunks(self.q)
            .chain(self.marginals.chunks(self.q))
            .map(|c| (c.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Log-domain incoming factors `ln(1 + psi[k->i][t] (e^beta - 1))` for
    /// every neighbor of `i`, into `scratch`; returns their per-group sum.
    fn incoming(&mut self, i: usize) -> Vec<f64> {
        let q = self.q;
        let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
        self.scratch.clear();
        let mut sum = vec![0.0; q];
        for e in lo..hi {
            let r = self.reverse[e];
            for (t, s) in sum.iter_mut().enumerate() {
                let l = (self.messages[r * q + t] * self.expm1_beta).ln_1p();
                self.scratch.push(l);
                *s += l;
            }
        }
        sum
    }

    fn field(&self, i: usize, t: usize) -> f64 {
        -self.beta * self.graph.degree(i) as f64 * self.theta[t] / self.two_m
    }

    /// Updates every outgoing message and the marginal of node `i`; returns
    /// the largest message change.
    fn update_node(&mut self, i: usize) -> f64 {
        let q = self.q;
        let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
        let sum = self.incoming(i);
        let h: Vec<f64> = (0..q).map(|t| self.field(i, t)).collect();
        let mut change = 0.0f64;
        let mut buf = vec![0.0; q];
        for (slot, e) in (lo..hi).enumerate() {
            for (t, b) in buf.iter_mut().enumerate() {
                *b = h[t] + sum[t] - self.scratch[slot * q + t];
            }
            normalize_log(&mut buf);
            let old = &mut self.messages[e * q..(e + 1) * q];
            let mut z = 0.0;
            for t in 0..q {
                let new = (1.0 - self.damping) * buf[t] + self.damping * old[t];
                change = change.max((new - old[t]).abs());
                old[t] = new;
                z += new;
            }
            old.iter_mut().for_each(|x| *x /= z);
        }
        for t in 0..q {
            buf[t] = h[t] + sum[t];
        }
        normalize_log(&mut buf);
        let d = self.graph.degree(i) as f64;
        for (t, &b) in buf.iter().enumerate() {
            self.theta[t] += d * (b - self.marginals[i * q + t]);
            self.marginals[i * q + t] = b;
        }
        change
    }

    /// One asynchronous pass over all nodes in random order; returns the
    /// largest message change.
    pub fn sweep(&mut self) -> f64 {
        let mut order = std::mem::take(&mut self.order);
        order.shuffle(&mut self.rng);
        let mut change = 0.0f64;
        for &i in &order {
            change = change.max(self.update_node(i as usize));
        }
        self.order = order;
        change
    }

    /// Bethe free energy per node at the current messages.
    pub fn free_energy(&mut self) -> f64 {
        let q = self.q;
        let n = self.graph.node_count();
        let mut total = 0.0;
        for i in 0..n {
            let sum = self.incoming(i);
            let logs: Vec<f64> = (0..q).map(|t| self.field(i, t) + sum[t]).collect();
            total += log_sum_exp(&logs);
        }
        for i in 0..n {
            for e in self.offsets[i]..self.offsets[i + 1] {
                if (self.targets[e] as usize) > i {
                    let r = self.reverse[e];
                    let overlap: f64 = (0..q).map(|t| self.messages[e * q + t] * self.messages[r * q + t]).sum();
                    total -= (overlap * self.expm1_beta).ln_1p();
                }
            }
        }
        total += self.beta * self.theta.iter().map(|x| x * x).sum::<f64>() / (2.0 * self.two_m);
        -total / (n as f64 * self.beta)
    }

    fn is_paramagnetic(&self) -> bool {
        let u = 1.0 / self.q as f64;
        self.marginals.iter().all(|p| (p - u).abs() < PARAMAGNETIC_TOL)
    }

    /// Argmax labels (ties to the lower group), or a single community when
    /// the marginals are uniform.
    pub fn partition(&mut self, converged: bool, iterations: usize) -> Partition {
        let q = self.q;
        let paramagnetic = self.is_paramagnetic();
        let raw: Vec<usize> = if paramagnetic {
            vec![0; self.graph.node_count()]
        } else {
            self.marginals
                .chunks(q)
                .map(|c| {
                    let mut best = 0;
                    for t in 1..q {
                        if c[t] > c[best] {
                            best = t;
                        }
                    }
                    best
                })
                .collect()
        };
        let labels = canonical_labels(&raw);
        Partition {
            retrieval_modularity: modularity(self.graph, &labels),
            labels,
            q,
            beta: self.beta,
            converged,
            iterations,
            paramagnetic,
            free_energy: self.free_energy(),
        }
    }
}

/// Runs sweeps until the largest message change drops below `tol` or
/// `max_iter` sweeps have run.
pub fn modbp_partition(graph: &KeywordGraph, params: &ModbpParams) -> Result<Partition, GraphError> {
    let beta = params.beta_for(graph);
    let mut bp = Modbp::new(graph, params.q, beta, params.damping, params.seed)?;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iter {
        iterations += 1;
        if bp.sweep() < params.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        tracing::debug!(q = params.q, beta, iterations, "modbp did not converge");
    }
    Ok(bp.partition(converged, iterations))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_formula_and_clamp() {
        assert!((default_beta(2, 16.0) - (2.0f64 / 3.0 + 1.0).ln()).abs() < 1e-15);
        assert_eq!(default_beta(2, 1.0), BETA_MAX);
        assert_eq!(default_beta(2, 1e12), BETA_MIN);
    }

    #[test]
    fn canonical_relabeling() {
        assert_eq!(canonical_labels(&[3, 3, 1, 0, 1]), [0, 0, 1, 2, 1]);
    }

    #[test]
    fn rejects_bad_input() {
        let g = KeywordGraph::from_undirected(2, &[(0, 1)]).unwrap();
        assert!(matches!(Modbp::new(&g, 1, 1.0, 0.1, 0), Err(GraphError::InvalidParam(_))));
        assert!(matches!(Modbp::new(&g, 2, 0.0, 0.1, 0), Err(GraphError::InvalidParam(_))));
        let empty = KeywordGraph::from_undirected(3, &[]).unwrap();
        assert!(matches!(Modbp::new(&empty, 2, 1.0, 0.1, 0), Err(GraphError::Empty)));
    }
}
