//! Null-ensemble structure test and community-count selection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::GraphError;
use crate::modbp::{modbp_partition, ModbpParams, Partition};
use crate::synth::rewire;
use crate::KeywordGraph;

pub const MIN_NULL: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureParams {
    pub q_max: usize,
    /// BP restarts per `q`; the highest-modularity run is kept.
    pub restarts: usize,
    pub n_null: usize,
    pub swaps_per_edge: usize,
    /// Structured iff observed > null mean + `z` null standard deviations.
    pub z: f64,
    /// Multipliers on the default beta, tried in order while BP stays
    /// paramagnetic. Null runs reuse whichever beta produced the partition.
    pub beta_scales: [f64; 3],
    /// Damping, tolerance and iteration cap for every BP run.
    pub modbp: ModbpParams,
    pub seed: u64,
}

impl Default for StructureParams {
    fn default() -> Self {
        Self {
            q_max: 5,
            restarts: 2,
            n_null: 20,
            swaps_per_edge: 10,
            z: 2.0,
            beta_scales: [1.0, 1.25, 1.5],
            modbp: ModbpParams::new(2, 0),
            seed: 0,
        }
    }
}

/// Deterministic child seed.
pub(crate) fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.wrapping_mul(0xd1b5_4a32_d192_ed03);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullTest {
    pub observed: f64,
    pub null: Vec<f64>,
    pub null_mean: f64,
    pub null_std: f64,
    pub structured: bool,
}

/// Compares the partition's modularity against BP runs with the same
/// `(q, beta)` on degree-preserving rewirings. A paramagnetic or
/// single-community partition is structureless without running the ensemble.
pub fn detect_structure(
    graph: &KeywordGraph,
    partition: &Partition,
    params: &StructureParams,
) -> Result<NullTest, GraphError> {
    if params.n_null < MIN_NULL {
        return Err(GraphError::InvalidParam(format!(
            "n_null must be >= {MIN_NULL}, got {}",
            params.n_null
        )));
    }
    let observed = partition.retrieval_modularity;
    if partition.paramagnetic || partition.communities() < 2 {
        return Ok(NullTest {
            observed,
            null: vec![],
            null_mean: 0.0,
            null_std: 0.0,
            structured: false,
        });
    }
    let null: Vec<f64> = (0..params.n_null as u64)
        .into_par_iter()
        .map(|r| {
            let seed = mix(params.seed, 0x6e75_6c6c, r);
            let g = rewire(graph, params.swaps_per_edge, seed);
            let bp = ModbpParams {
                q: partition.q,
                beta: Some(partition.beta),
                seed,
                ..params.modbp
            };
            modbp_partition(&g, &bp).map(|p| p.retrieval_modularity)
        })
        .collect::<Result<_, _>>()?;
    let n = null.len() as f64;
    let null_mean = null.iter().sum::<f64>() / n;
    let null_std = (null.iter().map(|x| (x - null_mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    Ok(NullTest {
        observed,
        structured: observed > null_mean + params.z * null_std,
        null,
        null_mean,
        null_std,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub q: usize,
    pub partition: Partition,
    pub test: Option<NullTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Index into `candidates` of the chosen `q`, if any passed.
    pub chosen: Option<usize>,
    pub candidates: Vec<Candidate>,
}

impl Selection {
    pub fn structured(&self) -> bool {
        self.chosen.is_some()
    }

    pub fn best(&self) -> Option<&Candidate> {
        self.chosen.map(|i| &self.candidates[i])
    }
}

/// Runs BP for `q = 2..=q_max`, raising beta along `beta_scales` while the
/// run stays paramagnetic, and tests candidates in decreasing modularity
/// (ties to smaller `q`); the first that passes the structure test wins.
pub fn select_q(graph: &KeywordGraph, params: &StructureParams) -> Result<Selection, GraphError> {
    if params.q_max < 2 {
        return Err(GraphError::InvalidParam(format!("q_max must be >= 2, got {}", params.q_max)));
    }
    let runs: Vec<(usize, u64)> = (2..=params.q_max)
        .flat_map(|q| (0..params.restarts.max(1) as u64).map(move |r| (q, r)))
        .collect();
    let partitions: Vec<Partition> = runs
        .par_iter()
        .map(|&(q, r)| {
            let base = ModbpParams {
                q,
                seed: mix(params.seed, q as u64, r),
                ..params.modbp
            };
            let beta = base.beta_for(graph);
            let mut last = None;
            for scale in params.beta_scales {
                let p = modbp_partition(
                    graph,
                    &ModbpParams {
                        beta: Some(beta * scale),
                        ..base
                    },
                )?;
                let paramagnetic = p.paramagnetic;
                last = Some(p);
                if !paramagnetic {
                    break;
                }
            }
            Ok::<_, GraphError>(last.expect("at least one beta scale"))
        })
        .collect::<Result<_, _>>()?;
    let mut candidates: Vec<Candidate> = vec![];
    for ((q, _), p) in runs.iter().zip(partitions) {
        match candidates.iter_mut().find(|c| c.q == *q) {
            Some(c) if p.retrieval_modularity > c.partition.retrieval_modularity => c.partition = p,
            Some(_) => {}
            None => candidates.push(Candidate {
                q: *q,
                partition: p,
                test: None,
            }),
        }
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&candidates[a].partition, &candidates[b].partition);
        pb.retrieval_modularity
            .total_cmp(&pa.retrieval_modularity)
            .then(candidates[a].q.cmp(&candidates[b].q))
    });
    let mut chosen = None;
    for i in order {
        let c = &candidates[i];
        if c.partition.paramagnetic || c.partition.communities() < 2 {
            continue;
        }
        let test = detect_structure(
            graph,
            &c.partition,
            &StructureParams {
                seed: mix(params.seed, 0x7465_7374, c.q as u64),
                ..*params
            },
        )?;
        let pass = test.structured;
        candidates[i].test = Some(test);
        if pass {
            chosen = Some(i);
            break;
        }
    }
    Ok(Selection { chosen, candidates })
}
