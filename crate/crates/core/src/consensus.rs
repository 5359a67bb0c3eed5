//! Finite-time average consensus on directed graphs.
//!
//! Each node runs the linear iteration
//! `z_q⁺ = a_qq z_q + Σ_{r∈N_q} (z_r − z_q)` with `a_qq = F − deg_in(q)`,
//! and recovers the exact network average from a finite window of its own
//! observations `z_q^(0..=L_q)` through precomputed coefficients `m_q`.
//!
//! The coefficients are obtained centrally from the known graph: `L_q` is the
//! smallest horizon for which the averaging functional `(1/Q)·1ᵀ` lies in the
//! span of the observation functionals `e_qᵀ W^j`, `j ≤ L_q`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const RANK_TOL: f64 = 1e-10;

/// Directed graph described by in-neighbour lists: `in_neighbors[q]` are the
/// nodes whose values node `q` receives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Digraph {
    pub in_neighbors: Vec<Vec<usize>>,
}

/// Graph families used by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphKind {
    Complete,
    Ring,
    Random,
}

impl std::str::FromStr for GraphKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complete" => Ok(Self::Complete),
            "ring" => Ok(Self::Ring),
            "random" => Ok(Self::Random),
            other => Err(crate::error::invalid("graph", format!("unknown graph kind `{other}`"))),
        }
    }
}

impl Digraph {
    pub fn nodes(&self) -> usize {
        self.in_neighbors.len()
    }

    pub fn complete(n: usize) -> Self {
        Self {
            in_neighbors: (0..n).map(|q| (0..n).filter(|&r| r != q).collect()).collect(),
        }
    }

    /// Directed cycle `q−1 → q`.
    pub fn ring(n: usize) -> Self {
        Self {
            in_neighbors: (0..n)
                .map(|q| if n > 1 { vec![(q + n - 1) % n] } else { vec![] })
                .collect(),
        }
    }

    /// Bidirectional star centred at node 0.
    pub fn star(n: usize) -> Self {
        let mut nb = vec![Vec::new(); n];
        for q in 1..n {
            nb[0].push(q);
            nb[q].push(0);
        }
        Self { in_neighbors: nb }
    }

    /// Random strongly connected digraph: a directed cycle over a random node
    /// ordering plus every other arc independently with probability `p_extra`.
    pub fn random_strongly_connected(n: usize, p_extra: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut adj = vec![vec![false; n]; n];
        if n > 1 {
            for i in 0..n {
                let (from, to) = (order[i], order[(i + 1) % n]);
                adj[to][from] = true;
            }
        }
        for (q, row) in adj.iter_mut().enumerate() {
            for (r, arc) in row.iter_mut().enumerate() {
                if r != q && !*arc && rng.random::<f64>() < p_extra {
                    *arc = true;
                }
            }
        }
        Self {
            in_neighbors: adj
                .iter()
                .map(|row| row.iter().enumerate().filter(|(_, &a)| a).map(|(r, _)| r).collect())
                .collect(),
        }
    }

    pub fn build(kind: GraphKind, n: usize, seed: u64) -> Self {
        match kind {
            GraphKind::Complete => Self::complete(n),
            GraphKind::Ring => Self::ring(n),
            GraphKind::Random => Self::random_strongly_connected(n, 0.3, seed),
        }
    }

    pub fn in_degree(&self, q: usize) -> usize {
        self.in_neighbors[q].len()
    }

    pub fn out_degree(&self, q: usize) -> usize {
        self.in_neighbors.iter().filter(|nb| nb.contains(&q)).count()
    }

    /// True when every node reaches every other node.
    pub fn is_strongly_connected(&self) -> bool {
        let n = self.nodes();
        if n == 0 {
            return true;
        }
        let reach = |forward: bool| {
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(v) = stack.pop() {
                for u in 0..n {
                    let arc = if forward {
                        self.in_neighbors[u].contains(&v)
                    } else {
                        self.in_neighbors[v].contains(&u)
                    };
                    if arc && !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nodes();
        for (q, nb) in self.in_neighbors.iter().enumerate() {
            for &r in nb {
                if r >= n || r == q {
                    return Err(crate::error::invalid(
                        format!("graph.in_neighbors[{q}]"),
                        format!("invalid neighbour {r}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Iteration weights and (optionally) finite-time extraction data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusParams {
    /// `a[q][r]`: 1 for in-neighbours, `F − deg_in(q)` on the diagonal.
    pub a: Vec<Vec<f64>>,
    pub f_offset: i64,
    pub in_neighbors: Vec<Vec<usize>>,
    pub degree_in: Vec<usize>,
    pub degree_out: Vec<usize>,
    /// Per-node horizon; empty until [`compute_finite_time_params`] runs.
    pub horizon: Vec<usize>,
    /// Per-node extraction coefficients, `coeffs[q].len() == horizon[q] + 1`.
    pub coeffs: Vec<Vec<f64>>,
    /// Nodes whose horizon exceeds `Q − deg_in + 1`.
    pub horizon_warnings: Vec<usize>,
}

impl ConsensusParams {
    pub fn nodes(&self) -> usize {
        self.a.len()
    }

    pub fn is_complete(&self) -> bool {
        self.horizon.len() == self.nodes() && self.coeffs.len() == self.nodes()
    }

    pub fn max_horizon(&self) -> usize {
        self.horizon.iter().copied().max().unwrap_or(0)
    }

    /// Iteration matrix `W` with `z⁺ = W z`.
    pub fn iteration_matrix(&self) -> DMatrix<f64> {
        let n = self.nodes();
        let mut w = DMatrix::zeros(n, n);
        for q in 0..n {
            w[(q, q)] = self.a[q][q] - self.degree_in[q] as f64;
            for &r in &self.in_neighbors[q] {
                w[(q, r)] += self.a[q][r];
            }
        }
        w
    }
}

/// Builds the iteration weights for self-weight offset `f_offset`.
pub fn build_weights(graph: &Digraph, f_offset: i64) -> ConsensusParams {
    let n = graph.nodes();
    let mut a = vec![vec![0.0; n]; n];
    for q in 0..n {
        for &r in &graph.in_neighbors[q] {
            a[q][r] = 1.0;
        }
        a[q][q] = (f_offset - graph.in_degree(q) as i64) as f64;
    }
    ConsensusParams {
        a,
        f_offset,
        in_neighbors: graph.in_neighbors.clone(),
        degree_in: (0..n).map(|q| graph.in_degree(q)).collect(),
        degree_out: (0..n).map(|q| graph.out_degree(q)).collect(),
        horizon: Vec::new(),
        coeffs: Vec::new(),
        horizon_warnings: Vec::new(),
    }
}

/// One synchronous consensus step.
pub fn iterate(z: &[f64], params: &ConsensusParams) -> Vec<f64> {
    (0..params.nodes())
        .map(|q| {
            let own = z[q];
            params.a[q][q] * own
                + params.in_neighbors[q]
                    .iter()
                    .map(|&r| params.a[q][r] * (z[r] - own))
                    .sum::<f64>()
        })
        .collect()
}

/// Smallest horizon and coefficients for node `q`, or `None` if the average
/// is not observable from node `q`.
fn node_extraction(w: &DMatrix<f64>, q: usize) -> Option<(usize, Vec<f64>)> {
    let n = w.nrows();
    let target = DVector::from_element(n, 1.0 / n as f64);
    let mut rows: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut scales: Vec<f64> = Vec::with_capacity(n);
    let mut v = DVector::zeros(n);
    v[q] = 1.0;
    for l in 0..n {
        if l > 0 {
            // row vector times W, kept as a column: (vᵀW)ᵀ = Wᵀ v
            v = w.transpose() * &v;
        }
        let norm = v.norm();
        if norm == 0.0 || !norm.is_finite() {
            return None;
        }
        rows.push(&v / norm);
        scales.push(norm);
        let k = DMatrix::from_columns(&rows);
        let svd = k.clone().svd(true, true);
        let sol = svd.solve(&target, RANK_TOL).ok()?;
        let resid = (&k * &sol - &target).norm();
        if resid <= RANK_TOL * target.norm().max(1.0) * 10.0 {
            let coeffs = sol.iter().zip(&scales).map(|(c, s)| c / s).collect();
            return Some((l, coeffs));
        }
    }
    None
}

/// Fills horizons and extraction coefficients for every node.
///
/// If extraction fails at some node with offset `F`, one retry is made with
/// `F + 1` before reporting an error naming the node.
pub fn compute_finite_time_params(graph: &Digraph, f_offset: i64) -> Result<ConsensusParams> {
    graph.validate()?;
    let mut last_err = None;
    for offset in [f_offset, f_offset + 1] {
        let mut params = build_weights(graph, offset);
        let w = params.iteration_matrix();
        let n = graph.nodes();
        let mut horizon = Vec::with_capacity(n);
        let mut coeffs = Vec::with_capacity(n);
        let mut failed = None;
        for q in 0..n {
            match node_extraction(&w, q) {
                Some((l, m)) => {
                    horizon.push(l);
                    coeffs.push(m);
                }
                None => {
                    failed = Some(q);
                    break;
                }
            }
        }
        match failed {
            None => {
                params.horizon_warnings = (0..n)
                    .filter(|&q| horizon[q] > n - params.degree_in[q].min(n) + 1)
                    .collect();
                params.horizon = horizon;
                params.coeffs = coeffs;
                return Ok(params);
            }
            Some(node) => {
                last_err = Some(Error::Extraction {
                    node,
                    reason: if graph.is_strongly_connected() {
                        "average not observable from the node's own sequence".into()
                    } else {
                        "graph is not strongly connected".into()
                    },
                })
            }
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Result of a finite-time averaging run.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusOutcome {
    /// Value extracted at each node.
    pub node_values: Vec<f64>,
    /// Consensus value (node 0's output; all nodes agree to round-off).
    pub value: f64,
    /// Synchronous rounds, `max_q L_q + 1`.
    pub iters_used: usize,
    /// Broadcast messages, `Q · (max_q L_q + 1)`.
    pub messages_total: usize,
}

/// Number of broadcast messages for `nodes` nodes and maximal horizon `max_horizon`.
pub fn message_count(nodes: usize, max_horizon: usize) -> usize {
    nodes * (max_horizon + 1)
}

/// Runs the iteration and extracts the average at every node.
pub fn finite_time_average(initial: &[f64], params: &ConsensusParams) -> Result<ConsensusOutcome> {
    if !params.is_complete() {
        return Err(Error::Invalid {
            field: "consensus params".into(),
            reason: "finite-time coefficients not computed".into(),
        });
    }
    let n = params.nodes();
    if initial.len() != n {
        return Err(Error::Dimension(format!("expected {n} initial values, got {}", initial.len())));
    }
    let lmax = params.max_horizon();
    let mut seq = Vec::with_capacity(lmax + 1);
    seq.push(initial.to_vec());
    for _ in 0..lmax {
        let next = iterate(seq.last().expect("non-empty"), params);
        seq.push(next);
    }
    let node_values: Vec<f64> = (0..n).map(|q| extract_at(q, &seq, params)).collect();
    Ok(ConsensusOutcome {
        value: node_values.first().copied().unwrap_or(0.0),
        node_values,
        iters_used: lmax + 1,
        messages_total: message_count(n, lmax),
    })
}

/// Node `q`'s extracted value from the synchronous sequence `seq[j][r]`.
/// Only `seq[0..=L_q][q]` is read.
pub fn extract_at(q: usize, seq: &[Vec<f64>], params: &ConsensusParams) -> f64 {
    params.coeffs[q]
        .iter()
        .enumerate()
        .map(|(j, m)| m * seq[j][q])
        .sum()
}

/// Rounds needed when a node that has extracted the average forwards it
/// immediately: node `r` finishes at `min(L_r, min_{q∈N_r} L_q + 1)`.
pub fn early_broadcast_rounds(params: &ConsensusParams) -> usize {
    (0..params.nodes())
        .map(|r| {
            params.in_neighbors[r]
                .iter()
                .map(|&q| params.horizon[q] + 1)
                .fold(params.horizon[r], usize::min)
        })
        .max()
        .unwrap_or(0)
        + 1
}

/// Averages several quantities at once (one consensus run per column).
pub fn vector_average(columns: &[Vec<f64>], params: &ConsensusParams) -> Result<(Vec<f64>, usize)> {
    let mut values = Vec::with_capacity(columns.len());
    let mut messages = 0;
    for col in columns {
        let out = finite_time_average(col, params)?;
        values.push(out.value);
        messages += out.messages_total;
    }
    Ok((values, messages))
}

/// Draws `n` values uniformly from `[lo, hi)` (test and demo helper).
pub fn random_values(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}
