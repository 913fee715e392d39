//! Benchmark instance families: unweighted Erdős–Rényi MaxCut graphs and
//! dense QUBOs with coefficients uniform on `[-1, 1]`.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProblemKind {
    MaxCutGraph,
    DenseQubo,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "(usize, usize, f64)", into = "(usize, usize, f64)")]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

impl From<(usize, usize, f64)> for Edge {
    fn from((i, j, w): (usize, usize, f64)) -> Self {
        Edge { i, j, w }
    }
}

impl From<Edge> for (usize, usize, f64) {
    fn from(e: Edge) -> Self {
        (e.i, e.j, e.w)
    }
}

/// Upper-triangular QUBO matrix, row-major, `Q_ij` stored for `i <= j`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuboMatrix {
    n: usize,
    coeffs: Vec<f64>,
}

impl QuboMatrix {
    pub fn zeros(n: usize) -> Self {
        QuboMatrix {
            n,
            coeffs: vec![0.0; n * (n + 1) / 2],
        }
    }

    /// Build from rows where row `i` holds `Q_ii, Q_i(i+1), ..., Q_i(n-1)`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut coeffs = Vec::with_capacity(n * (n + 1) / 2);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n - i {
                return Err(Error::Parameter(format!(
                    "qubo row {i} has {} entries, expected {}",
                    row.len(),
                    n - i
                )));
            }
            coeffs.extend(row);
        }
        Ok(QuboMatrix { n, coeffs })
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (i..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= j && j < self.n);
        i * self.n - i * (i + 1) / 2 + j
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.coeffs[self.offset(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let k = self.offset(i, j);
        self.coeffs[k] = v;
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// `sum_{i <= j} x_i Q_ij x_j` for a 0/1 assignment.
    pub fn value(&self, x: &[u8]) -> f64 {
        let mut total = 0.0;
        for i in 0..self.n {
            if x[i] == 0 {
                continue;
            }
            for (j, &xj) in x.iter().enumerate().take(self.n).skip(i) {
                if xj != 0 {
                    total += self.get(i, j);
                }
            }
        }
        total
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Graph(Vec<Edge>),
    Qubo(QuboMatrix),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub edge_probability: Option<f64>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance", into = "RawInstance")]
pub struct ProblemInstance {
    pub id: String,
    pub n: usize,
    payload: Payload,
    pub meta: InstanceMeta,
}

/// On-disk shape: exactly one of `edges` / `qubo` is non-null.
#[derive(Serialize, Deserialize)]
struct RawInstance {
    id: String,
    kind: ProblemKind,
    n: usize,
    edges: Option<Vec<Edge>>,
    qubo: Option<Vec<Vec<f64>>>,
    meta: InstanceMeta,
}

impl TryFrom<RawInstance> for ProblemInstance {
    type Error = Error;

    fn try_from(raw: RawInstance) -> Result<Self> {
        match (raw.kind, raw.edges, raw.qubo) {
            (ProblemKind::MaxCutGraph, Some(edges), None) => {
                ProblemInstance::graph(raw.id, raw.n, edges, raw.meta)
            }
            (ProblemKind::DenseQubo, None, Some(rows)) => {
                let q = QuboMatrix::from_rows(rows)?;
                if q.n() != raw.n {
                    return Err(Error::Parameter(format!(
                        "{}: qubo has {} rows but n = {}",
                        raw.id,
                        q.n(),
                        raw.n
                    )));
                }
                ProblemInstance::qubo(raw.id, q, raw.meta)
            }
            (kind, _, _) => Err(Error::Parameter(format!(
                "{}: kind {kind:?} requires exactly the matching one of edges/qubo",
                raw.id
            ))),
        }
    }
}

impl From<ProblemInstance> for RawInstance {
    fn from(inst: ProblemInstance) -> Self {
        let kind = inst.kind();
        let (edges, qubo) = match inst.payload {
            Payload::Graph(e) => (Some(e), None),
            Payload::Qubo(q) => (None, Some(q.rows())),
        };
        RawInstance {
            id: inst.id,
            kind,
            n: inst.n,
            edges,
            qubo,
            meta: inst.meta,
        }
    }
}

impl ProblemInstance {
    /// Validated MaxCut graph. Edges are normalized to `i < j` and sorted.
    pub fn graph(id: String, n: usize, edges: Vec<Edge>, meta: InstanceMeta) -> Result<Self> {
        if n == 0 {
            return Err(Error::Parameter(format!("{id}: n must be positive")));
        }
        let mut seen = BTreeSet::new();
        let mut norm = Vec::with_capacity(edges.len());
        for e in edges {
            let (i, j) = if e.i < e.j { (e.i, e.j) } else { (e.j, e.i) };
            if i == j {
                return Err(Error::Parameter(format!("{id}: self-loop on node {i}")));
            }
            if j >= n {
                return Err(Error::Parameter(format!(
                    "{id}: edge ({i},{j}) references a node outside [0, {n})"
                )));
            }
            if !e.w.is_finite() {
                return Err(Error::Parameter(format!("{id}: non-finite edge weight")));
            }
            if !seen.insert((i, j)) {
                return Err(Error::Parameter(format!("{id}: duplicate edge ({i},{j})")));
            }
            norm.push(Edge { i, j, w: e.w });
        }
        norm.sort_by_key(|e| (e.i, e.j));
        Ok(ProblemInstance {
            id,
            n,
            payload: Payload::Graph(norm),
            meta,
        })
    }

    pub fn qubo(id: String, q: QuboMatrix, meta: InstanceMeta) -> Result<Self> {
        if q.n() == 0 {
            return Err(Error::Parameter(format!("{id}: n must be positive")));
        }
        if let Some(bad) = q.coefficients().iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::Parameter(format!(
                "{id}: qubo coefficient {bad} outside [-1, 1]"
            )));
        }
        Ok(ProblemInstance {
            id,
            n: q.n(),
            payload: Payload::Qubo(q),
            meta,
        })
    }

    pub fn kind(&self) -> ProblemKind {
        match self.payload {
            Payload::Graph(_) => ProblemKind::MaxCutGraph,
            Payload::Qubo(_) => ProblemKind::DenseQubo,
        }
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn edges(&self) -> Option<&[Edge]> {
        match &self.payload {
            Payload::Graph(e) => Some(e),
            Payload::Qubo(_) => None,
        }
    }

    pub fn qubo_matrix(&self) -> Option<&QuboMatrix> {
        match &self.payload {
            Payload::Qubo(q) => Some(q),
            Payload::Graph(_) => None,
        }
    }

    pub fn num_edges(&self) -> usize {
        self.edges().map_or(0, <[Edge]>::len)
    }

    /// `|E| / (n(n-1)/2)`; zero for graphs with fewer than two nodes.
    pub fn density(&self) -> f64 {
        let pairs = self.n * self.n.saturating_sub(1) / 2;
        if pairs == 0 {
            0.0
        } else {
            self.num_edges() as f64 / pairs as f64
        }
    }

    /// True when every edge has unit weight.
    pub fn is_unweighted(&self) -> bool {
        self.edges().is_some_and(|es| es.iter().all(|e| e.w == 1.0))
    }

    /// Weight of edges crossing the partition; `side[i]` is 0 or 1.
    pub fn cut_value(&self, side: &[u8]) -> Option<f64> {
        self.edges().map(|es| {
            es.iter()
                .filter(|e| side[e.i] != side[e.j])
                .map(|e| e.w)
                .sum()
        })
    }

    /// The instance's own objective at a 0/1 assignment: the cut value
    /// (to be maximized) or the QUBO value (to be minimized).
    pub fn native_value(&self, bits: &[u8]) -> f64 {
        match &self.payload {
            Payload::Graph(_) => self.cut_value(bits).unwrap_or(0.0),
            Payload::Qubo(q) => q.value(bits),
        }
    }
}

fn instance_id(kind: ProblemKind, n: usize, prob: Option<f64>, seed: u64, index: usize) -> String {
    let tag = match kind {
        ProblemKind::MaxCutGraph => "maxcut",
        ProblemKind::DenseQubo => "qubo",
    };
    let p = prob.map_or_else(|| "na".to_string(), |p| p.to_string());
    format!("{tag}-n{n}-p{p}-s{seed}-k{index}")
}

fn check_er_params(n: usize, edge_prob: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::Parameter(format!("graph needs n >= 2, got {n}")));
    }
    if !(edge_prob > 0.0 && edge_prob < 1.0) {
        return Err(Error::Parameter(format!(
            "edge probability must lie in (0, 1), got {edge_prob}"
        )));
    }
    Ok(())
}

fn sample_er(id: String, n: usize, edge_prob: f64, seed: u64) -> Result<ProblemInstance> {
    check_er_params(n, edge_prob)?;
    let mut rng = rng_from_seed(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < edge_prob {
                edges.push(Edge { i, j, w: 1.0 });
            }
        }
    }
    let meta = InstanceMeta {
        edge_probability: Some(edge_prob),
        seed,
    };
    ProblemInstance::graph(id, n, edges, meta)
}

fn sample_qubo(id: String, n: usize, seed: u64) -> Result<ProblemInstance> {
    if n < 2 {
        return Err(Error::Parameter(format!("qubo needs n >= 2, got {n}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut q = QuboMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            q.set(i, j, rng.random_range(-1.0..=1.0));
        }
    }
    ProblemInstance::qubo(
        id,
        q,
        InstanceMeta {
            edge_probability: None,
            seed,
        },
    )
}

/// Unweighted G(n, p) graph. Isolated vertices are kept.
pub fn generate_er_graph(n: usize, edge_prob: f64, seed: u64) -> Result<ProblemInstance> {
    let id = instance_id(ProblemKind::MaxCutGraph, n, Some(edge_prob), seed, 0);
    sample_er(id, n, edge_prob, seed)
}

pub fn generate_dense_qubo(n: usize, seed: u64) -> Result<ProblemInstance> {
    let id = instance_id(ProblemKind::DenseQubo, n, None, seed, 0);
    sample_qubo(id, n, seed)
}

const ER_STREAM: u64 = 1;
const QUBO_STREAM: u64 = 2;

/// `per_pair` graphs for every `(node count, edge probability)` pair.
pub fn generate_er_dataset(
    node_counts: &[usize],
    probs: &[f64],
    per_pair: usize,
    seed: u64,
) -> Result<Vec<ProblemInstance>> {
    let mut out = Vec::with_capacity(node_counts.len() * probs.len() * per_pair);
    for &n in node_counts {
        for &p in probs {
            for k in 0..per_pair {
                let child = derive_seed(seed, &[ER_STREAM, n as u64, p.to_bits(), k as u64]);
                let id = instance_id(ProblemKind::MaxCutGraph, n, Some(p), seed, k);
                out.push(sample_er(id, n, p, child)?);
            }
        }
    }
    Ok(out)
}

pub fn generate_qubo_dataset(
    node_counts: &[usize],
    per_size: usize,
    seed: u64,
) -> Result<Vec<ProblemInstance>> {
    let mut out = Vec::with_capacity(node_counts.len() * per_size);
    for &n in node_counts {
        for k in 0..per_size {
            let child = derive_seed(seed, &[QUBO_STREAM, n as u64, k as u64]);
            let id = instance_id(ProblemKind::DenseQubo, n, None, seed, k);
            out.push(sample_qubo(id, n, child)?);
        }
    }
    Ok(out)
}

pub const DATASET_NODE_COUNTS: [usize; 5] = [10, 12, 14, 16, 18];
pub const DATASET_EDGE_PROBS: [f64; 4] = [0.5, 0.6, 0.7, 0.8];

/// 200 ER graphs (10 per node count and probability) followed by 100 dense
/// QUBOs (20 per node count).
pub fn generate_paper_datasets(seed: u64) -> Result<Vec<ProblemInstance>> {
    let mut all = generate_er_dataset(&DATASET_NODE_COUNTS, &DATASET_EDGE_PROBS, 10, seed)?;
    all.extend(generate_qubo_dataset(&DATASET_NODE_COUNTS, 20, seed)?);
    Ok(all)
}
