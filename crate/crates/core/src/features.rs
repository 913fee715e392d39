//! Fixed-length instance encodings and their standardization.
//!
//! Graph features are built from the spectrum of the weighted Laplacian
//! `L = D - W`, where `D_ii = sum_j |w_ij|`. For unweighted graphs this is
//! the ordinary Laplacian. With signed weights (QUBOs reduced to MaxCut) the
//! absolute-degree form stays diagonally dominant, hence positive
//! semidefinite.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{Edge, ProblemInstance, ProblemKind};
use crate::ising::qubo_to_maxcut;

/// Eigenvalues are floored here before any logarithm.
pub const EIGEN_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EncodingSource {
    AngleValues,
    InstanceFeatures,
    ExternalEmbedding,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Encoding {
    pub instance_id: String,
    pub source: EncodingSource,
    pub vector: Vec<f64>,
    #[serde(default)]
    pub feature_names: Vec<String>,
}

impl Encoding {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// Checks that a collection is nonempty, homogeneous and finite.
pub fn validate_collection(encodings: &[Encoding]) -> Result<(EncodingSource, usize)> {
    let first = encodings
        .first()
        .ok_or_else(|| Error::Parameter("empty encoding collection".into()))?;
    for e in encodings {
        if e.source != first.source {
            return Err(Error::Parameter(format!(
                "{}: source {:?} differs from {:?}",
                e.instance_id, e.source, first.source
            )));
        }
        if e.dim() != first.dim() {
            return Err(Error::Dimension(format!(
                "{}: encoding length {} differs from {}",
                e.instance_id,
                e.dim(),
                first.dim()
            )));
        }
        if e.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!(
                "{}: non-finite encoding entry",
                e.instance_id
            )));
        }
    }
    Ok((first.source, first.dim()))
}

/// Two largest Laplacian eigenvalues and the average weighted degree.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrumSummary {
    pub lambda1: f64,
    pub lambda2: f64,
    pub avg_degree: f64,
}

pub fn laplacian(n: usize, edges: &[Edge]) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(n, n);
    for e in edges {
        l[(e.i, e.j)] -= e.w;
        l[(e.j, e.i)] -= e.w;
        l[(e.i, e.i)] += e.w.abs();
        l[(e.j, e.j)] += e.w.abs();
    }
    l
}

/// Eigenvalues in descending order.
pub fn laplacian_spectrum(n: usize, edges: &[Edge]) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(laplacian(n, edges))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

fn spectrum_summary(id: &str, n: usize, edges: &[Edge]) -> Result<SpectrumSummary> {
    let total: f64 = edges.iter().map(|e| e.w.abs()).sum();
    if edges.is_empty() || total == 0.0 {
        return Err(Error::Feature {
            id: id.to_string(),
            reason: "graph has no edges, spectral features are undefined".into(),
        });
    }
    let ev = laplacian_spectrum(n, edges);
    Ok(SpectrumSummary {
        lambda1: ev[0].max(EIGEN_FLOOR),
        lambda2: ev.get(1).copied().unwrap_or(0.0).max(EIGEN_FLOOR),
        avg_degree: 2.0 * total / n as f64,
    })
}

fn spectral_entries(s: &SpectrumSummary) -> [(f64, &'static str); 3] {
    [
        (
            (s.lambda1 / s.avg_degree).ln(),
            "log_lambda1_over_avg_degree",
        ),
        (
            (s.lambda2 / s.avg_degree).ln(),
            "log_lambda2_over_avg_degree",
        ),
        ((s.lambda1 / s.lambda2).ln(), "log_lambda1_over_lambda2"),
    ]
}

fn assemble(id: &str, entries: Vec<(f64, &'static str)>) -> Encoding {
    let (vector, names): (Vec<f64>, Vec<&str>) = entries.into_iter().unzip();
    Encoding {
        instance_id: id.to_string(),
        source: EncodingSource::InstanceFeatures,
        vector,
        feature_names: names.into_iter().map(String::from).collect(),
    }
}

/// `[density, ln n, ln |E|, ln(l1/d), ln(l2/d), ln(l1/l2)]`. With
/// `exclude_counts` the two logarithmic count features are dropped.
pub fn maxcut_features(inst: &ProblemInstance, exclude_counts: bool) -> Result<Encoding> {
    let edges = inst.edges().ok_or(Error::WrongKind {
        expected: ProblemKind::MaxCutGraph,
        found: inst.kind(),
    })?;
    let s = spectrum_summary(&inst.id, inst.n, edges)?;
    let mut entries = vec![(inst.density(), "density")];
    if !exclude_counts {
        entries.push(((inst.n as f64).ln(), "log_nodes"));
        entries.push(((edges.len() as f64).ln(), "log_edges"));
    }
    entries.extend(spectral_entries(&s));
    Ok(assemble(&inst.id, entries))
}

/// QUBO reduced to weighted MaxCut on `n + 1` nodes, then
/// `[ln(n + 1), ln(l1/d), ln(l2/d), ln(l1/l2)]`.
pub fn qubo_features(inst: &ProblemInstance, exclude_counts: bool) -> Result<Encoding> {
    let red = qubo_to_maxcut(inst)?;
    let g = &red.graph;
    let s = spectrum_summary(&inst.id, g.n, g.edges().unwrap_or(&[]))?;
    let mut entries = Vec::with_capacity(4);
    if !exclude_counts {
        entries.push(((g.n as f64).ln(), "log_nodes"));
    }
    entries.extend(spectral_entries(&s));
    Ok(assemble(&inst.id, entries))
}

pub fn instance_features(inst: &ProblemInstance, exclude_counts: bool) -> Result<Encoding> {
    match inst.kind() {
        ProblemKind::MaxCutGraph => maxcut_features(inst, exclude_counts),
        ProblemKind::DenseQubo => qubo_features(inst, exclude_counts),
    }
}

/// Per-dimension z-score fitted on training encodings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Standard deviations at or below this are treated as zero variance.
const MIN_STD: f64 = 1e-12;

impl Scaler {
    pub fn fit(encodings: &[Encoding]) -> Result<Self> {
        let (_, dim) = validate_collection(encodings)?;
        let count = encodings.len() as f64;
        let mut mean = vec![0.0; dim];
        for e in encodings {
            for (m, v) in mean.iter_mut().zip(&e.vector) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; dim];
        for e in encodings {
            for ((s, v), m) in var.iter_mut().zip(&e.vector).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / count).sqrt()).collect();
        Ok(Scaler { mean, std })
    }

    pub fn transform(&self, e: &Encoding) -> Result<Encoding> {
        if e.dim() != self.mean.len() {
            return Err(Error::Dimension(format!(
                "{}: encoding length {} but scaler expects {}",
                e.instance_id,
                e.dim(),
                self.mean.len()
            )));
        }
        let vector = e
            .vector
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| if *s <= MIN_STD { 0.0 } else { (v - m) / s })
            .collect();
        Ok(Encoding {
            vector,
            ..e.clone()
        })
    }
}

/// Fits a scaler on `encodings` and returns them standardized.
pub fn standardize(encodings: &[Encoding]) -> Result<(Vec<Encoding>, Scaler)> {
    let scaler = Scaler::fit(encodings)?;
    let out = encodings
        .iter()
        .map(|e| scaler.transform(e))
        .collect::<Result<_>>()?;
    Ok((out, scaler))
}
