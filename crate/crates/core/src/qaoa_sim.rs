//! Dense statevector simulation of depth-`p` QAOA circuits.
//!
//! The state starts in `|+>^n`; layer `k` applies the diagonal phase
//! `exp(-i gamma_k H_C)` and then the mixer `exp(-i beta_k sum_j X_j)`.
//! The model offset never enters a phase and is added once in
//! [`Simulator::expectation`].

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ising::{spin, IsingModel, MAX_EXACT_VARIABLES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleVector {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl AngleVector {
    pub fn new(gamma: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if gamma.len() != beta.len() || gamma.is_empty() {
            return Err(Error::Parameter(format!(
                "angle vector needs equal nonzero gamma/beta lengths, got {}/{}",
                gamma.len(),
                beta.len()
            )));
        }
        if gamma.iter().chain(&beta).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("non-finite angle".into()));
        }
        Ok(AngleVector { gamma, beta })
    }

    pub fn zeros(p: usize) -> Self {
        AngleVector {
            gamma: vec![0.0; p],
            beta: vec![0.0; p],
        }
    }

    pub fn depth(&self) -> usize {
        self.gamma.len()
    }

    /// `[gamma_1..gamma_p, beta_1..beta_p]`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.gamma.iter().chain(&self.beta).copied().collect()
    }

    pub fn from_flat(v: &[f64]) -> Result<Self> {
        if !v.len().is_multiple_of(2) {
            return Err(Error::Dimension(format!(
                "flat angle vector has odd length {}",
                v.len()
            )));
        }
        let p = v.len() / 2;
        AngleVector::new(v[..p].to_vec(), v[p..].to_vec())
    }
}

#[derive(Clone, Debug)]
pub struct QaoaState {
    n: usize,
    amplitudes: Vec<Complex64>,
}

impl QaoaState {
    pub fn from_amplitudes(n: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != 1usize << n {
            return Err(Error::Dimension(format!(
                "{} amplitudes for {n} qubits",
                amplitudes.len()
            )));
        }
        Ok(QaoaState { n, amplitudes })
    }

    pub fn uniform(n: usize) -> Self {
        let dim = 1usize << n;
        let a = Complex64::new((dim as f64).sqrt().recip(), 0.0);
        QaoaState {
            n,
            amplitudes: vec![a; dim],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }
}

/// Diagonal of `H_C - offset` over all basis states.
///
/// When the diagonal takes few distinct values (unweighted MaxCut has at
/// most `|E| + 1`), each state stores a level index and phase layers need
/// one `sin/cos` per level instead of one per amplitude.
#[derive(Clone, Debug)]
struct CostDiagonal {
    values: Vec<f64>,
    levels: Option<(Vec<f64>, Vec<u32>)>,
}

const MAX_LEVELS: usize = 4096;

impl CostDiagonal {
    fn new(model: &IsingModel) -> Self {
        let n = model.n();
        let dim = 1usize << n;
        let adj = model.adjacency();
        let h = model.h();
        let mut values = vec![0.0; dim];
        let mut spins = vec![1.0_f64; n];
        let mut e: f64 = h.iter().sum::<f64>() + model.couplings().values().sum::<f64>();
        values[0] = e;
        let mut x = 0usize;
        for t in 1..dim {
            let k = t.trailing_zeros() as usize;
            let mut field = h[k];
            for &(j, v) in &adj[k] {
                field += v * spins[j];
            }
            e -= 2.0 * spins[k] * field;
            spins[k] = -spins[k];
            x ^= 1 << k;
            values[x] = e;
        }
        let levels = Self::levels(&values);
        CostDiagonal { values, levels }
    }

    fn levels(values: &[f64]) -> Option<(Vec<f64>, Vec<u32>)> {
        let mut distinct: Vec<f64> = Vec::new();
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        for v in sorted {
            if distinct.last() != Some(&v) {
                distinct.push(v);
                if distinct.len() > MAX_LEVELS || distinct.len() * 8 > values.len().max(8) {
                    return None;
                }
            }
        }
        let index = values
            .iter()
            .map(|v| distinct.binary_search_by(|d| d.total_cmp(v)).unwrap() as u32)
            .collect();
        Some((distinct, index))
    }

    fn apply_phase(&self, amps: &mut [Complex64], gamma: f64) {
        match &self.levels {
            Some((vals, index)) => {
                let phases: Vec<Complex64> = vals
                    .iter()
                    .map(|&v| Complex64::from_polar(1.0, -gamma * v))
                    .collect();
                for (a, &l) in amps.iter_mut().zip(index) {
                    *a *= phases[l as usize];
                }
            }
            None => {
                for (a, &v) in amps.iter_mut().zip(&self.values) {
                    *a *= Complex64::from_polar(1.0, -gamma * v);
                }
            }
        }
    }
}

/// `exp(-i beta X)` on every qubit, in place.
fn apply_mixer(amps: &mut [Complex64], n: usize, beta: f64) {
    let (s, c) = beta.sin_cos();
    let dim = amps.len();
    for q in 0..n {
        let stride = 1usize << q;
        for base in (0..dim).step_by(2 * stride) {
            let (lo, hi) = amps[base..base + 2 * stride].split_at_mut(stride);
            for (a0, a1) in lo.iter_mut().zip(hi.iter_mut()) {
                let x0 = *a0;
                let x1 = *a1;
                // (c, -i s; -i s, c)
                *a0 = Complex64::new(c * x0.re + s * x1.im, c * x0.im - s * x1.re);
                *a1 = Complex64::new(c * x1.re + s * x0.im, c * x1.im - s * x0.re);
            }
        }
    }
}

/// A simulator bound to one model; the cost diagonal is computed once.
#[derive(Clone, Debug)]
pub struct Simulator {
    n: usize,
    offset: f64,
    diag: CostDiagonal,
}

impl Simulator {
    pub fn new(model: &IsingModel) -> Result<Self> {
        if model.n() > MAX_EXACT_VARIABLES {
            return Err(Error::Resource {
                what: "statevector simulation",
                n: model.n(),
                cap: MAX_EXACT_VARIABLES,
            });
        }
        Ok(Simulator {
            n: model.n(),
            offset: model.offset(),
            diag: CostDiagonal::new(model),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Ising energy (offset included) of every basis state.
    pub fn energies(&self) -> Vec<f64> {
        self.diag.values.iter().map(|v| v + self.offset).collect()
    }

    pub fn evolve(&self, angles: &AngleVector) -> QaoaState {
        let mut state = QaoaState::uniform(self.n);
        for (&g, &b) in angles.gamma.iter().zip(&angles.beta) {
            self.diag.apply_phase(&mut state.amplitudes, g);
            apply_mixer(&mut state.amplitudes, self.n, b);
        }
        state
    }

    pub fn expectation(&self, state: &QaoaState) -> Result<f64> {
        if state.n != self.n {
            return Err(Error::Dimension(format!(
                "state on {} qubits, model on {}",
                state.n, self.n
            )));
        }
        let e: f64 = state
            .amplitudes
            .iter()
            .zip(&self.diag.values)
            .map(|(a, v)| a.norm_sqr() * v)
            .sum();
        Ok(e + self.offset)
    }

    /// `<gamma, beta| H_C |gamma, beta>`; one circuit call.
    pub fn energy_at(&self, angles: &AngleVector) -> f64 {
        let state = self.evolve(angles);
        self.expectation(&state)
            .expect("state built by this simulator")
    }
}

pub fn evolve(model: &IsingModel, angles: &AngleVector) -> Result<QaoaState> {
    Ok(Simulator::new(model)?.evolve(angles))
}

pub fn expectation(model: &IsingModel, state: &QaoaState) -> Result<f64> {
    if state.n != model.n() {
        return Err(Error::Dimension(format!(
            "state on {} qubits, model on {}",
            state.n,
            model.n()
        )));
    }
    Simulator::new(model)?.expectation(state)
}

/// `M_ij = <Z_i Z_j>` for each requested pair.
pub fn zz_correlations(
    state: &QaoaState,
    pairs: &[(usize, usize)],
) -> Result<BTreeMap<(usize, usize), f64>> {
    let probs = state.probabilities();
    let mut out = BTreeMap::new();
    for &(i, j) in pairs {
        if i >= j || j >= state.n {
            return Err(Error::Parameter(format!(
                "correlation pair ({i},{j}) needs i < j < {}",
                state.n
            )));
        }
        let m: f64 = probs
            .iter()
            .enumerate()
            .map(|(x, p)| p * spin(x as u64, i) * spin(x as u64, j))
            .sum();
        out.insert((i, j), m.clamp(-1.0, 1.0));
    }
    Ok(out)
}
