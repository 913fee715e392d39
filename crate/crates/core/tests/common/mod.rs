#![allow(dead_code)]

use qaoa_angles::ising::IsingModel;
use qaoa_angles::rqaoa::{eliminate, Elimination, ReducedModel};

/// Energy from the raw coefficients, spins `+1` for bit 0.
pub fn energy(m: &IsingModel, s: &[f64]) -> f64 {
    let mut e = m.offset();
    for (i, h) in m.h().iter().enumerate() {
        e += h * s[i];
    }
    for (&(i, j), &v) in m.couplings() {
        e += v * s[i] * s[j];
    }
    e
}

pub fn spins(x: u64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| if (x >> i) & 1 == 0 { 1.0 } else { -1.0 })
        .collect()
}

/// Largest absolute mismatch between the reduced model and the original
/// restricted to `s_j = sign * s_i`, over every reduced configuration.
pub fn elimination_table_error(
    full: &IsingModel,
    r: &ReducedModel,
    i: usize,
    j: usize,
    sign: i8,
) -> f64 {
    let n = full.n();
    let mut worst: f64 = 0.0;
    for x in 0..1u64 << r.model.n() {
        let compact = spins(x, r.model.n());
        let mut s = vec![0.0; n];
        for (&orig, &v) in r.active.iter().zip(&compact) {
            s[orig] = v;
        }
        s[j] = f64::from(sign) * s[i];
        worst = worst.max((energy(full, &s) - energy(&r.model, &compact)).abs());
    }
    worst
}

/// Minimum original energy over configurations obeying every constraint.
pub fn constrained_min(full: &IsingModel, elims: &[Elimination]) -> f64 {
    (0..1u64 << full.n())
        .map(|x| spins(x, full.n()))
        .filter(|s| {
            elims
                .iter()
                .all(|e| s[e.removed] == f64::from(e.sign) * s[e.kept])
        })
        .map(|s| energy(full, &s))
        .fold(f64::INFINITY, f64::min)
}

/// Replays a trace's eliminations from the full model.
pub fn replay(full: &IsingModel, elims: &[Elimination]) -> ReducedModel {
    elims.iter().fold(ReducedModel::full(full.clone()), |m, e| {
        eliminate(&m, e.kept, e.removed, e.sign).unwrap()
    })
}

/// Minimum energy of a model by plain enumeration.
pub fn min_energy(m: &IsingModel) -> f64 {
    (0..1u64 << m.n())
        .map(|x| energy(m, &spins(x, m.n())))
        .fold(f64::INFINITY, f64::min)
}
