//! The optimal-angle database: multi-restart BFGS over the `2p` QAOA angles.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use log::{info, warn};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::ProblemInstance;
use crate::ising::{to_ising, ExactSolution, IsingModel, NativeObjective, MAX_EXACT_VARIABLES};
use crate::optim::{minimize, BfgsConfig};
use crate::qaoa_sim::{AngleVector, Simulator};
use crate::rng::{derive_seed, rng_from_seed, stable_hash};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleRecord {
    pub instance_id: String,
    pub p: usize,
    pub angles: AngleVector,
    /// Best QAOA expectation, Ising convention (minimized).
    pub expectation: f64,
    /// Exact optimum in the instance's native convention.
    pub c_opt: f64,
    /// Exact minimum Ising energy.
    pub min_energy: f64,
    pub n_restarts: usize,
    /// Objective calls summed over all restarts.
    pub n_circuit_calls: usize,
    /// Finite-difference stencil calls summed over all restarts.
    pub n_gradient_calls: usize,
    /// Objective calls of the winning restart.
    pub best_restart_calls: usize,
    pub best_restart_gradient_calls: usize,
    #[serde(default)]
    pub n_failed_restarts: usize,
}

impl AngleRecord {
    pub fn native_expectation(&self, native: NativeObjective) -> f64 {
        native.from_energy(self.expectation)
    }
}

/// Result of [`optimize_angles`] before it is attached to an instance.
#[derive(Clone, Debug)]
pub struct OptimizedAngles {
    pub angles: AngleVector,
    pub expectation: f64,
    pub n_restarts: usize,
    pub n_failed_restarts: usize,
    pub n_circuit_calls: usize,
    pub n_gradient_calls: usize,
    pub best_restart_calls: usize,
    pub best_restart_gradient_calls: usize,
}

/// Exact symmetries of the QAOA expectation of one model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngleSymmetry {
    pub gamma_period: Option<f64>,
    /// `pi` in general (`exp(-i pi X) = -I`); `pi / 2` without fields,
    /// where the extra `X` on every qubit commutes through the circuit.
    pub beta_period: f64,
}

impl AngleSymmetry {
    pub fn of(model: &IsingModel) -> Self {
        AngleSymmetry {
            gamma_period: model.gamma_period(),
            beta_period: if model.has_fields() { PI } else { PI / 2.0 },
        }
    }
}

fn wrap(v: f64, period: f64) -> f64 {
    let r = v.rem_euclid(period);
    if r >= period {
        0.0
    } else {
        r
    }
}

/// Maps angles to a canonical representative without changing the
/// expectation: `beta` into `[0, beta_period)`, `gamma` into
/// `[0, gamma_period)` when known, and the reflection
/// `(gamma, beta) -> (-gamma, -beta)` chosen so that `gamma_1` lies in
/// `[0, gamma_period / 2]` (or is nonnegative without a period).
pub fn canonicalize(angles: &AngleVector, sym: AngleSymmetry) -> AngleVector {
    let fold = |a: &AngleVector, sign: f64| AngleVector {
        gamma: a
            .gamma
            .iter()
            .map(|&g| sym.gamma_period.map_or(sign * g, |per| wrap(sign * g, per)))
            .collect(),
        beta: a
            .beta
            .iter()
            .map(|&b| wrap(sign * b, sym.beta_period))
            .collect(),
    };
    let direct = fold(angles, 1.0);
    let g1 = direct.gamma.first().copied().unwrap_or(0.0);
    let reflect = match sym.gamma_period {
        Some(per) => g1 > per / 2.0,
        None => g1 < 0.0,
    };
    if reflect {
        fold(angles, -1.0)
    } else {
        direct
    }
}

/// Uniform angles on `[0, 2 pi)^{2p}`.
pub fn random_angles<R: Rng>(rng: &mut R, p: usize) -> AngleVector {
    let mut draw = || rng.random_range(0.0..2.0 * PI);
    let gamma = (0..p).map(|_| draw()).collect();
    let beta = (0..p).map(|_| draw()).collect();
    AngleVector { gamma, beta }
}

struct RestartOutcome {
    flat: Vec<f64>,
    value: f64,
    calls: usize,
    gradient_calls: usize,
}

fn run_restart(sim: &Simulator, p: usize, seed: u64, cfg: &BfgsConfig) -> Option<RestartOutcome> {
    let mut rng = rng_from_seed(seed);
    let x0 = random_angles(&mut rng, p).to_flat();
    let objective = |x: &[f64]| {
        let a = AngleVector {
            gamma: x[..p].to_vec(),
            beta: x[p..].to_vec(),
        };
        sim.energy_at(&a)
    };
    match minimize(objective, &x0, cfg) {
        Ok(out) => Some(RestartOutcome {
            flat: out.x,
            value: out.f,
            calls: out.objective_calls,
            gradient_calls: out.gradient_calls,
        }),
        Err(e) => {
            warn!("restart with seed {seed} aborted: {e}");
            None
        }
    }
}

/// Best of `n_restarts` BFGS runs from uniform random starts.
///
/// Restart `r` draws its start from `derive_seed(seed, [r])`, so the
/// restarts of a smaller run are a prefix of a larger one.
pub fn optimize_angles(
    model: &IsingModel,
    p: usize,
    n_restarts: usize,
    seed: u64,
) -> Result<OptimizedAngles> {
    optimize_angles_with(model, p, n_restarts, seed, &BfgsConfig::default())
}

pub fn optimize_angles_with(
    model: &IsingModel,
    p: usize,
    n_restarts: usize,
    seed: u64,
    cfg: &BfgsConfig,
) -> Result<OptimizedAngles> {
    if n_restarts == 0 {
        return Err(Error::Parameter("n_restarts must be at least 1".into()));
    }
    if p == 0 {
        return Err(Error::Parameter("depth must be at least 1".into()));
    }
    let sim = Simulator::new(model)?;
    let outcomes: Vec<Option<RestartOutcome>> = (0..n_restarts)
        .into_par_iter()
        .map(|r| run_restart(&sim, p, derive_seed(seed, &[r as u64]), cfg))
        .collect();

    let n_circuit_calls = outcomes.iter().flatten().map(|o| o.calls).sum();
    let n_gradient_calls = outcomes.iter().flatten().map(|o| o.gradient_calls).sum();
    let n_failed_restarts = outcomes.iter().filter(|o| o.is_none()).count();
    let best = outcomes
        .iter()
        .flatten()
        .fold(None::<&RestartOutcome>, |acc, o| match acc {
            Some(b) if b.value <= o.value => Some(b),
            _ => Some(o),
        })
        .ok_or_else(|| Error::Domain("every restart hit a non-finite objective".into()))?;

    let raw = AngleVector::from_flat(&best.flat)?;
    let angles = canonicalize(&raw, AngleSymmetry::of(model));
    let expectation = sim.energy_at(&angles);
    Ok(OptimizedAngles {
        angles,
        expectation,
        n_restarts,
        n_failed_restarts,
        n_circuit_calls,
        n_gradient_calls,
        best_restart_calls: best.calls,
        best_restart_gradient_calls: best.gradient_calls,
    })
}

/// In-memory angle database keyed by `(instance id, depth)`.
#[derive(Clone, Debug, Default)]
pub struct AngleDatabase {
    records: Vec<AngleRecord>,
    index: HashMap<(String, usize), usize>,
}

impl AngleDatabase {
    pub fn new(records: Vec<AngleRecord>) -> Self {
        let mut db = AngleDatabase::default();
        for r in records {
            db.insert(r);
        }
        db
    }

    /// Inserts or replaces the record for `(instance_id, p)`.
    pub fn insert(&mut self, r: AngleRecord) {
        let key = (r.instance_id.clone(), r.p);
        match self.index.get(&key) {
            Some(&i) => self.records[i] = r,
            None => {
                self.index.insert(key, self.records.len());
                self.records.push(r);
            }
        }
    }

    pub fn get(&self, id: &str, p: usize) -> Option<&AngleRecord> {
        self.index
            .get(&(id.to_string(), p))
            .map(|&i| &self.records[i])
    }

    pub fn records(&self) -> &[AngleRecord] {
        &self.records
    }

    pub fn at_depth(&self, p: usize) -> impl Iterator<Item = &AngleRecord> {
        self.records.iter().filter(move |r| r.p == p)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Clone, Debug, Default)]
pub struct DatabaseBuild {
    /// Newly optimized records, in `(instance, depth)` input order.
    pub records: Vec<AngleRecord>,
    /// Exact solutions computed along the way, keyed by instance id.
    pub new_exact: BTreeMap<String, ExactSolution>,
    pub skipped: usize,
    pub errors: Vec<(String, String)>,
}

/// One record per `(instance, depth)` not already in `existing`.
///
/// The per-record seed depends only on `(seed, instance id, depth)`, so a
/// resumed build produces the same records as an uninterrupted one.
pub fn build_database(
    instances: &[ProblemInstance],
    depths: &[usize],
    n_restarts: usize,
    seed: u64,
    exact: &BTreeMap<String, ExactSolution>,
    existing: &AngleDatabase,
) -> DatabaseBuild {
    build_database_with(
        instances,
        depths,
        n_restarts,
        seed,
        exact,
        existing,
        &BfgsConfig::default(),
    )
}

pub fn build_database_with(
    instances: &[ProblemInstance],
    depths: &[usize],
    n_restarts: usize,
    seed: u64,
    exact: &BTreeMap<String, ExactSolution>,
    existing: &AngleDatabase,
    cfg: &BfgsConfig,
) -> DatabaseBuild {
    let mut build = DatabaseBuild::default();
    for inst in instances {
        let pending: Vec<usize> = depths
            .iter()
            .copied()
            .filter(|&p| existing.get(&inst.id, p).is_none())
            .collect();
        build.skipped += depths.len() - pending.len();
        if pending.is_empty() {
            continue;
        }
        let solution = match exact.get(&inst.id) {
            Some(s) => s.clone(),
            None if inst.n > MAX_EXACT_VARIABLES => {
                build.errors.push((
                    inst.id.clone(),
                    format!(
                        "no exact solution and n = {} exceeds the brute-force cap",
                        inst.n
                    ),
                ));
                continue;
            }
            None => match crate::ising::solve_instance(inst) {
                Ok(s) => {
                    build.new_exact.insert(inst.id.clone(), s.clone());
                    s
                }
                Err(e) => {
                    build.errors.push((inst.id.clone(), e.to_string()));
                    continue;
                }
            },
        };
        let model = match to_ising(inst) {
            Ok(m) => m,
            Err(e) => {
                build.errors.push((inst.id.clone(), e.to_string()));
                continue;
            }
        };
        for p in pending {
            let rec_seed = derive_seed(seed, &[stable_hash(&inst.id), p as u64]);
            match optimize_angles_with(&model, p, n_restarts, rec_seed, cfg) {
                Ok(o) => {
                    info!(
                        "{} p={p}: expectation {:.6} (optimum energy {:.6})",
                        inst.id, o.expectation, solution.min_energy
                    );
                    build.records.push(AngleRecord {
                        instance_id: inst.id.clone(),
                        p,
                        angles: o.angles,
                        expectation: o.expectation,
                        c_opt: solution.c_opt,
                        min_energy: solution.min_energy,
                        n_restarts: o.n_restarts,
                        n_circuit_calls: o.n_circuit_calls,
                        n_gradient_calls: o.n_gradient_calls,
                        best_restart_calls: o.best_restart_calls,
                        best_restart_gradient_calls: o.best_restart_gradient_calls,
                        n_failed_restarts: o.n_failed_restarts,
                    })
                }
                Err(e) => build.errors.push((inst.id.clone(), e.to_string())),
            }
        }
    }
    build
}
