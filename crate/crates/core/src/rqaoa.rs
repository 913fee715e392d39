//! Recursive QAOA with a fixed per-iteration circuit budget.

use std::collections::BTreeMap;

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angle_opt::random_angles;
use crate::error::{Error, Result};
use crate::evalharness::approximation_ratio;
use crate::instances::{ProblemInstance, ProblemKind};
use crate::ising::{
    ground_state_index, spin, to_ising, ExactSolution, IsingModel, NativeObjective,
};
use crate::optim::{minimize, BfgsConfig};
use crate::qaoa_sim::{zz_correlations, AngleVector, QaoaState, Simulator};
use crate::recommend::{evaluate_angles, RecommendationSet};
use crate::rng::{derive_seed, rng_from_seed, stable_hash, SeededRng};

/// Correlations closer than this are treated as ties.
pub const CORRELATION_TIE_TOL: f64 = 1e-12;

/// An Ising model over a subset of the original variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedModel {
    /// Model on `active.len()` compact variables.
    pub model: IsingModel,
    /// Original index of each compact variable, ascending.
    pub active: Vec<usize>,
}

impl ReducedModel {
    pub fn full(model: IsingModel) -> Self {
        let active = (0..model.n()).collect();
        ReducedModel { model, active }
    }

    fn position(&self, original: usize) -> Result<usize> {
        self.active
            .binary_search(&original)
            .map_err(|_| Error::Contract(format!("variable {original} is not active")))
    }
}

/// Substitutes `s_j = sign * s_i` (original indices) and removes `j`.
pub fn eliminate(m: &ReducedModel, i: usize, j: usize, sign: i8) -> Result<ReducedModel> {
    if i == j {
        return Err(Error::Contract(format!("cannot eliminate ({i},{i})")));
    }
    if sign != 1 && sign != -1 {
        return Err(Error::Contract(format!("sign {sign} is not +-1")));
    }
    let pi = m.position(i)?;
    let pj = m.position(j)?;
    let sigma = f64::from(sign);
    let compact = |p: usize| if p > pj { p - 1 } else { p };
    let target = compact(pi);
    let old = &m.model;
    let mut out = IsingModel::new(old.n() - 1);
    out.add_offset(old.offset());
    for (p, &hp) in old.h().iter().enumerate() {
        if p == pj {
            out.add_bias(target, sigma * hp);
        } else {
            out.add_bias(compact(p), hp);
        }
    }
    for (&(a, b), &v) in old.couplings() {
        let (a, va) = if a == pj { (pi, sigma) } else { (a, 1.0) };
        let (b, vb) = if b == pj { (pi, sigma) } else { (b, 1.0) };
        if a == b {
            // s_i s_i = 1
            out.add_offset(v * va * vb);
        } else {
            out.add_coupling(compact(a), compact(b), v * va * vb);
        }
    }
    let mut active = m.active.clone();
    active.remove(pj);
    Ok(ReducedModel { model: out, active })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Elimination {
    pub kept: usize,
    pub removed: usize,
    pub sign: i8,
    pub correlation: f64,
    pub iteration: usize,
}

/// How each iteration obtains its QAOA state.
#[derive(Clone, Debug)]
pub enum AngleStrategy<'a> {
    /// Best of a frozen recommendation set.
    Recommended(&'a RecommendationSet),
    /// Best of `budget` fresh uniform angle vectors.
    RandomAngles { depth: usize, budget: usize },
    /// BFGS from a uniform start, capped at `budget` objective calls.
    BudgetedBfgs { depth: usize, budget: usize },
}

impl AngleStrategy<'_> {
    pub fn depth(&self) -> usize {
        match self {
            AngleStrategy::Recommended(r) => r.depth,
            AngleStrategy::RandomAngles { depth, .. }
            | AngleStrategy::BudgetedBfgs { depth, .. } => *depth,
        }
    }

    pub fn label(&self) -> String {
        match self {
            AngleStrategy::Recommended(r) => r.provenance.method.clone(),
            AngleStrategy::RandomAngles { .. } => "random".into(),
            AngleStrategy::BudgetedBfgs { .. } => "bfgs".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RqaoaTrace {
    pub instance_id: String,
    pub method: String,
    pub depth: usize,
    pub eliminations: Vec<Elimination>,
    pub final_model: ReducedModel,
    /// Spins of the residual variables, in `final_model.active` order.
    pub final_assignment: Vec<i8>,
    pub reconstructed: Vec<i8>,
    /// Native objective of `reconstructed` (cut value or QUBO value).
    pub objective: f64,
    /// Ising energy of `reconstructed` under the original model.
    pub energy: f64,
    pub circuit_calls: usize,
    #[serde(default)]
    pub gradient_calls: usize,
}

fn best_state(
    sim: &Simulator,
    strategy: &AngleStrategy,
    rng: &mut SeededRng,
) -> (QaoaState, usize, usize) {
    match strategy {
        AngleStrategy::Recommended(recs) => {
            let (_, values, state) = evaluate_angles(sim, &recs.angles);
            (state, values.len(), 0)
        }
        AngleStrategy::RandomAngles { depth, budget } => {
            let angles: Vec<AngleVector> =
                (0..*budget).map(|_| random_angles(rng, *depth)).collect();
            let (_, values, state) = evaluate_angles(sim, &angles);
            (state, values.len(), 0)
        }
        AngleStrategy::BudgetedBfgs { depth, budget } => {
            let p = *depth;
            let x0 = random_angles(rng, p).to_flat();
            let cfg = BfgsConfig {
                max_objective_calls: Some(*budget),
                ..BfgsConfig::default()
            };
            let f = |x: &[f64]| {
                sim.energy_at(&AngleVector {
                    gamma: x[..p].to_vec(),
                    beta: x[p..].to_vec(),
                })
            };
            match minimize(f, &x0, &cfg) {
                Ok(out) => {
                    let a = AngleVector::from_flat(&out.x).expect("2p finite angles");
                    (sim.evolve(&a), out.objective_calls, out.gradient_calls)
                }
                Err(e) => {
                    let a = AngleVector::from_flat(&x0).expect("2p finite angles");
                    (sim.evolve(&a), e.objective_calls, 0)
                }
            }
        }
    }
}

/// Strongest `|M_ij|` over coupled pairs; near-ties keep the
/// lexicographically smallest pair.
fn select_pair(m: &ReducedModel, state: &QaoaState) -> Result<Option<((usize, usize), f64)>> {
    let pairs: Vec<(usize, usize)> = m.model.couplings().keys().copied().collect();
    let corr = zz_correlations(state, &pairs)?;
    let mut best: Option<((usize, usize), f64)> = None;
    for (&pair, &v) in &corr {
        if best.is_none_or(|(_, b)| v.abs() > b.abs() + CORRELATION_TIE_TOL) {
            best = Some((pair, v));
        }
    }
    Ok(best)
}

/// Runs RQAOA on one instance. The default iteration budget is `ceil(n/2)`;
/// iteration stops early once no couplings remain.
pub fn run_rqaoa(
    inst: &ProblemInstance,
    strategy: &AngleStrategy,
    n_iterations: Option<usize>,
    seed: u64,
) -> Result<RqaoaTrace> {
    let original = to_ising(inst)?;
    let n = original.n();
    let budget = n_iterations
        .unwrap_or(n.div_ceil(2))
        .min(n.saturating_sub(1));
    let mut rng = rng_from_seed(derive_seed(seed, &[stable_hash(&inst.id)]));
    let mut current = ReducedModel::full(original.clone());
    let mut eliminations = Vec::new();
    let mut circuit_calls = 0;
    let mut gradient_calls = 0;
    for iteration in 0..budget {
        if current.model.couplings().is_empty() {
            debug!(
                "{}: no couplings left after {iteration} iterations",
                inst.id
            );
            break;
        }
        let sim = Simulator::new(&current.model)?;
        let (state, calls, grads) = best_state(&sim, strategy, &mut rng);
        circuit_calls += calls;
        gradient_calls += grads;
        let ((a, b), corr) = select_pair(&current, &state)?.expect("couplings present");
        let sign: i8 = if corr >= 0.0 { 1 } else { -1 };
        let (kept, removed) = (current.active[a], current.active[b]);
        current = eliminate(&current, kept, removed, sign)?;
        eliminations.push(Elimination {
            kept,
            removed,
            sign,
            correlation: corr,
            iteration,
        });
    }
    let residual = ground_state_index(&current.model)?;
    let final_assignment: Vec<i8> = (0..current.model.n())
        .map(|p| spin(residual, p) as i8)
        .collect();
    let mut reconstructed = vec![0i8; n];
    for (&orig, &s) in current.active.iter().zip(&final_assignment) {
        reconstructed[orig] = s;
    }
    for e in eliminations.iter().rev() {
        reconstructed[e.removed] = e.sign * reconstructed[e.kept];
    }
    let energy = original.energy(&reconstructed);
    let reduced_energy = current.model.energy(&final_assignment);
    let scale =
        1.0 + original.offset().abs() + original.couplings().values().map(|v| v.abs()).sum::<f64>();
    if (energy - reduced_energy).abs() > 1e-9 * scale {
        return Err(Error::Contract(format!(
            "{}: reduced energy {reduced_energy} differs from reconstructed {energy}",
            inst.id
        )));
    }
    Ok(RqaoaTrace {
        instance_id: inst.id.clone(),
        method: strategy.label(),
        depth: strategy.depth(),
        objective: NativeObjective::of(inst.kind()).from_energy(energy),
        energy,
        final_model: current,
        final_assignment,
        reconstructed,
        eliminations,
        circuit_calls,
        gradient_calls,
    })
}

/// One run per instance, in input order.
pub fn run_rqaoa_batch(
    instances: &[ProblemInstance],
    strategy: &AngleStrategy,
    n_iterations: Option<usize>,
    seed: u64,
) -> Result<Vec<RqaoaTrace>> {
    instances
        .par_iter()
        .map(|inst| run_rqaoa(inst, strategy, n_iterations, seed))
        .collect()
}

/// Approximation ratio of a MaxCut trace against the exact optimum.
pub fn trace_ratio(trace: &RqaoaTrace, exact: &ExactSolution, kind: ProblemKind) -> Result<f64> {
    match kind {
        ProblemKind::MaxCutGraph => approximation_ratio(-trace.objective, exact.c_opt),
        ProblemKind::DenseQubo => Err(Error::Domain(
            "approximation ratios are defined for MaxCut traces only".into(),
        )),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PooledInstance {
    pub instance_id: String,
    pub best_ratio: f64,
    /// Every method reaching `best_ratio`.
    pub best_methods: Vec<String>,
    pub per_method: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PooledReport {
    pub instances: Vec<PooledInstance>,
    /// Instances on which each method attains the pooled best.
    pub attribution: BTreeMap<String, usize>,
    pub median_best_ratio: Option<f64>,
    pub min_best_ratio: Option<f64>,
    /// Instances whose pooled best is the exact optimum.
    pub optimum_hits: usize,
}

/// Combines independent per-method runs into per-instance best ratios.
pub fn pool_traces(ratios: &BTreeMap<String, BTreeMap<String, f64>>) -> PooledReport {
    let mut by_instance: BTreeMap<&str, BTreeMap<String, f64>> = BTreeMap::new();
    for (method, per) in ratios {
        for (id, &r) in per {
            by_instance.entry(id).or_default().insert(method.clone(), r);
        }
    }
    let mut attribution: BTreeMap<String, usize> = ratios.keys().map(|m| (m.clone(), 0)).collect();
    let mut instances = Vec::new();
    for (id, per) in by_instance {
        let best = per.values().copied().fold(f64::NEG_INFINITY, f64::max);
        let best_methods: Vec<String> = per
            .iter()
            .filter(|(_, &r)| (r - best).abs() <= 1e-9)
            .map(|(m, _)| m.clone())
            .collect();
        for m in &best_methods {
            *attribution.entry(m.clone()).or_default() += 1;
        }
        instances.push(PooledInstance {
            instance_id: id.to_string(),
            best_ratio: best,
            best_methods,
            per_method: per,
        });
    }
    let best: Vec<f64> = instances.iter().map(|i| i.best_ratio).collect();
    PooledReport {
        optimum_hits: best.iter().filter(|&&r| (r - 1.0).abs() <= 1e-9).count(),
        median_best_ratio: crate::evalharness::median(&best),
        min_best_ratio: best.iter().copied().reduce(f64::min),
        attribution,
        instances,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{generate_er_graph, Edge, InstanceMeta};
    use crate::ising::{maxcut_to_ising, solve_instance, MAX_EXACT_VARIABLES};
    use crate::recommend::Provenance;

    fn graph(n: usize, pairs: &[(usize, usize)]) -> ProblemInstance {
        let edges = pairs.iter().map(|&(i, j)| Edge { i, j, w: 1.0 }).collect();
        ProblemInstance::graph(
            format!("g{n}-{}", pairs.len()),
            n,
            edges,
            InstanceMeta {
                edge_probability: None,
                seed: 0,
            },
        )
        .unwrap()
    }

    fn min_energy_restricted(m: &IsingModel, i: usize, j: usize, sign: i8) -> f64 {
        (0..1u64 << m.n())
            .filter(|&x| spin(x, j) == f64::from(sign) * spin(x, i))
            .map(|x| m.energy_of_index(x))
            .fold(f64::INFINITY, f64::min)
    }

    fn min_energy(m: &IsingModel) -> f64 {
        (0..1u64 << m.n())
            .map(|x| m.energy_of_index(x))
            .fold(f64::INFINITY, f64::min)
    }

    fn recs(angles: Vec<AngleVector>) -> RecommendationSet {
        let k = angles.len();
        RecommendationSet::new(
            angles[0].depth(),
            angles,
            Provenance {
                method: "fixed".into(),
                source: None,
                rule: None,
                k,
                seed: 0,
                cluster_model: None,
            },
        )
        .unwrap()
    }

    #[test]
    fn k2_anti_aligned_elimination() {
        let m = ReducedModel::full(maxcut_to_ising(&graph(2, &[(0, 1)])).unwrap());
        let r = eliminate(&m, 0, 1, -1).unwrap();
        assert_eq!(r.model.n(), 1);
        assert!(r.model.couplings().is_empty());
        assert_eq!(r.model.offset(), -1.0);
        assert_eq!(r.active, vec![0]);
        assert!(matches!(eliminate(&r, 0, 1, 1), Err(Error::Contract(_))));
    }

    #[test]
    fn triangle_matches_restricted_enumeration() {
        let m = maxcut_to_ising(&graph(3, &[(0, 1), (0, 2), (1, 2)])).unwrap();
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            for sign in [-1i8, 1] {
                let r = eliminate(&ReducedModel::full(m.clone()), i, j, sign).unwrap();
                assert_eq!(r.model.n(), 2);
                assert!(
                    (min_energy(&r.model) - min_energy_restricted(&m, i, j, sign)).abs() < 1e-12
                );
            }
        }
    }

    #[test]
    fn path_merge_matches_expansion() {
        // h and J on a 3-path, eliminate the end pair (1, 2)
        let mut m = IsingModel::new(3);
        m.add_bias(0, 0.3);
        m.add_bias(1, -0.2);
        m.add_bias(2, 0.7);
        m.add_coupling(0, 1, 1.5);
        m.add_coupling(1, 2, -0.4);
        m.add_offset(0.25);
        for sign in [-1i8, 1] {
            let r = eliminate(&ReducedModel::full(m.clone()), 1, 2, sign).unwrap();
            let s = f64::from(sign);
            assert!((r.model.h()[1] - (-0.2 + s * 0.7)).abs() < 1e-15);
            assert!((r.model.offset() - (0.25 - 0.4 * s)).abs() < 1e-15);
            assert_eq!(r.model.coupling(0, 1), 1.5);
            for x in 0..8u64 {
                let (s0, s1, s2) = (spin(x, 0), spin(x, 1), spin(x, 2));
                if s2 != s * s1 {
                    continue;
                }
                let reduced = [s0 as i8, s1 as i8];
                assert!((m.energy_of_index(x) - r.model.energy(&reduced)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn merged_couplings_cancel_to_sparse_form() {
        let mut m = IsingModel::new(3);
        m.add_coupling(0, 1, 1.0);
        m.add_coupling(0, 2, 1.0);
        let r = eliminate(&ReducedModel::full(m), 1, 2, -1).unwrap();
        assert!(r.model.couplings().is_empty());
    }

    #[test]
    fn k2_reaches_the_optimum() {
        let g = graph(2, &[(0, 1)]);
        for depth in 1..=3 {
            let model = to_ising(&g).unwrap();
            let best = crate::angle_opt::optimize_angles(&model, depth, 5, 0).unwrap();
            let set = recs(vec![best.angles]);
            let t = run_rqaoa(&g, &AngleStrategy::Recommended(&set), None, 0).unwrap();
            assert_eq!(t.eliminations.len(), 1);
            assert_eq!(t.objective, 1.0);
            assert_eq!(t.circuit_calls, 1);
            let exact = solve_instance(&g).unwrap();
            assert_eq!(trace_ratio(&t, &exact, g.kind()).unwrap(), 1.0);
        }
        for seed in 0..5 {
            let t = run_rqaoa(
                &g,
                &AngleStrategy::RandomAngles {
                    depth: 1,
                    budget: 1,
                },
                None,
                seed,
            )
            .unwrap();
            let e = &t.eliminations[0];
            assert_eq!(e.sign, if e.correlation >= 0.0 { 1 } else { -1 });
            assert_eq!(t.objective, if e.correlation < 0.0 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn traces_are_consistent_and_budgeted() {
        let set = recs(vec![
            AngleVector::new(vec![0.6], vec![0.4]).unwrap(),
            AngleVector::new(vec![0.3], vec![0.2]).unwrap(),
            AngleVector::new(vec![1.0], vec![1.2]).unwrap(),
        ]);
        for seed in 0..6 {
            let g = generate_er_graph(8 + seed as usize % 3, 0.6, seed).unwrap();
            let model = to_ising(&g).unwrap();
            let t = run_rqaoa(&g, &AngleStrategy::Recommended(&set), None, seed).unwrap();
            assert!(t.eliminations.len() <= g.n.div_ceil(2));
            assert_eq!(t.circuit_calls, 3 * t.eliminations.len());
            for e in &t.eliminations {
                assert_eq!(t.reconstructed[e.removed], e.sign * t.reconstructed[e.kept]);
                assert!(e.kept < e.removed);
            }
            assert!((model.energy(&t.reconstructed) - t.energy).abs() < 1e-9);
            assert_eq!(g.native_value_of_spins(&t.reconstructed), t.objective);
            assert!(t.energy >= min_energy(&model) - 1e-9);
            assert!(g.n <= MAX_EXACT_VARIABLES);
            for strategy in [
                AngleStrategy::RandomAngles {
                    depth: 1,
                    budget: 3,
                },
                AngleStrategy::BudgetedBfgs {
                    depth: 1,
                    budget: 3,
                },
            ] {
                let b = run_rqaoa(&g, &strategy, None, seed).unwrap();
                assert!((model.energy(&b.reconstructed) - b.energy).abs() < 1e-9);
                assert!(b.circuit_calls <= 3 * b.eliminations.len());
            }
        }
    }

    #[test]
    fn pooling_attributes_ties_to_every_method() {
        let mut ratios = BTreeMap::new();
        ratios.insert(
            "a".to_string(),
            BTreeMap::from([("x".to_string(), 0.9), ("y".to_string(), 1.0)]),
        );
        ratios.insert(
            "b".to_string(),
            BTreeMap::from([("x".to_string(), 0.95), ("y".to_string(), 1.0)]),
        );
        let rep = pool_traces(&ratios);
        assert_eq!(rep.attribution["a"], 1);
        assert_eq!(rep.attribution["b"], 2);
        assert_eq!(rep.optimum_hits, 1);
        assert_eq!(rep.min_best_ratio, Some(0.95));
        assert_eq!(rep.median_best_ratio, Some(0.975));
    }
}
