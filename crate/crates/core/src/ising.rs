//! Ising models `offset + sum_i h_i s_i + sum_{i<j} J_ij s_i s_j` over
//! `s in {-1, 1}^n`, conversions from both instance families, and the
//! exhaustive exact solver.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{Edge, InstanceMeta, ProblemInstance, ProblemKind};

/// Largest variable count handled by exhaustive enumeration and the dense
/// statevector simulator.
pub const MAX_EXACT_VARIABLES: usize = 24;

/// Spin of variable `i` under basis index `x`: bit 0 is `+1`, bit 1 is `-1`.
#[inline]
pub fn spin(x: u64, i: usize) -> f64 {
    if (x >> i) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawIsing", into = "RawIsing")]
pub struct IsingModel {
    n: usize,
    h: Vec<f64>,
    couplings: BTreeMap<(usize, usize), f64>,
    offset: f64,
}

#[derive(Serialize, Deserialize)]
struct RawIsing {
    n: usize,
    h: Vec<f64>,
    couplings: Vec<(usize, usize, f64)>,
    offset: f64,
}

impl TryFrom<RawIsing> for IsingModel {
    type Error = Error;

    fn try_from(raw: RawIsing) -> Result<Self> {
        if raw.h.len() != raw.n {
            return Err(Error::Dimension(format!(
                "h has length {} but n = {}",
                raw.h.len(),
                raw.n
            )));
        }
        let mut m = IsingModel::new(raw.n);
        m.h = raw.h;
        m.offset = raw.offset;
        for (i, j, v) in raw.couplings {
            if i == j || i.max(j) >= raw.n {
                return Err(Error::Parameter(format!("invalid coupling ({i},{j})")));
            }
            m.add_coupling(i, j, v);
        }
        Ok(m)
    }
}

impl From<IsingModel> for RawIsing {
    fn from(m: IsingModel) -> Self {
        RawIsing {
            n: m.n,
            h: m.h,
            couplings: m
                .couplings
                .into_iter()
                .map(|((i, j), v)| (i, j, v))
                .collect(),
            offset: m.offset,
        }
    }
}

impl IsingModel {
    pub fn new(n: usize) -> Self {
        IsingModel {
            n,
            h: vec![0.0; n],
            couplings: BTreeMap::new(),
            offset: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn couplings(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.couplings
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        let key = if i < j { (i, j) } else { (j, i) };
        self.couplings.get(&key).copied().unwrap_or(0.0)
    }

    pub fn add_bias(&mut self, i: usize, v: f64) {
        self.h[i] += v;
    }

    pub fn add_offset(&mut self, v: f64) {
        self.offset += v;
    }

    /// Adds `v` to `J_ij`; a coupling that sums to exactly zero is removed.
    pub fn add_coupling(&mut self, i: usize, j: usize, v: f64) {
        assert!(i != j, "self-coupling ({i},{i})");
        let key = if i < j { (i, j) } else { (j, i) };
        let entry = self.couplings.entry(key).or_insert(0.0);
        *entry += v;
        if *entry == 0.0 {
            self.couplings.remove(&key);
        }
    }

    pub fn has_fields(&self) -> bool {
        self.h.iter().any(|&v| v != 0.0)
    }

    /// Energy for explicit spins (`+1`/`-1`).
    pub fn energy(&self, s: &[i8]) -> f64 {
        let mut e = self.offset;
        for (i, &hi) in self.h.iter().enumerate() {
            e += hi * f64::from(s[i]);
        }
        for (&(i, j), &v) in &self.couplings {
            e += v * f64::from(s[i]) * f64::from(s[j]);
        }
        e
    }

    /// Energy of basis index `x` (bit `i` set means `s_i = -1`).
    pub fn energy_of_index(&self, x: u64) -> f64 {
        let mut e = self.offset;
        for (i, &hi) in self.h.iter().enumerate() {
            e += hi * spin(x, i);
        }
        for (&(i, j), &v) in &self.couplings {
            e += v * spin(x, i) * spin(x, j);
        }
        e
    }

    /// Neighbour lists `(other, J)` for every variable.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n];
        for (&(i, j), &v) in &self.couplings {
            adj[i].push((j, v));
            adj[j].push((i, v));
        }
        adj
    }

    /// Period of the QAOA objective in each `gamma_k`, when one is known.
    ///
    /// If every `2 h_i` and `2 J_ij` is an integer, single-spin flips change
    /// the energy by integers, so all energy differences are integral and
    /// `gamma -> gamma + 2 pi` only multiplies the state by a global phase.
    pub fn gamma_period(&self) -> Option<f64> {
        let integral = |v: f64| (2.0 * v).fract() == 0.0;
        (self.h.iter().copied().all(integral) && self.couplings.values().copied().all(integral))
            .then_some(2.0 * std::f64::consts::PI)
    }
}

/// `h = 0`, `J_ij = w_ij / 2`, `offset = -sum w / 2`, so `energy(s) = -cut(s)`.
pub fn maxcut_to_ising(inst: &ProblemInstance) -> Result<IsingModel> {
    let edges = inst.edges().ok_or(Error::WrongKind {
        expected: ProblemKind::MaxCutGraph,
        found: inst.kind(),
    })?;
    let mut m = IsingModel::new(inst.n);
    for e in edges {
        m.add_coupling(e.i, e.j, e.w / 2.0);
        m.offset -= e.w / 2.0;
    }
    Ok(m)
}

/// Substitutes `x_i = (1 - s_i) / 2` so the energy equals the QUBO value.
pub fn qubo_to_ising(inst: &ProblemInstance) -> Result<IsingModel> {
    let q = inst.qubo_matrix().ok_or(Error::WrongKind {
        expected: ProblemKind::DenseQubo,
        found: inst.kind(),
    })?;
    let n = q.n();
    let mut m = IsingModel::new(n);
    for i in 0..n {
        let qii = q.get(i, i);
        m.offset += qii / 2.0;
        m.h[i] -= qii / 2.0;
        for j in (i + 1)..n {
            let qij = q.get(i, j);
            if qij == 0.0 {
                continue;
            }
            m.offset += qij / 4.0;
            m.h[i] -= qij / 4.0;
            m.h[j] -= qij / 4.0;
            m.add_coupling(i, j, qij / 4.0);
        }
    }
    Ok(m)
}

/// Converts either instance family to its minimization Ising model.
pub fn to_ising(inst: &ProblemInstance) -> Result<IsingModel> {
    match inst.kind() {
        ProblemKind::MaxCutGraph => maxcut_to_ising(inst),
        ProblemKind::DenseQubo => qubo_to_ising(inst),
    }
}

/// The native objective direction of an instance family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NativeObjective {
    MaximizeCut,
    MinimizeQubo,
}

impl NativeObjective {
    pub fn of(kind: ProblemKind) -> Self {
        match kind {
            ProblemKind::MaxCutGraph => NativeObjective::MaximizeCut,
            ProblemKind::DenseQubo => NativeObjective::MinimizeQubo,
        }
    }

    /// Ising energy to native value (cut value or QUBO value).
    pub fn from_energy(self, energy: f64) -> f64 {
        match self {
            NativeObjective::MaximizeCut => -energy,
            NativeObjective::MinimizeQubo => energy,
        }
    }
}

/// A QUBO rewritten as weighted MaxCut on `n + 1` nodes.
///
/// The QUBO's Ising form has its fields `h_i s_i` turned into couplings
/// `h_i s_i s_a` with an ancilla spin `s_a` (node `n`). Fixing `s_a = +1`
/// recovers the original energy, and a global flip changes nothing, so the
/// extended model is a pure coupling model `sum W_ab s_a s_b`. Since
/// `cut(s) = (W - sum W_ab s_a s_b) / 2` with `W = sum W_ab`, the QUBO
/// value of the decoded assignment is `shift - 2 * cut` with
/// `shift = offset + W`.
#[derive(Clone, Debug)]
pub struct MaxCutReduction {
    pub graph: ProblemInstance,
    pub shift: f64,
}

impl MaxCutReduction {
    pub fn qubo_value_from_cut(&self, cut: f64) -> f64 {
        self.shift - 2.0 * cut
    }

    /// Decodes a cut assignment (0/1 per node, ancilla last) into `x`.
    pub fn decode(&self, side: &[u8]) -> Vec<u8> {
        let n = side.len() - 1;
        let anc = side[n];
        side[..n].iter().map(|&b| b ^ anc).collect()
    }
}

pub fn qubo_to_maxcut(inst: &ProblemInstance) -> Result<MaxCutReduction> {
    let ising = qubo_to_ising(inst)?;
    let n = ising.n();
    let mut edges: Vec<Edge> = ising
        .couplings()
        .iter()
        .map(|(&(i, j), &w)| Edge { i, j, w })
        .collect();
    for (i, &hi) in ising.h().iter().enumerate() {
        if hi != 0.0 {
            edges.push(Edge { i, j: n, w: hi });
        }
    }
    let total: f64 = edges.iter().map(|e| e.w).sum();
    let graph = ProblemInstance::graph(
        format!("{}-maxcut", inst.id),
        n + 1,
        edges,
        InstanceMeta {
            edge_probability: None,
            seed: inst.meta.seed,
        },
    )?;
    Ok(MaxCutReduction {
        graph,
        shift: ising.offset() + total,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactSolution {
    /// Optimum in the native convention (max cut value or min QUBO value).
    pub c_opt: f64,
    /// Minimum Ising energy.
    pub min_energy: f64,
    /// One minimizer; entry `i` is 1 when `s_i = -1` (equivalently `x_i = 1`).
    pub argmin_config: Vec<u8>,
}

fn index_to_bits(x: u64, n: usize) -> Vec<u8> {
    (0..n).map(|i| ((x >> i) & 1) as u8).collect()
}

/// Lexicographic order on `(b_0, b_1, ...)`: the first differing variable
/// decides and a 0 wins.
fn lex_less(a: u64, b: u64) -> bool {
    let diff = a ^ b;
    diff != 0 && (a >> diff.trailing_zeros()) & 1 == 0
}

/// Minimum-energy basis index by Gray-code enumeration with incremental
/// energy updates. Near-ties are settled on directly evaluated energies,
/// then toward the lexicographically smallest bit vector.
pub fn ground_state_index(model: &IsingModel) -> Result<u64> {
    let n = model.n();
    if n > MAX_EXACT_VARIABLES {
        return Err(Error::Resource {
            what: "brute-force enumeration",
            n,
            cap: MAX_EXACT_VARIABLES,
        });
    }
    let adj = model.adjacency();
    let scale = 1.0
        + model.offset().abs()
        + model.h().iter().map(|v| v.abs()).sum::<f64>()
        + model.couplings().values().map(|v| v.abs()).sum::<f64>();
    let tol = 1e-12 * scale;

    let mut spins = vec![1.0_f64; n];
    let mut x: u64 = 0;
    let mut e = model.energy_of_index(0);
    let mut best_x = 0_u64;
    let mut best_e = e;
    let mut best_exact = e;

    for t in 1..(1_u64 << n) {
        let k = t.trailing_zeros() as usize;
        let mut field = model.h()[k];
        for &(j, v) in &adj[k] {
            field += v * spins[j];
        }
        e -= 2.0 * spins[k] * field;
        spins[k] = -spins[k];
        x ^= 1 << k;
        if e < best_e - tol {
            best_x = x;
            best_e = e;
            best_exact = model.energy_of_index(x);
        } else if e <= best_e + tol {
            let exact = model.energy_of_index(x);
            if exact < best_exact || (exact == best_exact && lex_less(x, best_x)) {
                best_x = x;
                best_e = e.min(best_e);
                best_exact = exact;
            }
        }
    }
    Ok(best_x)
}

pub fn brute_force_solve(model: &IsingModel, native: NativeObjective) -> Result<ExactSolution> {
    let x = ground_state_index(model)?;
    let min_energy = model.energy_of_index(x);
    Ok(ExactSolution {
        c_opt: native.from_energy(min_energy),
        min_energy,
        argmin_config: index_to_bits(x, model.n()),
    })
}

/// Exact optimum of an instance in its native convention.
pub fn solve_instance(inst: &ProblemInstance) -> Result<ExactSolution> {
    let model = to_ising(inst)?;
    brute_force_solve(&model, NativeObjective::of(inst.kind()))
}

/// Converts a 0/1 configuration to spins.
pub fn bits_to_spins(bits: &[u8]) -> Vec<i8> {
    bits.iter().map(|&b| if b == 0 { 1 } else { -1 }).collect()
}

pub fn spins_to_bits(spins: &[i8]) -> Vec<u8> {
    spins.iter().map(|&s| u8::from(s < 0)).collect()
}

impl ProblemInstance {
    /// Native value of a spin assignment.
    pub fn native_value_of_spins(&self, spins: &[i8]) -> f64 {
        self.native_value(&spins_to_bits(spins))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{generate_dense_qubo, generate_er_graph, QuboMatrix};
    use proptest::prelude::*;
    use rand::Rng;

    fn meta() -> InstanceMeta {
        InstanceMeta {
            edge_probability: None,
            seed: 0,
        }
    }

    fn graph(n: usize, edges: &[(usize, usize)]) -> ProblemInstance {
        let edges = edges.iter().map(|&(i, j)| Edge { i, j, w: 1.0 }).collect();
        ProblemInstance::graph("g".into(), n, edges, meta()).unwrap()
    }

    fn qubo(rows: Vec<Vec<f64>>) -> ProblemInstance {
        ProblemInstance::qubo("q".into(), QuboMatrix::from_rows(rows).unwrap(), meta()).unwrap()
    }

    /// All 0/1 vectors of length n, in index order.
    fn all_bits(n: usize) -> impl Iterator<Item = Vec<u8>> {
        (0..(1u64 << n)).map(move |x| index_to_bits(x, n))
    }

    #[test]
    fn k2_maxcut() {
        let m = maxcut_to_ising(&graph(2, &[(0, 1)])).unwrap();
        assert_eq!(m.coupling(0, 1), 0.5);
        assert_eq!(m.offset(), -0.5);
        assert_eq!(m.energy(&[1, -1]), -1.0);
        assert_eq!(m.energy(&[1, 1]), 0.0);
        let sol = brute_force_solve(&m, NativeObjective::MaximizeCut).unwrap();
        assert_eq!(sol.c_opt, 1.0);
        assert_eq!(sol.argmin_config, vec![0, 1]);
    }

    #[test]
    fn triangle_maxcut() {
        let m = maxcut_to_ising(&graph(3, &[(0, 1), (0, 2), (1, 2)])).unwrap();
        let sol = brute_force_solve(&m, NativeObjective::MaximizeCut).unwrap();
        assert_eq!(sol.c_opt, 2.0);
        assert_eq!(sol.min_energy, -2.0);
        // lexicographically smallest optimum: node 0 on side 0, node 1 on side 0
        assert_eq!(sol.argmin_config, vec![0, 0, 1]);
    }

    #[test]
    fn er_energy_is_negated_cut_on_every_config() {
        let g = generate_er_graph(10, 0.5, 11).unwrap();
        let m = maxcut_to_ising(&g).unwrap();
        let mut best_cut = f64::MIN;
        for bits in all_bits(10) {
            let cut = g.cut_value(&bits).unwrap();
            assert_eq!(m.energy(&bits_to_spins(&bits)), -cut);
            best_cut = best_cut.max(cut);
        }
        let sol = brute_force_solve(&m, NativeObjective::MaximizeCut).unwrap();
        assert_eq!(sol.c_opt, best_cut);
    }

    #[test]
    fn qubo_single_variable() {
        let m = qubo_to_ising(&qubo(vec![vec![1.0]])).unwrap();
        assert_eq!(m.h(), &[-0.5]);
        assert_eq!(m.offset(), 0.5);
        assert_eq!(m.energy(&[1]), 0.0);
        assert_eq!(m.energy(&[-1]), 1.0);
    }

    #[test]
    fn qubo_pair_expansion() {
        let m = qubo_to_ising(&qubo(vec![vec![0.0, 1.0], vec![0.0]])).unwrap();
        assert_eq!(m.coupling(0, 1), 0.25);
        assert_eq!(m.h(), &[-0.25, -0.25]);
        assert_eq!(m.offset(), 0.25);
    }

    #[test]
    fn qubo_min_matches_dual_enumeration() {
        let inst = generate_dense_qubo(10, 5).unwrap();
        let q = inst.qubo_matrix().unwrap();
        let m = qubo_to_ising(&inst).unwrap();
        let min_x = all_bits(10)
            .map(|x| q.value(&x))
            .fold(f64::INFINITY, f64::min);
        let min_s = all_bits(10)
            .map(|x| m.energy(&bits_to_spins(&x)))
            .fold(f64::INFINITY, f64::min);
        assert!((min_x - min_s).abs() < 1e-12);
        let sol = brute_force_solve(&m, NativeObjective::MinimizeQubo).unwrap();
        assert!((sol.c_opt - min_x).abs() < 1e-12);
        assert_eq!(sol.c_opt, q.value(&sol.argmin_config));
    }

    #[test]
    fn qubo_to_maxcut_single_variable() {
        let inst = qubo(vec![vec![1.0]]);
        let red = qubo_to_maxcut(&inst).unwrap();
        assert_eq!(red.graph.n, 2);
        let g = &red.graph;
        let (best_side, best_cut) = all_bits(2)
            .map(|s| {
                let c = g.cut_value(&s).unwrap();
                (s, c)
            })
            .fold(
                (vec![], f64::MIN),
                |acc, (s, c)| if c > acc.1 { (s, c) } else { acc },
            );
        assert_eq!(red.decode(&best_side), vec![0]);
        assert_eq!(red.qubo_value_from_cut(best_cut), 0.0);
    }

    fn check_reduction(inst: &ProblemInstance) {
        let q = inst.qubo_matrix().unwrap();
        let n = q.n();
        let red = qubo_to_maxcut(inst).unwrap();
        let qubo_opt = all_bits(n)
            .map(|x| q.value(&x))
            .fold(f64::INFINITY, f64::min);
        let mut best_cut = f64::MIN;
        let mut best_side = vec![];
        for side in all_bits(n + 1) {
            let cut = red.graph.cut_value(&side).unwrap();
            // every cut decodes to an assignment with the stated value
            let x = red.decode(&side);
            assert!((red.qubo_value_from_cut(cut) - q.value(&x)).abs() < 1e-12);
            if cut > best_cut {
                best_cut = cut;
                best_side = side;
            }
        }
        assert!((red.qubo_value_from_cut(best_cut) - qubo_opt).abs() < 1e-12);
        assert!((q.value(&red.decode(&best_side)) - qubo_opt).abs() < 1e-12);
    }

    #[test]
    fn qubo_to_maxcut_small_and_ten() {
        for seed in 0..10 {
            check_reduction(&generate_dense_qubo(2, seed).unwrap());
        }
        check_reduction(&generate_dense_qubo(10, 42).unwrap());
    }

    #[test]
    fn qubo_to_maxcut_rejects_graph() {
        assert!(matches!(
            qubo_to_maxcut(&graph(2, &[(0, 1)])),
            Err(Error::WrongKind { .. })
        ));
        assert!(maxcut_to_ising(&qubo(vec![vec![1.0]])).is_err());
    }

    #[test]
    fn eighteen_node_er_flip_symmetry() {
        let g = generate_er_graph(18, 0.6, 3).unwrap();
        let m = maxcut_to_ising(&g).unwrap();
        let sol = brute_force_solve(&m, NativeObjective::MaximizeCut).unwrap();
        let flipped: Vec<u8> = sol.argmin_config.iter().map(|b| 1 - b).collect();
        let s = bits_to_spins(&flipped);
        assert_eq!(-m.energy(&s), sol.c_opt);
        assert_eq!(g.cut_value(&sol.argmin_config).unwrap(), sol.c_opt);
        // lexicographic tie-break between the two flip-equivalent optima
        assert_eq!(sol.argmin_config[0], 0);
    }

    #[test]
    fn cap_is_enforced() {
        let m = IsingModel::new(MAX_EXACT_VARIABLES + 1);
        assert!(matches!(
            brute_force_solve(&m, NativeObjective::MinimizeQubo),
            Err(Error::Resource { .. })
        ));
    }

    #[test]
    fn degenerate_model_prefers_lexicographic_smallest() {
        let m = IsingModel::new(4);
        let sol = brute_force_solve(&m, NativeObjective::MinimizeQubo).unwrap();
        assert_eq!(sol.argmin_config, vec![0, 0, 0, 0]);
        let mut m = IsingModel::new(3);
        m.add_bias(0, 1.0); // prefers s_0 = -1
        let sol = brute_force_solve(&m, NativeObjective::MinimizeQubo).unwrap();
        assert_eq!(sol.argmin_config, vec![1, 0, 0]);
    }

    #[test]
    fn zero_sum_couplings_are_dropped() {
        let mut m = IsingModel::new(3);
        m.add_coupling(0, 2, 0.5);
        m.add_coupling(2, 0, -0.5);
        assert!(m.couplings().is_empty());
    }

    #[test]
    fn gamma_period_detection() {
        let g = generate_er_graph(8, 0.5, 1).unwrap();
        assert!(maxcut_to_ising(&g).unwrap().gamma_period().is_some());
        let q = generate_dense_qubo(5, 1).unwrap();
        assert!(qubo_to_ising(&q).unwrap().gamma_period().is_none());
    }

    fn random_model(seed: u64, n: usize, with_fields: bool) -> IsingModel {
        let mut rng = crate::rng::rng_from_seed(seed);
        let mut m = IsingModel::new(n);
        for i in 0..n {
            if with_fields {
                m.add_bias(i, rng.random_range(-1.0..1.0));
            }
            for j in (i + 1)..n {
                if rng.random::<f64>() < 0.6 {
                    m.add_coupling(i, j, rng.random_range(-1.0..1.0));
                }
            }
        }
        m.add_offset(rng.random_range(-2.0..2.0));
        m
    }

    proptest! {
        #[test]
        fn global_flip_symmetry_without_fields(seed in any::<u64>(), n in 1usize..10, x in any::<u64>()) {
            let m = random_model(seed, n, false);
            let mask = (1u64 << n) - 1;
            let x = x & mask;
            prop_assert_eq!(m.energy_of_index(x), m.energy_of_index(!x & mask));
        }

        #[test]
        fn conversions_agree_with_native(seed in any::<u64>(), n in 2usize..12) {
            let g = generate_er_graph(n, 0.5, seed).unwrap();
            let q = generate_dense_qubo(n, seed).unwrap();
            let mg = maxcut_to_ising(&g).unwrap();
            let mq = qubo_to_ising(&q).unwrap();
            let mut rng = crate::rng::rng_from_seed(seed ^ 0xabc);
            for _ in 0..100 {
                let bits: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
                let s = bits_to_spins(&bits);
                prop_assert!((mg.energy(&s) + g.cut_value(&bits).unwrap()).abs() <= 1e-12);
                prop_assert!((mq.energy(&s) - q.qubo_matrix().unwrap().value(&bits)).abs() <= 1e-12);
            }
        }

        #[test]
        fn reduction_preserves_optimum(seed in any::<u64>(), n in 2usize..8) {
            check_reduction(&generate_dense_qubo(n, seed).unwrap());
        }

        #[test]
        fn brute_force_matches_naive_scan(seed in any::<u64>(), n in 1usize..11) {
            let m = random_model(seed, n, true);
            let naive = (0..(1u64 << n)).map(|x| m.energy_of_index(x)).fold(f64::INFINITY, f64::min);
            let sol = brute_force_solve(&m, NativeObjective::MinimizeQubo).unwrap();
            prop_assert_eq!(sol.min_energy, naive);
            prop_assert_eq!(sol.min_energy, m.energy(&bits_to_spins(&sol.argmin_config)));
        }
    }
}
