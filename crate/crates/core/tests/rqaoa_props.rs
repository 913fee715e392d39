mod common;

use proptest::prelude::*;
use qaoa_angles::instances::{generate_dense_qubo, generate_er_graph};
use qaoa_angles::ising::{spins_to_bits, to_ising, IsingModel};
use qaoa_angles::rng::rng_from_seed;
use qaoa_angles::rqaoa::{eliminate, run_rqaoa, AngleStrategy, ReducedModel};
use rand::Rng;

fn random_model(seed: u64, n: usize) -> IsingModel {
    let mut rng = rng_from_seed(seed);
    let mut m = IsingModel::new(n);
    for i in 0..n {
        if rng.random_bool(0.5) {
            m.add_bias(i, rng.random_range(-1.0..1.0));
        }
        for j in i + 1..n {
            if rng.random_bool(0.6) {
                m.add_coupling(i, j, rng.random_range(-1.0..1.0));
            }
        }
    }
    m.add_offset(rng.random_range(-1.0..1.0));
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn elimination_matches_restricted_enumeration(
        seed in any::<u64>(),
        n in 2usize..9,
        a in any::<prop::sample::Index>(),
        b in any::<prop::sample::Index>(),
        positive in any::<bool>(),
    ) {
        let m = random_model(seed, n);
        let (i, j) = (a.index(n), b.index(n));
        prop_assume!(i != j);
        let sign = if positive { 1 } else { -1 };
        let r = eliminate(&ReducedModel::full(m.clone()), i, j, sign).unwrap();
        prop_assert_eq!(r.model.n(), n - 1);
        prop_assert!(!r.active.contains(&j));
        prop_assert!(common::elimination_table_error(&m, &r, i, j, sign) <= 1e-12);
    }

    #[test]
    fn rqaoa_traces_agree_with_enumeration(
        seed in 0u64..10_000,
        n in 3usize..=12,
        qubo in any::<bool>(),
        depth in 1usize..=2,
    ) {
        let inst = if qubo {
            generate_dense_qubo(n, seed).unwrap()
        } else {
            generate_er_graph(n, 0.6, seed).unwrap()
        };
        let full = to_ising(&inst).unwrap();
        let strategy = AngleStrategy::RandomAngles { depth, budget: 2 };
        let t = run_rqaoa(&inst, &strategy, None, seed).unwrap();
        prop_assert!(t.eliminations.len() <= n.div_ceil(2));
        prop_assert_eq!(t.circuit_calls, 2 * t.eliminations.len());

        // objective matches a direct evaluation of the reconstructed bits
        let direct = inst.native_value(&spins_to_bits(&t.reconstructed));
        prop_assert!((t.objective - direct).abs() <= 1e-9);

        // the residual solve is optimal over the constrained subspace
        let replayed = common::replay(&full, &t.eliminations);
        prop_assert_eq!(&replayed.active, &t.final_model.active);
        let constrained = common::constrained_min(&full, &t.eliminations);
        prop_assert!((t.energy - constrained).abs() <= 1e-9);
        prop_assert!(t.energy >= common::min_energy(&full) - 1e-9);
    }
}
