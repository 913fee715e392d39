use proptest::prelude::*;
use qaoa_angles::features::{laplacian_spectrum, maxcut_features, qubo_features, EIGEN_FLOOR};
use qaoa_angles::instances::{generate_dense_qubo, generate_er_graph, Edge, ProblemInstance};
use qaoa_angles::ising::qubo_to_maxcut;

/// Cyclic Jacobi rotations on a dense symmetric matrix.
fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (akp, akq) = (row[p], row[q]);
                    row[p] = c * akp - s * akq;
                    row[q] = s * akp + c * akq;
                }
                let (rp, rq) = (a[p].clone(), a[q].clone());
                for (k, (apk, aqk)) in rp.into_iter().zip(rq).enumerate() {
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

fn dense_laplacian(n: usize, edges: &[Edge]) -> Vec<Vec<f64>> {
    let mut l = vec![vec![0.0; n]; n];
    for e in edges {
        l[e.i][e.j] -= e.w;
        l[e.j][e.i] -= e.w;
        l[e.i][e.i] += e.w.abs();
        l[e.j][e.j] += e.w.abs();
    }
    l
}

#[test]
fn er_spectrum_matches_jacobi() {
    for seed in 0..10 {
        let g = generate_er_graph(12, 0.6, seed).unwrap();
        let edges = g.edges().unwrap();
        let ours = laplacian_spectrum(12, edges);
        let oracle = jacobi_eigenvalues(dense_laplacian(12, edges));
        for (a, b) in ours.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-8, "seed {seed}: {a} vs {b}");
        }
        assert!(ours.iter().all(|&v| v >= -1e-9));

        let f = maxcut_features(&g, false).unwrap();
        let d = 2.0 * edges.len() as f64 / 12.0;
        let (l1, l2) = (oracle[0].max(EIGEN_FLOOR), oracle[1].max(EIGEN_FLOOR));
        let expect = [
            edges.len() as f64 / 66.0,
            12f64.ln(),
            (edges.len() as f64).ln(),
            (l1 / d).ln(),
            (l2 / d).ln(),
            (l1 / l2).ln(),
        ];
        for (a, b) in f.vector.iter().zip(&expect) {
            assert!((a - b).abs() <= 1e-8);
        }
    }
}

#[test]
fn qubo_features_match_jacobi() {
    for seed in 0..5 {
        let q = generate_dense_qubo(10, seed).unwrap();
        let red = qubo_to_maxcut(&q).unwrap();
        let edges = red.graph.edges().unwrap();
        let oracle = jacobi_eigenvalues(dense_laplacian(11, edges));
        let d = 2.0 * edges.iter().map(|e| e.w.abs()).sum::<f64>() / 11.0;
        let f = qubo_features(&q, false).unwrap();
        assert!((f.vector[0] - 11f64.ln()).abs() < 1e-12);
        assert!((f.vector[1] - (oracle[0] / d).ln()).abs() <= 1e-8);
        assert!((f.vector[2] - (oracle[1] / d).ln()).abs() <= 1e-8);
        assert!(oracle[0] >= oracle[1]);
    }
}

fn relabel(g: &ProblemInstance, perm: &[usize]) -> ProblemInstance {
    let edges = g
        .edges()
        .unwrap()
        .iter()
        .map(|e| {
            let (a, b) = (perm[e.i], perm[e.j]);
            Edge {
                i: a.min(b),
                j: a.max(b),
                w: e.w,
            }
        })
        .collect();
    ProblemInstance::graph(format!("{}-perm", g.id), g.n, edges, g.meta.clone()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn features_are_permutation_invariant(
        seed in 0u64..10_000,
        n in 4usize..14,
        perm_seed in any::<u64>(),
    ) {
        let g = generate_er_graph(n, 0.6, seed).unwrap();
        prop_assume!(g.num_edges() > 0);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut state = perm_seed;
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (state >> 33) as usize % (i + 1));
        }
        let a = maxcut_features(&g, false).unwrap();
        let b = maxcut_features(&relabel(&g, &perm), false).unwrap();
        for (x, y) in a.vector.iter().zip(&b.vector) {
            prop_assert!((x - y).abs() <= 1e-9, "{x} vs {y}");
        }
    }
}
