use std::collections::HashSet;
use std::path::Path;

use proptest::prelude::*;

use epine_core::embedding::{self, build_alias_tables, Order, TrainConfig};
use epine_core::evaluation::split::{connectivity_preserving_removal, is_connected};
use epine_core::graph::{read_edge_list, reweight_by_degree, write_edge_list, Graph, LoadOptions};
use epine_core::oracle::{bfs_distances, diameter, shortest_path_sums_from, DEFAULT_PATH_BUDGET};
use epine_core::proximity::{additive_product, compute_stack, vanilla_power, MaskMode, MatmulMode, ProximityConfig};
use epine_core::similarity::{assemble_similarity, truncate_top, DecaySchedule, SimilarityConfig};
use epine_core::sparse::CsrMatrix;

fn graph_strategy(max_nodes: usize) -> impl Strategy<Value = Graph> {
    (2..=max_nodes).prop_flat_map(|n| {
        prop::collection::vec((0..n, 0..n), 0..=3 * n).prop_map(move |pairs| {
            let edges = pairs.into_iter().filter(|(u, v)| u != v).map(|(u, v)| (u, v, 1.0));
            Graph::from_edges(n, false, false, edges).unwrap()
        })
    })
}

fn weighted_graph_strategy(max_nodes: usize) -> impl Strategy<Value = Graph> {
    (2..=max_nodes).prop_flat_map(|n| {
        prop::collection::vec((0..n, 0..n, 0.01f64..10.0), 0..=3 * n).prop_map(move |edges| {
            let edges = edges.into_iter().filter(|(u, v, _)| u != v);
            Graph::from_edges(n, false, true, edges).unwrap()
        })
    })
}

fn sparse_strategy(max: usize) -> impl Strategy<Value = (CsrMatrix, CsrMatrix)> {
    (1..=max, 1..=max, 1..=max, 0.0f64..0.5).prop_flat_map(|(r, m, c, density)| {
        let cell = move || prop::option::weighted(density, 0.01f64..5.0);
        (
            prop::collection::vec(cell(), r * m),
            prop::collection::vec(cell(), m * c),
        )
            .prop_map(move |(x, y)| (dense_to_csr(r, m, &x), dense_to_csr(m, c, &y)))
    })
}

fn dense_to_csr(rows: usize, cols: usize, cells: &[Option<f64>]) -> CsrMatrix {
    let triplets = cells
        .iter()
        .enumerate()
        .filter_map(|(idx, v)| v.map(|v| (idx / cols, idx % cols, v)));
    CsrMatrix::from_triplets(rows, cols, triplets).unwrap()
}

fn both_modes() -> [MatmulMode; 2] {
    [MatmulMode::Multiplicative, MatmulMode::Additive]
}

fn stack(g: &Graph, k: usize, matmul: MatmulMode) -> epine_core::proximity::ProximityStack {
    compute_stack(
        g,
        &ProximityConfig {
            k,
            matmul,
            ..Default::default()
        },
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn edge_list_round_trip(g in prop_oneof![graph_strategy(30), weighted_graph_strategy(30)]) {
        let mut buf = Vec::new();
        write_edge_list(&g, &mut buf).unwrap();
        let opts = LoadOptions::new(false, g.weighted());
        let (back, _) = read_edge_list(buf.as_slice(), Path::new("mem"), &opts).unwrap();
        prop_assert_eq!(back.adjacency(), g.adjacency());
    }

    #[test]
    fn reweighting_keeps_pattern_and_symmetry(g in graph_strategy(40)) {
        let r = reweight_by_degree(&g).unwrap();
        prop_assert!(r.adjacency().same_pattern(g.adjacency()));
        prop_assert!(r.adjacency().is_symmetric());
    }

    #[test]
    fn pattern_matches_bfs(g in graph_strategy(40), k in 2usize..6) {
        let dist = bfs_distances(&g);
        for mode in both_modes() {
            let s = stack(&g, k, mode);
            for (idx, m) in s.matrices.iter().enumerate() {
                let order = idx + 1;
                for i in 0..g.num_nodes() {
                    for j in 0..g.num_nodes() {
                        prop_assert_eq!(m.contains(i, j), dist[i][j] == Some(order), "order {} at ({}, {})", order, i, j);
                    }
                }
            }
        }
    }

    #[test]
    fn unit_values_count_shortest_paths(g in graph_strategy(12), k in 2usize..5) {
        let s = stack(&g, k, MatmulMode::Multiplicative);
        for (idx, m) in s.matrices.iter().enumerate() {
            for i in 0..g.num_nodes() {
                let sums = shortest_path_sums_from(&g, i, idx + 1, MatmulMode::Multiplicative, DEFAULT_PATH_BUDGET).unwrap();
                for (j, expected) in sums.iter().enumerate() {
                    prop_assert_eq!(m.get(i, j), *expected);
                }
            }
        }
    }

    #[test]
    fn weighted_values_match_path_sums(g in weighted_graph_strategy(10), k in 2usize..5) {
        let s = stack(&g, k, MatmulMode::Multiplicative);
        for (idx, m) in s.matrices.iter().enumerate() {
            for i in 0..g.num_nodes() {
                let sums = shortest_path_sums_from(&g, i, idx + 1, MatmulMode::Multiplicative, DEFAULT_PATH_BUDGET).unwrap();
                for (j, expected) in sums.iter().enumerate() {
                    let got = m.get(i, j);
                    prop_assert!((got - expected).abs() <= 1e-10 * expected.abs().max(1e-300), "{} vs {}", got, expected);
                }
            }
        }
    }

    #[test]
    fn orders_are_disjoint_symmetric_and_walk_reachable(g in graph_strategy(40), k in 1usize..7) {
        let diam = diameter(&bfs_distances(&g));
        for mode in both_modes() {
            let s = stack(&g, k, mode);
            prop_assert!(s.reached_order() <= diam.max(1));
            for (a, ma) in s.matrices.iter().enumerate() {
                prop_assert!(!ma.has_diagonal_entries());
                // additive values from order 3 on weight each last hop once per predecessor
                match mode {
                    MatmulMode::Multiplicative => prop_assert!(ma.is_symmetric()),
                    MatmulMode::Additive => prop_assert!(ma.pattern().is_symmetric()),
                }
                prop_assert!(ma.iter().all(|(i, j, _)| vanilla_power(&g, a + 1).contains(i, j)));
                for mb in &s.matrices[a + 1..] {
                    prop_assert!(!ma.pattern_intersects(mb));
                }
            }
        }
    }

    #[test]
    fn additive_product_matches_dense_loop((x, y) in sparse_strategy(50)) {
        let z = additive_product(&x, &y).unwrap();
        let (xd, yd) = (x.to_dense(), y.to_dense());
        for i in 0..x.rows() {
            for j in 0..y.cols() {
                let mut acc = 0.0;
                for t in 0..x.cols() {
                    if xd[i][t] * yd[t][j] != 0.0 {
                        acc += xd[i][t] + yd[t][j];
                    }
                }
                prop_assert_eq!(z.get(i, j), acc);
            }
        }
    }

    #[test]
    fn truncation_only_lowers_the_top(
        cells in (2usize..12).prop_flat_map(|n| prop::collection::vec(prop::option::of(1u32..20), n * n)),
        eta in 0.0f64..0.9,
    ) {
        let n = (cells.len() as f64).sqrt() as usize;
        let cells: Vec<Option<f64>> = cells.iter().map(|c| c.map(f64::from)).collect();
        let m = dense_to_csr(n, n, &cells);
        let (out, report) = truncate_top(&m, eta).unwrap();
        if eta == 0.0 {
            prop_assert_eq!(&out, &m);
        }
        prop_assert!(out.same_pattern(&m));
        prop_assert!(out.values().iter().zip(m.values()).all(|(o, v)| o <= v));
        match report.threshold {
            Some(t) => {
                prop_assert_eq!(out.max_value(), Some(t));
                for (o, v) in out.values().iter().zip(m.values()) {
                    prop_assert_eq!(o != v, *v > t);
                }
            }
            None => prop_assert_eq!(&out, &m),
        }
    }

    #[test]
    fn similarity_keeps_first_order_and_decays_the_rest(g in graph_strategy(30), k in 2usize..5, base in 0.05f64..1.0) {
        let s = stack(&reweight_by_degree(&g).unwrap(), k, MatmulMode::Additive);
        let cfg = SimilarityConfig { schedule: DecaySchedule::Geometric { base }, eta: 0.0, ..Default::default() };
        let sim = assemble_similarity(&s, &cfg).unwrap();
        for (i, j, v) in s.first_order().iter() {
            prop_assert_eq!(sim.matrix.get(i, j), v);
        }
        for (idx, m) in s.matrices.iter().enumerate().skip(1) {
            let max = m.iter().map(|(i, j, _)| sim.matrix.get(i, j)).fold(0.0, f64::max);
            let lambda = base.powi(idx as i32 - 1);
            prop_assert!((max - lambda).abs() <= 1e-12 * lambda, "order {}: {} vs {}", idx + 1, max, lambda);
        }

        let off = SimilarityConfig { schedule: DecaySchedule::Explicit { lambdas: vec![0.0; k] }, eta: 0.0, ..Default::default() };
        prop_assert_eq!(&assemble_similarity(&s, &off).unwrap().matrix, s.first_order());
    }

    #[test]
    fn removal_preserves_connectivity(g in graph_strategy(30), fraction in 0.0f64..0.9, seed in any::<u64>()) {
        let r = connectivity_preserving_removal(&g, fraction, seed).unwrap();
        let again = connectivity_preserving_removal(&g, fraction, seed).unwrap();
        prop_assert_eq!(&r.removed, &again.removed);
        if is_connected(&g) {
            prop_assert!(is_connected(&r.train));
        }
        let remaining: HashSet<(usize, usize)> = r.train.edges().map(|(u, v, _)| (u, v)).collect();
        let removed: HashSet<(usize, usize)> = r.removed.iter().copied().collect();
        let original: HashSet<(usize, usize)> = g.edges().map(|(u, v, _)| (u, v)).collect();
        prop_assert!(remaining.is_disjoint(&removed));
        prop_assert_eq!(&remaining | &removed, original);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn proximity_is_identical_across_thread_counts(g in graph_strategy(200), k in 2usize..4) {
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                both_modes().map(|mode| {
                    [MaskMode::Rectified, MaskMode::Vanilla].map(|mask| {
                        compute_stack(&g, &ProximityConfig { k, matmul: mode, mask, drop_tolerance: 0.0 }).unwrap().matrices
                    })
                })
            })
        };
        prop_assert_eq!(run(1), run(4));
    }

    #[test]
    fn power_of_two_scaling_does_not_change_training(g in graph_strategy(20), shift in -4i32..8, seed in any::<u64>()) {
        prop_assume!(g.num_edges() > 0);
        let a = g.adjacency();
        let scaled = a.scale(2f64.powi(shift));
        let sa = build_alias_tables(a, 0.75).unwrap();
        let sb = build_alias_tables(&scaled, 0.75).unwrap();
        for e in 0..sa.num_edges() {
            prop_assert_eq!(sa.edge_probability(e), sb.edge_probability(e));
        }
        let cfg = TrainConfig { order: Order::Second, dim: 4, samples: Some(2000), ..Default::default() };
        prop_assert_eq!(embedding::train(a, &cfg, seed).unwrap(), embedding::train(&scaled, &cfg, seed).unwrap());
    }
}
