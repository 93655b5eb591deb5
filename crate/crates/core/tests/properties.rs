use std::collections::BTreeSet;

use proptest::prelude::*;

use oddball_core::attacks::{run_attack, soft_gradient, AttackConfig, AttackKind};
use oddball_core::defense::{fit_huber, fit_huber_traced, fit_ransac_detailed, robust_rescore, RobustConfig};
use oddball_core::grad::{surrogate_value, surrogate_value_and_gradient, RelaxedAdjacency};
use oddball_core::graph::{
    apply_flips, generate, load_edge_list, pair_count, pairs, save_edge_list, triangle_diagonal, EdgeFlip, GenConfig,
    Graph, LoadOptions,
};
use oddball_core::oddball::{ego_features, fit_ols, score_graph, surrogate_objective};
use oddball_core::stats::permutation_test;
use oddball_core::transfer::{auc_rank, auc_trapezoid, delta_b, log_bins, refex_embed, RefexConfig};
use oddball_core::Fitter;

fn graph_from_mask(n: usize, mask: &[bool]) -> Graph {
    let edges: Vec<(usize, usize)> = pairs(n).zip(mask).filter(|(_, &on)| on).map(|(p, _)| p).collect();
    Graph::from_edges(n, edges).unwrap()
}

fn arb_graph(max_n: usize) -> impl Strategy<Value = Graph> {
    (3..=max_n).prop_flat_map(|n| {
        proptest::collection::vec(proptest::bool::weighted(0.35), pair_count(n))
            .prop_map(move |mask| graph_from_mask(n, &mask))
    })
}

/// Graph plus a set of distinct pairs to toggle.
fn arb_graph_and_flips(max_n: usize) -> impl Strategy<Value = (Graph, Vec<(usize, usize)>)> {
    arb_graph(max_n).prop_flat_map(|g| {
        let all: Vec<(usize, usize)> = pairs(g.node_count()).collect();
        let len = all.len();
        (Just(g), proptest::sample::subsequence(all, 0..=len.min(6)))
    })
}

/// Edge count among `{i} ∪ N(i)` by listing the egonet explicitly.
fn egonet_edges(g: &Graph, i: usize) -> usize {
    let mut members: Vec<usize> = g.neighbors(i).iter().map(|&v| v as usize).collect();
    members.push(i);
    let mut count = 0;
    for (a, &u) in members.iter().enumerate() {
        for &v in &members[a + 1..] {
            if g.has_edge(u, v) {
                count += 1;
            }
        }
    }
    count
}

fn has_nonisolated_target(g: &Graph) -> Option<usize> {
    (0..g.node_count()).max_by_key(|&i| (g.degree(i), std::cmp::Reverse(i))).filter(|&i| g.degree(i) > 0)
}

fn fit_is_usable(g: &Graph) -> bool {
    let f = ego_features(g);
    let degrees: BTreeSet<u64> = f.nodes.iter().filter(|&&n| n > 0.0).map(|&n| n as u64).collect();
    degrees.len() >= 2
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flips_keep_graphs_simple((g, toggles) in arb_graph_and_flips(10)) {
        let flips: Vec<EdgeFlip> = toggles.iter().map(|&(i, j)| EdgeFlip::toggle(&g, i, j)).collect();
        let h = apply_flips(&g, &flips).unwrap();
        let n = h.node_count();
        for i in 0..n {
            prop_assert!(!h.has_edge(i, i));
            for j in 0..n {
                prop_assert_eq!(h.has_edge(i, j), h.has_edge(j, i));
            }
        }
        let degree_sum: usize = (0..n).map(|i| h.degree(i)).sum();
        prop_assert_eq!(degree_sum, 2 * h.edge_count());
        let changed = pairs(n).filter(|&(i, j)| g.has_edge(i, j) != h.has_edge(i, j)).count();
        prop_assert_eq!(changed, flips.len());
    }

    #[test]
    fn edge_lists_round_trip(g in arb_graph(12)) {
        let keep: Vec<usize> = (0..g.node_count()).filter(|&i| g.degree(i) > 0).collect();
        prop_assume!(!keep.is_empty());
        let canonical = g.induced_subgraph(&keep).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        save_edge_list(&canonical, &path).unwrap();
        let back = load_edge_list(&path, LoadOptions::default()).unwrap();
        prop_assert_eq!(back.edges().collect::<Vec<_>>(), canonical.edges().collect::<Vec<_>>());
    }

    #[test]
    fn generators_repeat_per_seed(n in 5usize..60, p in 0.0f64..1.0, m in 1usize..4, seed in any::<u64>()) {
        let er = GenConfig::er(n, p, seed);
        prop_assert_eq!(generate(&er).unwrap(), generate(&er).unwrap());
        let ba = GenConfig::ba(n, m, seed);
        let g = generate(&ba).unwrap();
        prop_assert_eq!(&g, &generate(&ba).unwrap());
        prop_assert_eq!(g.edge_count(), m * (n - m) + m * (m - 1) / 2);
    }

    #[test]
    fn triangle_diagonal_is_even(g in arb_graph(14)) {
        prop_assert!(triangle_diagonal(&g).iter().all(|t| t % 2 == 0));
    }

    #[test]
    fn ego_features_match_materialized_egonets(g in arb_graph(14)) {
        let f = ego_features(&g);
        for i in 0..g.node_count() {
            prop_assert_eq!(f.nodes[i], g.degree(i) as f64);
            prop_assert_eq!(f.edges[i], egonet_edges(&g, i) as f64);
        }
    }

    #[test]
    fn scores_follow_relabeling(g in arb_graph(12), seed in any::<u64>()) {
        prop_assume!(fit_is_usable(&g));
        let n = g.node_count();
        let mut perm: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut oddball_core::rng::rng_from(seed));
        let a = score_graph(&g).unwrap();
        let b = score_graph(&g.relabel(&perm).unwrap()).unwrap();
        for i in 0..n {
            prop_assert!((a.scores[i] - b.scores[perm[i]]).abs() < 1e-9);
            prop_assert!(a.scores[i] >= 0.0);
        }
    }

    #[test]
    fn ols_residuals_are_orthogonal(g in arb_graph(14)) {
        prop_assume!(fit_is_usable(&g));
        let f = ego_features(&g);
        let fit = fit_ols(&f).unwrap();
        let (mut s0, mut s1) = (0.0, 0.0);
        for i in 0..f.len() {
            if fit.mask[i] {
                let x = f.nodes[i].ln();
                let r = f.edges[i].ln() - fit.beta0 - fit.beta1 * x;
                s0 += r;
                s1 += r * x;
            }
        }
        prop_assert!(s0.abs() < 1e-8 && s1.abs() < 1e-8, "{} {}", s0, s1);
    }

    #[test]
    fn surrogate_is_the_squared_residual_sum(g in arb_graph(12)) {
        prop_assume!(fit_is_usable(&g));
        let t = has_nonisolated_target(&g).unwrap();
        let f = ego_features(&g);
        let fit = fit_ols(&f).unwrap();
        let r = f.edges[t] - fit.predict(f.nodes[t]);
        let s = surrogate_objective(&f, &[t]).unwrap();
        prop_assert!((s - r * r).abs() <= 1e-9 * (1.0 + r * r));
        prop_assert_eq!(s < 1e-18, r.abs() < 1e-9);
    }

    #[test]
    fn relaxed_surrogate_agrees_on_binary_graphs(g in arb_graph(12)) {
        prop_assume!(fit_is_usable(&g));
        let t = has_nonisolated_target(&g).unwrap();
        let exact = surrogate_objective(&ego_features(&g), &[t]).unwrap();
        let relaxed = surrogate_value(&RelaxedAdjacency::from_graph(&g), &[t]).unwrap();
        prop_assert!((exact - relaxed).abs() <= 1e-10 * (1.0 + exact));
    }

    #[test]
    fn lasso_term_adds_linearly(
        g1 in proptest::collection::vec(-5.0f64..5.0, 12),
        g2 in proptest::collection::vec(-5.0f64..5.0, 12),
        clean in proptest::collection::vec(any::<bool>(), 12),
        soft in proptest::collection::vec(prop_oneof![Just(0.0), 0.0f64..1.0], 12),
        lambda in 0.0f64..2.0,
    ) {
        let clean: Vec<f64> = clean.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect();
        let sum: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a + b).collect();
        let run = |g: &[f64], l: f64| {
            let mut out = vec![0.0; 12];
            soft_gradient(g, &clean, &soft, l, &mut out);
            out
        };
        let (a, b, ab) = (run(&g1, 0.0), run(&g2, 0.0), run(&sum, 0.0));
        let pen = run(&g1, lambda);
        for c in 0..12 {
            prop_assert!((ab[c] - a[c] - b[c]).abs() < 1e-12);
            let sub = if soft[c] > 0.0 { lambda } else { 0.0 };
            prop_assert!((pen[c] - a[c] - sub).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pair_gradient_matches_symmetric_differences(
        g in arb_graph(8),
        jitter in proptest::collection::vec(0.05f64..0.3, 28),
    ) {
        prop_assume!(fit_is_usable(&g));
        let n = g.node_count();
        let t = has_nonisolated_target(&g).unwrap();
        // pull every entry into the interior so both difference sides exist
        let values: Vec<f64> = pairs(n)
            .zip(jitter.iter().cycle())
            .map(|((i, j), &d)| if g.has_edge(i, j) { 1.0 - d } else { d })
            .collect();
        let adj = RelaxedAdjacency::from_pair_values(n, &values).unwrap();
        let (_, grad) = surrogate_value_and_gradient(&adj, &[t]).unwrap();
        let h = 1e-6;
        for (idx, (i, j)) in pairs(n).enumerate() {
            let mut up = adj.clone();
            up.set(i, j, values[idx] + h);
            let mut down = adj.clone();
            down.set(i, j, values[idx] - h);
            let fd = (surrogate_value(&up, &[t]).unwrap() - surrogate_value(&down, &[t]).unwrap()) / (2.0 * h);
            let an = grad.get(i, j);
            prop_assert!((fd - an).abs() <= 1e-4 * an.abs().max(1.0), "pair ({}, {}): fd {} vs {}", i, j, fd, an);
        }
    }

    #[test]
    fn plans_respect_budgets_and_repeat(g in arb_graph(10), budget in 0usize..5, seed in any::<u64>()) {
        prop_assume!(fit_is_usable(&g));
        let t = has_nonisolated_target(&g).unwrap();
        let mut cfg = AttackConfig::new(budget, vec![t]);
        cfg.seed = seed;
        cfg.iters = 25;
        cfg.lr = 0.05;
        cfg.lambdas = vec![1e-3, 1e-1];
        for kind in [AttackKind::GradMax, AttackKind::Continuous, AttackKind::Binarized] {
            let plan = run_attack(&g, &cfg, kind).unwrap();
            prop_assert_eq!(&plan, &run_attack(&g, &cfg, kind).unwrap());
            for step in &plan.steps {
                prop_assert!(step.budget <= budget);
                prop_assert_eq!(step.flips.len(), step.budget);
                let h = apply_flips(&g, &step.flips).unwrap();
                let changed = pairs(g.node_count()).filter(|&(i, j)| g.has_edge(i, j) != h.has_edge(i, j)).count();
                prop_assert_eq!(changed, step.budget);
            }
            if kind == AttackKind::GradMax {
                let flips = plan.final_flips();
                let distinct: BTreeSet<(usize, usize)> = flips.iter().map(|f| (f.i, f.j)).collect();
                prop_assert_eq!(distinct.len(), flips.len());
                let h = apply_flips(&g, flips).unwrap();
                for i in 0..g.node_count() {
                    prop_assert!(g.degree(i) == 0 || h.degree(i) > 0);
                }
            }
            if kind == AttackKind::Binarized {
                // budgets filled from larger snapshots draw on shrinking sets
                let fallback: Vec<f64> = plan
                    .steps
                    .iter()
                    .filter_map(|s| s.source.as_ref().filter(|src| src.flipped > s.budget).map(|src| src.surrogate))
                    .collect();
                for w in fallback.windows(2) {
                    prop_assert!(w[0] <= w[1] + 1e-12);
                }
            }
        }
    }

    #[test]
    fn robust_fits_behave(g in arb_graph(14), seed in any::<u64>()) {
        prop_assume!(fit_is_usable(&g));
        let f = ego_features(&g);
        let cfg = RobustConfig { seed, ..RobustConfig::default() };
        let (_, trace) = fit_huber_traced(&f, &RobustConfig { huber_k: 0.2, ..cfg.clone() }).unwrap();
        for w in trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-10);
        }

        let ols = fit_ols(&f).unwrap();
        let max_res = (0..f.len())
            .filter(|&i| ols.mask[i])
            .map(|i| (f.edges[i].ln() - ols.beta0 - ols.beta1 * f.nodes[i].ln()).abs())
            .fold(0.0, f64::max);
        let wide = fit_huber(&f, &RobustConfig { huber_k: max_res + 1e-9, ..cfg.clone() }).unwrap();
        prop_assert!((wide.beta0 - ols.beta0).abs() < 1e-9 && (wide.beta1 - ols.beta1).abs() < 1e-9);

        let r = fit_ransac_detailed(&f, &cfg).unwrap();
        let (s0, s1) = r.sample_line;
        for i in 0..f.len() {
            if r.fit.used[i] {
                prop_assert!((f.edges[i].ln() - s0 - s1 * f.nodes[i].ln()).abs() <= r.inlier_tol);
            }
        }
        for fitter in [Fitter::Huber, Fitter::Ransac] {
            prop_assert!(robust_rescore(&g, fitter, &cfg).unwrap().scores.iter().all(|&s| s >= 0.0));
        }
    }

    #[test]
    fn embeddings_are_stable_one_hot(g in arb_graph(14), depth in 0usize..3, bins in 2usize..6) {
        let cfg = RefexConfig { recursion_depth: depth, bins, prune_corr: 0.95 };
        let e = refex_embed(&g, &cfg).unwrap();
        prop_assert_eq!(&e, &refex_embed(&g, &cfg).unwrap());
        prop_assert_eq!(e.width % bins, 0);
        for row in &e.rows {
            prop_assert_eq!(row.len(), e.width);
            prop_assert_eq!(row.iter().map(|&b| b as usize).sum::<usize>(), e.width / bins);
        }
    }
}

proptest! {
    #[test]
    fn bins_are_monotone_and_tie_stable(values in proptest::collection::vec(0u8..6, 1..40), bins in 2usize..6) {
        let v: Vec<f64> = values.iter().map(|&x| f64::from(x)).collect();
        let b = log_bins(&v, bins);
        for i in 0..v.len() {
            prop_assert!(b[i] < bins);
            for j in 0..v.len() {
                if v[i] >= v[j] {
                    prop_assert!(b[i] <= b[j]);
                }
            }
        }
    }

    #[test]
    fn delta_b_is_scale_free(sl0 in 0.01f64..50.0, slb in 0.0f64..50.0, c in 0.01f64..100.0) {
        prop_assert_eq!(delta_b(sl0, sl0), 0.0);
        prop_assert!((delta_b(sl0, slb) - delta_b(c * sl0, c * slb)).abs() < 1e-9);
    }

    #[test]
    fn auc_implementations_agree(
        scores in proptest::collection::vec(0u8..10, 2..60),
        labels in proptest::collection::vec(any::<bool>(), 60),
    ) {
        let s: Vec<f64> = scores.iter().map(|&x| f64::from(x) / 10.0).collect();
        let l = &labels[..s.len()];
        match (auc_rank(&s, l), auc_trapezoid(&s, l)) {
            (Some(a), Some(b)) => {
                prop_assert!((a - b).abs() < 1e-9);
                prop_assert!((0.0..=1.0).contains(&a));
            }
            (None, None) => {}
            other => prop_assert!(false, "{:?}", other),
        }
    }

    #[test]
    fn permutation_p_ignores_order_and_shift(
        x in proptest::collection::vec(-20i32..20, 1..12),
        y in proptest::collection::vec(-20i32..20, 1..12),
        shift in -50i32..50,
        seed in any::<u64>(),
    ) {
        let xf: Vec<f64> = x.iter().map(|&v| f64::from(v)).collect();
        let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
        let a = permutation_test(&xf, &yf, 500, seed).unwrap();
        let b = permutation_test(&yf, &xf, 500, seed).unwrap();
        prop_assert_eq!(a.p_value, b.p_value);
        let xs: Vec<f64> = xf.iter().map(|v| v + f64::from(shift)).collect();
        let ys: Vec<f64> = yf.iter().map(|v| v + f64::from(shift)).collect();
        prop_assert_eq!(permutation_test(&xs, &ys, 500, seed).unwrap().p_value, a.p_value);
        let k = a.p_value * 500.0;
        prop_assert!((k - k.round()).abs() < 1e-9);
    }
}

/// Exact p over every relabeling of the pooled sample.
fn exact_p(x: &[f64], y: &[f64]) -> f64 {
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let n = pooled.len();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let t0 = (mean(x) - mean(y)).abs();
    let (mut hits, mut total) = (0u32, 0u32);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != x.len() {
            continue;
        }
        let (a, b): (Vec<f64>, Vec<f64>) = (0..n).partition_map_like(|i| (mask >> i) & 1 == 1, &pooled);
        total += 1;
        if (mean(&a) - mean(&b)).abs() >= t0 - 1e-12 {
            hits += 1;
        }
    }
    f64::from(hits) / f64::from(total)
}

trait PartitionLike {
    fn partition_map_like(self, pick: impl Fn(usize) -> bool, data: &[f64]) -> (Vec<f64>, Vec<f64>);
}

impl PartitionLike for std::ops::Range<usize> {
    fn partition_map_like(self, pick: impl Fn(usize) -> bool, data: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for i in self {
            if pick(i) {
                a.push(data[i]);
            } else {
                b.push(data[i]);
            }
        }
        (a, b)
    }
}

#[test]
fn monte_carlo_p_converges_to_enumeration() {
    let cases: [(&[f64], &[f64]); 4] = [
        (&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0, 7.0]),
        (&[0.5, 0.7], &[0.1, 2.0, 3.5, 0.2, 1.1, 0.9]),
        (&[3.0, 3.0, 1.0, 2.0], &[2.0, 3.0, 1.0, 5.0]),
        (&[10.0], &[1.0, 2.0, 3.0]),
    ];
    let m = 40_000;
    for (k, (x, y)) in cases.iter().enumerate() {
        let exact = exact_p(x, y);
        let mc = permutation_test(x, y, m, k as u64).unwrap().p_value;
        let se = (exact * (1.0 - exact) / m as f64).sqrt();
        assert!((mc - exact).abs() <= 3.0 * se + 1e-12, "case {k}: mc {mc} exact {exact}");
    }
}

#[test]
fn evaluation_keeps_the_clean_labels() {
    use oddball_core::graph::plant_cliques;
    use oddball_core::transfer::{evaluate_with, prepare, TransferConfig};
    let g = generate(&GenConfig::ba(120, 3, 4)).unwrap();
    let (g, _) = plant_cliques(&g, 2, 6, 1).unwrap();
    let cfg = TransferConfig::default();
    let pipeline = prepare(&g, &cfg).unwrap();
    let before = pipeline.split.clone();
    // a heavily rewired graph would label differently if labels were recomputed
    let other = generate(&GenConfig::er(120, 0.05, 9)).unwrap();
    let report = evaluate_with(&pipeline, &other, &cfg).unwrap();
    assert_eq!(pipeline.split, before);
    assert_eq!(report.targets, pipeline.targets);
    assert_eq!(report.clean.soft_label_sum, pipeline.targets.iter().map(|&u| pipeline.probabilities[u]).sum::<f64>());
}
