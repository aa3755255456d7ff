use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::fit::{fit_strategy, sample_paths, FitConfig};
use crate::isotonic::MonotoneFn;
use crate::models::{GaussianTree, SparsePeaks};

/// Strategy whose continuation value for every (layer, target) is `value(l, s)`.
fn constant_strategy(tree: &TreeConfig, lambda: f64, value: impl Fn(usize, usize) -> f64) -> Strategy {
    let g = tree.num_layers();
    let fns = (1..g)
        .map(|l| {
            (l + 1..=g)
                .map(|s| MonotoneFn::constant(0.0, value(l, s)))
                .collect()
        })
        .collect();
    Strategy::from_parts(tree.clone(), lambda, 1.0, fns, 0, 0).unwrap()
}

struct Threshold {
    cut: f64,
    step: usize,
    leaves: usize,
}

impl Policy for Threshold {
    fn decide(&self, layer: usize, x: f64) -> Action {
        if x > self.cut {
            Action::Jump((layer + self.step).min(self.leaves))
        } else {
            Action::Stop
        }
    }
}

fn small_tree() -> TreeConfig {
    TreeConfig::new(3, vec![2, 4], vec![2.0, 0.5, 1.5]).unwrap()
}

#[test]
fn all_stop_observes_only_roots() {
    let tree = small_tree();
    let r = GaussianTree::new(tree.clone(), 0.5)
        .unwrap()
        .sample_realization(&mut crate::stream_rng(1, 0));
    let stop = constant_strategy(&tree, 1.0, |_, _| -1.0);
    let out = run_search(&stop, &r, f64::NEG_INFINITY, SearchOptions::default()).unwrap();
    assert_eq!(out.per_layer_observed, vec![3, 0, 0]);
    assert_eq!(out.total_cost, 6.0);
    assert!(out.detections.is_empty());
}

#[test]
fn jump_to_leaves_observes_everything() {
    let tree = small_tree();
    let r = GaussianTree::new(tree.clone(), 0.5)
        .unwrap()
        .sample_realization(&mut crate::stream_rng(2, 0));
    let jump = constant_strategy(&tree, 1.0, |l, s| if l == 1 && s == 3 { 1.0 } else { -1.0 });
    let out = run_search(&jump, &r, f64::NEG_INFINITY, SearchOptions::default()).unwrap();
    assert_eq!(out.per_layer_observed, vec![3, 0, 24]);
    assert_eq!(out.total_cost, 3.0 * 2.0 + 24.0 * 1.5);
    let leaves: Vec<u64> = out.detections.iter().map(|d| d.leaf).collect();
    assert_eq!(leaves, (0..24).collect::<Vec<_>>());
}

#[test]
fn naive_examples() {
    let tree = small_tree();
    let flat = crate::models::TreeRealization::new(
        tree.clone(),
        vec![vec![0.0; 3], vec![0.0; 6], vec![0.0; 24]],
    )
    .unwrap();
    let out = naive_search(&flat, 1.0);
    assert!(out.detections.is_empty());
    assert_eq!(out.total_cost, 24.0 * 1.5);

    let mut leaves = vec![0.0; 24];
    leaves[13] = 5.0;
    let one = crate::models::TreeRealization::new(tree, vec![vec![0.0; 3], vec![0.0; 6], leaves])
        .unwrap();
    let out = naive_search(&one, 1.0);
    assert_eq!(out.detections, vec![Detection { leaf: 13, value: 5.0 }]);
}

#[test]
fn mismatched_tree_is_rejected() {
    let tree = small_tree();
    let other = TreeConfig::new(3, vec![2, 4], vec![1.0, 0.5, 1.5]).unwrap();
    let r = GaussianTree::new(other, 0.5)
        .unwrap()
        .sample_realization(&mut crate::stream_rng(2, 0));
    let s = constant_strategy(&tree, 1.0, |_, _| 1.0);
    assert_eq!(
        run_search(&s, &r, 0.0, SearchOptions::default()),
        Err(Error::TreeMismatch)
    );
}

#[test]
fn zero_lambda_strategy_matches_naive() {
    let tree = TreeConfig::new(2, vec![4, 4, 2], vec![1.0; 4]).unwrap();
    let model = GaussianTree::new(tree.clone(), 0.7).unwrap();
    let paths = sample_paths(&model, 5000, 1);
    let cfg = FitConfig {
        tree: tree.clone(),
        lambda: 0.0,
        q_train: 1.5,
        seed: 1,
    };
    let strategy = fit_strategy(&paths, &cfg).unwrap().strategy;
    for seed in 0..50 {
        let r = model.sample_realization(&mut crate::stream_rng(seed, 1));
        let a = run_search(&strategy, &r, 1.8, SearchOptions::default()).unwrap();
        let b = naive_search(&r, 1.8);
        assert_eq!(a.detections, b.detections);
        assert_eq!(a.per_layer_observed[3], tree.leaf_count());
    }
}

#[test]
fn detections_are_a_subset_of_naive() {
    let tree = TreeConfig::new(2, vec![3, 3, 3], vec![1.0; 4]).unwrap();
    let model = GaussianTree::new(tree.clone(), 0.8).unwrap();
    for seed in 0..20 {
        let r = model.sample_realization(&mut crate::stream_rng(seed, 2));
        let naive = naive_search(&r, 1.0);
        for (cut, step) in [(0.0, 1), (0.5, 2), (-0.5, 3), (1.0, 1)] {
            let policy = Threshold { cut, step, leaves: 4 };
            let out = search_roots(&policy, &r, 1.0, 0..2, SearchOptions { keep_log: true }).unwrap();
            for d in &out.detections {
                assert!(naive.detections.contains(d));
            }
            // Cost is the weighted count, and the log holds every observation
            // exactly once.
            let log = out.observed_log.as_ref().unwrap();
            assert_eq!(log.len() as u64, out.observed_total());
            let mut nodes: Vec<NodeId> = log.iter().map(|o| o.node).collect();
            nodes.sort();
            nodes.dedup();
            assert_eq!(nodes.len(), log.len());
            let cost: f64 = out.per_layer_observed.iter().map(|&n| n as f64).sum();
            assert_eq!(out.total_cost, cost);
            for d in &out.detections {
                assert!(log.iter().any(|o| o.node == NodeId::new(4, d.leaf)));
            }
        }
    }
}

#[test]
fn coalesce_merges_overlaps() {
    let mut r = vec![5..8, 0..2, 1..3, 8..9, 12..14];
    coalesce(&mut r);
    assert_eq!(r, vec![0..3, 5..9, 12..14]);
}

#[test]
fn invalid_policy_actions_error() {
    let tree = small_tree();
    let r = GaussianTree::new(tree, 0.5)
        .unwrap()
        .sample_realization(&mut crate::stream_rng(2, 0));
    struct Up;
    impl Policy for Up {
        fn decide(&self, layer: usize, _x: f64) -> Action {
            Action::Jump(layer)
        }
    }
    assert!(search_subtree(&Up, &r, 0.0, 0, SearchOptions::default()).is_err());
    assert!(search_subtree(&Up, &r, 0.0, 99, SearchOptions::default()).is_err());
}

#[test]
fn frontier_stays_small_on_a_million_leaves() {
    let tree = TreeConfig::new(16, vec![8, 8, 8, 8, 8, 2], vec![1.0; 7]).unwrap();
    assert!(tree.leaf_count() >= 1_000_000);
    let peaks = vec![12_345, 600_001, 1_000_000];
    let ev = SparsePeaks::new(tree.clone(), 3, peaks.clone(), vec![40.0; 7]).unwrap();
    let policy = Threshold { cut: 20.0, step: 1, leaves: 7 };
    let out = search_roots(&policy, &ev, 30.0, 0..16, SearchOptions::default()).unwrap();
    assert!(out.peak_queue_entries < 10_000);
    assert!(out.peak_pending_nodes < 10_000);
    let found: Vec<u64> = out.detections.iter().map(|d| d.leaf).collect();
    for p in peaks {
        assert!(found.contains(&p));
    }
    assert!(out.observed_total() < 1000);
}
