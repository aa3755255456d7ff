use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::models::{DiscreteGaussianChain, TreeRealization};
use crate::oracle::{evaluate_policy, exact_dp_oracle};
use crate::tree::NodeId;

struct Always(Action);

impl Policy for Always {
    fn decide(&self, _layer: usize, _x: f64) -> Action {
        self.0
    }
}

/// Jump `step` layers (capped at the leaves) when `x > cut`.
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

#[test]
fn tie_rule() {
    // Stop attains the maximum and lambda > 0.
    assert_eq!(choose_action([(2, 0.0), (3, -1.0)].into_iter(), 0.5), Action::Stop);
    // Zero cost: keep going, deepest maximizer.
    assert_eq!(choose_action([(2, 0.0), (3, 0.0)].into_iter(), 0.0), Action::Jump(3));
    assert_eq!(choose_action([(2, 1.0), (3, 1.0)].into_iter(), 0.5), Action::Jump(3));
    assert_eq!(choose_action([(2, 2.0), (3, 1.0)].into_iter(), 0.5), Action::Jump(2));
    assert_eq!(choose_action([(2, -1.0)].into_iter(), 0.0), Action::Stop);
    assert_eq!(choose_action(core::iter::empty(), 0.0), Action::Stop);
    assert_eq!(Action::from_code(0), Action::Stop);
    assert_eq!(Action::Jump(4).code(), 4);
}

#[test]
fn path_payoff_examples() {
    let tree = TreeConfig::uniform(2, 1, 2).unwrap();
    let sample = PathSample {
        path: vec![0, 1],
        values: vec![0.3, 5.0],
    };
    let lambda = 0.25;
    let p = path_payoff(&sample, &Always(Action::Jump(2)), &tree, lambda, 1.0, 1).unwrap();
    assert!((p - 2.0 * (1.0 - lambda)).abs() < 1e-15);
    let stop = path_payoff(&sample, &Always(Action::Stop), &tree, lambda, 1.0, 1).unwrap();
    assert_eq!(stop, 0.0);
    assert!(path_payoff(&sample, &Always(Action::Stop), &tree, lambda, 1.0, 2).is_err());
    // A policy pointing upward is rejected.
    assert!(path_payoff(&sample, &Always(Action::Jump(1)), &tree, lambda, 1.0, 1).is_err());
}

/// Observation flags per Eq.-free brute force: walk layers top-down and mark
/// descendants of every observed node according to the policy.
fn brute_force_payoff<P: Policy>(
    r: &TreeRealization,
    tree: &TreeConfig,
    policy: &P,
    node: NodeId,
    lambda: f64,
    q: f64,
) -> f64 {
    let g = tree.num_layers();
    let mut observed: Vec<Vec<bool>> = (1..=g)
        .map(|l| vec![false; tree.nodes_in_layer(l).unwrap() as usize])
        .collect();
    observed[node.layer - 1][node.index as usize] = true;
    for l in node.layer..g {
        for v in 0..observed[l - 1].len() {
            if !observed[l - 1][v] {
                continue;
            }
            if let Action::Jump(s) = policy.decide(l, r.values(l)[v]) {
                let kids = tree.descendant_range(NodeId::new(l, v as u64), s).unwrap();
                for u in kids {
                    observed[s - 1][u as usize] = true;
                }
            }
        }
    }
    let mut payoff = 0.0;
    for l in node.layer + 1..=g {
        let range = tree.descendant_range(node, l).unwrap();
        for u in range {
            if observed[l - 1][u as usize] {
                payoff -= lambda * tree.cost(l).unwrap();
                if l == g && r.values(g)[u as usize] >= q {
                    payoff += 1.0;
                }
            }
        }
    }
    payoff
}

fn all_paths_from(tree: &TreeConfig, node: NodeId) -> Vec<Vec<u64>> {
    let g = tree.num_layers();
    let leaves = tree.descendant_range(node, g).unwrap();
    leaves
        .map(|leaf| {
            (1..=g)
                .map(|l| tree.ancestor(NodeId::new(g, leaf), l).unwrap().index)
                .collect()
        })
        .collect()
}

#[test]
fn path_payoff_is_unbiased_by_enumeration() {
    let tree = TreeConfig::new(2, vec![3, 4], vec![0.7, 1.3, 0.4]).unwrap();
    let model = crate::models::GaussianTree::new(tree.clone(), 0.6).unwrap();
    let policies = [
        Threshold { cut: -0.3, step: 1, leaves: 3 },
        Threshold { cut: 0.2, step: 2, leaves: 3 },
        Threshold { cut: f64::NEG_INFINITY, step: 1, leaves: 3 },
    ];
    for seed in 0..20 {
        let r = model.sample_realization(&mut crate::stream_rng(seed, 0));
        for policy in &policies {
            for layer in 1..3 {
                for v in 0..tree.nodes_in_layer(layer).unwrap() {
                    let node = NodeId::new(layer, v);
                    let exact = brute_force_payoff(&r, &tree, policy, node, 0.3, 0.5);
                    let paths = all_paths_from(&tree, node);
                    let mean = paths
                        .iter()
                        .map(|path| {
                            let sample = PathSample {
                                values: (1..=3).map(|l| r.values(l)[path[l - 1] as usize]).collect(),
                                path: path.clone(),
                            };
                            path_payoff(&sample, policy, &tree, 0.3, 0.5, layer).unwrap()
                        })
                        .sum::<f64>()
                        / paths.len() as f64;
                    assert!((mean - exact).abs() < 1e-12, "{mean} vs {exact}");
                }
            }
        }
    }
}

fn discrete(rho: f64, n1: u64, b: u64, layers: usize) -> DiscreteGaussianChain {
    let tree = TreeConfig::uniform(layers, n1, b).unwrap();
    DiscreteGaussianChain::new(tree, rho, 100, 4.0).unwrap()
}

fn config(model: &DiscreteGaussianChain, lambda: f64, q: f64) -> FitConfig {
    FitConfig {
        tree: model.tree().clone(),
        lambda,
        q_train: q,
        seed: 1,
    }
}

#[test]
fn zero_lambda_never_stops() {
    let model = discrete(0.7, 2, 2, 4);
    let paths = sample_paths(&model, 5000, 3);
    let fit = fit_strategy(&paths, &config(&model, 0.0, 1.5)).unwrap();
    for layer in 1..4 {
        for x in [-1e9, -3.0, 0.0, 1.0, 3.0, 1e9] {
            assert_ne!(fit.strategy.decide(layer, x), Action::Stop);
        }
    }
    assert_eq!(fit.strategy.decide(4, 10.0), Action::Stop);
}

#[test]
fn huge_lambda_always_stops() {
    let model = discrete(0.7, 2, 2, 3);
    let paths = sample_paths(&model, 5000, 3);
    // Max payoff per path is 4 leaves; any jump costs at least 2 * lambda.
    let fit = fit_strategy(&paths, &config(&model, 100.0, 1.0)).unwrap();
    for layer in 1..3 {
        for x in [-5.0, 0.0, 5.0] {
            assert_eq!(fit.strategy.decide(layer, x), Action::Stop);
        }
    }
    assert_eq!(fit.mean_root_payoff, 0.0);
}

#[test]
fn fitted_strategy_is_near_optimal_on_a_tiny_tree() {
    let model = discrete(0.8, 2, 2, 3);
    let (lambda, q) = (0.1, 1.5);
    let oracle = exact_dp_oracle(&model, lambda, q).unwrap();
    let paths = sample_paths(&model, 100_000, 5);
    let fit = fit_strategy(&paths, &config(&model, lambda, q)).unwrap();
    let achieved = evaluate_policy(&model, &fit.strategy, lambda, q).unwrap();
    assert!(oracle.payoff() > 0.0);
    assert!(achieved <= oracle.payoff() + 1e-12);
    assert!(achieved >= 0.95 * oracle.payoff(), "{achieved} vs {}", oracle.payoff());
}

#[test]
fn fitted_functions_and_decisions_are_monotone() {
    let model = discrete(0.8, 4, 2, 4);
    let paths = sample_paths(&model, 20_000, 8);
    let fit = fit_strategy(&paths, &config(&model, 0.05, 1.5)).unwrap();
    let s = &fit.strategy;
    for layer in 1..4 {
        for f in s.layer_functions(layer) {
            assert!(f.levels().windows(2).all(|w| w[0] <= w[1]));
        }
        let mut seen_go = false;
        for &x in model.levels() {
            let go = s.decide(layer, x) != Action::Stop;
            assert!(!(seen_go && !go), "layer {layer} stops again at {x}");
            seen_go |= go;
        }
        let regions = s.decision_regions(layer);
        assert_eq!(regions[0].0, f64::NEG_INFINITY);
        if regions.iter().any(|r| r.1 == Action::Stop) {
            assert_eq!(regions[0].1, Action::Stop);
        }
        for w in regions.windows(2) {
            assert!(w[0].0 < w[1].0);
        }
    }
}

#[test]
fn layers_depend_only_on_deeper_layers() {
    let model = discrete(0.8, 2, 2, 4);
    let paths = sample_paths(&model, 5000, 9);
    let mut shuffled = paths.clone();
    for (i, p) in shuffled.iter_mut().enumerate() {
        p.values[0] = (i % 7) as f64;
    }
    let cfg = config(&model, 0.05, 1.0);
    let a = fit_strategy(&paths, &cfg).unwrap().strategy;
    let b = fit_strategy(&shuffled, &cfg).unwrap().strategy;
    for layer in 2..4 {
        assert_eq!(a.layer_functions(layer), b.layer_functions(layer));
    }
    assert_ne!(a.layer_functions(1), b.layer_functions(1));
}

#[test]
fn fitting_is_deterministic() {
    let model = discrete(0.5, 2, 2, 3);
    let cfg = config(&model, 0.05, 1.0);
    let a = fit_strategy(&sample_paths(&model, 3000, 4), &cfg).unwrap();
    let b = fit_strategy(&sample_paths(&model, 3000, 4), &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn fit_errors_and_warnings() {
    let model = discrete(0.5, 2, 2, 3);
    let cfg = config(&model, 0.05, 1.0);
    let paths = sample_paths(&model, 10, 4);
    assert!(matches!(
        fit_strategy(&paths[..1], &cfg),
        Err(Error::TooFewPaths { found: 1 })
    ));
    let mut bad = paths.clone();
    bad[3].values[1] = f64::NAN;
    assert!(matches!(fit_strategy(&bad, &cfg), Err(Error::NonFinite { index: 3, .. })));

    let flat: Vec<PathSample> = (0..10)
        .map(|i| PathSample {
            path: vec![0, 0, 0],
            values: vec![1.0, 1.0, i as f64],
        })
        .collect();
    let fit = fit_strategy(&flat, &cfg).unwrap();
    assert!(fit.warnings.contains(&FitWarning::DegenerateLayer { layer: 1 }));
    assert!(fit.warnings.contains(&FitWarning::DegenerateLayer { layer: 2 }));
    for f in fit.strategy.layer_functions(1) {
        assert_eq!(f.levels().len(), 1);
    }

    let none = FitConfig { q_train: 1e9, ..cfg };
    let fit = fit_strategy(&paths, &none).unwrap();
    assert!(fit.warnings.contains(&FitWarning::NoExceedances));
}

#[test]
fn rule_of_thumb_threshold() {
    assert!((threshold_rule_of_thumb(0.001).unwrap() - 13.815510557964274).abs() < 1e-9);
    assert!((threshold_rule_of_thumb(0.5).unwrap() - 1.3862943611198906).abs() < 1e-12);
    assert!(threshold_rule_of_thumb(1.0 - 1e-12).unwrap() < 1e-9);
    assert!(threshold_rule_of_thumb(0.0).is_err());
    assert!(threshold_rule_of_thumb(1.0).is_err());
}

#[test]
fn strategy_shape_is_validated() {
    let tree = TreeConfig::uniform(3, 1, 2).unwrap();
    let f = crate::isotonic::MonotoneFn::constant(0.0, 1.0);
    let ok = vec![vec![f.clone(), f.clone()], vec![f.clone()]];
    assert!(Strategy::from_parts(tree.clone(), 0.1, 1.0, ok, 0, 10).is_ok());
    let short = vec![vec![f.clone()], vec![f.clone()]];
    assert!(Strategy::from_parts(tree.clone(), 0.1, 1.0, short, 0, 10).is_err());
    let neg = vec![vec![f.clone(), f.clone()], vec![f]];
    assert!(Strategy::from_parts(tree, -0.1, 1.0, neg, 0, 10).is_err());
}
