//! Exact backward induction on a small discretized Gaussian chain.
//!
//! Serves as the reference the Monte-Carlo fitter is checked against: with
//! explicit conditional laws, the expected value of every action is computed
//! by summation instead of regression.

use alloc::vec::Vec;

use crate::fit::{choose_action, Action, Policy};
use crate::models::DiscreteGaussianChain;
use crate::{Error, Result};

pub const MAX_LAYERS: usize = 4;
pub const MAX_LEAVES: u64 = 256;
pub const MAX_LEVELS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    lambda: f64,
    q: f64,
    levels: Vec<f64>,
    /// `values[l - 1][k]`: optimal value at level `k` in layer `l`.
    values: Vec<Vec<f64>>,
    /// `q_values[l - 1][s - l - 1][k]` for layers `l < G`.
    q_values: Vec<Vec<Vec<f64>>>,
    /// `decisions[l - 1][k]` for layers `l < G`.
    decisions: Vec<Vec<Action>>,
    payoff: f64,
    model: DiscreteGaussianChain,
}

impl OracleSolution {
    /// Optimal expected payoff summed over all root nodes.
    pub fn payoff(&self) -> f64 {
        self.payoff
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn value(&self, layer: usize, level: usize) -> f64 {
        self.values[layer - 1][level]
    }

    pub fn q_value(&self, layer: usize, target: usize, level: usize) -> f64 {
        self.q_values[layer - 1][target - layer - 1][level]
    }

    pub fn decision(&self, layer: usize, level: usize) -> Action {
        self.decisions[layer - 1][level]
    }

    /// Per-layer decision regions `(first level value, action)`, for layers
    /// `1..G`.
    pub fn decision_regions(&self) -> Vec<Vec<(f64, Action)>> {
        self.decisions
            .iter()
            .map(|row| {
                let mut regions: Vec<(f64, Action)> = Vec::new();
                for (k, &a) in row.iter().enumerate() {
                    if regions.last().map(|r| r.1) != Some(a) {
                        regions.push((self.levels[k], a));
                    }
                }
                regions
            })
            .collect()
    }
}

impl Policy for OracleSolution {
    fn decide(&self, layer: usize, x: f64) -> Action {
        match self.decisions.get(layer.wrapping_sub(1)) {
            Some(row) => row[self.model.level_of(x)],
            None => Action::Stop,
        }
    }
}

fn check_size(model: &DiscreteGaussianChain) -> Result<()> {
    let tree = model.tree();
    if tree.num_layers() > MAX_LAYERS {
        return Err(Error::StateSpaceTooLarge("at most 4 layers"));
    }
    if tree.leaf_count() > MAX_LEAVES {
        return Err(Error::StateSpaceTooLarge("at most 256 leaves"));
    }
    if model.levels().len() > MAX_LEVELS {
        return Err(Error::StateSpaceTooLarge("at most 200 statistic levels"));
    }
    Ok(())
}

/// `E[f(X_to) | X_from = k]` for every level `k`.
fn conditional(model: &DiscreteGaussianChain, f: &[f64], steps: usize) -> Vec<f64> {
    let mut out = f.to_vec();
    for _ in 0..steps {
        out = model.step_expectation(&out);
    }
    out
}

fn check_params(lambda: f64, q: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidParameter("lambda must be finite and >= 0"));
    }
    if q.is_nan() {
        return Err(Error::InvalidParameter("q must not be NaN"));
    }
    Ok(())
}

/// Optimal layer-wise strategy and its expected payoff (summed over roots,
/// root observation costs excluded).
pub fn exact_dp_oracle(model: &DiscreteGaussianChain, lambda: f64, q: f64) -> Result<OracleSolution> {
    check_size(model)?;
    check_params(lambda, q)?;
    let tree = model.tree();
    let g = tree.num_layers();
    let levels = model.levels().to_vec();
    let mut values: Vec<Vec<f64>> = alloc::vec![Vec::new(); g];
    values[g - 1] = levels.iter().map(|&z| if z >= q { 1.0 } else { 0.0 }).collect();
    let mut q_values: Vec<Vec<Vec<f64>>> = alloc::vec![Vec::new(); g - 1];
    let mut decisions: Vec<Vec<Action>> = alloc::vec![Vec::new(); g - 1];
    for layer in (1..g).rev() {
        let mut per_action = Vec::with_capacity(g - layer);
        for s in layer + 1..=g {
            let width = tree.span(layer, s)? as f64;
            let cost = lambda * tree.cost(s)?;
            let expected = conditional(model, &values[s - 1], s - layer);
            per_action.push(expected.iter().map(|e| width * (e - cost)).collect::<Vec<f64>>());
        }
        let mut row_values = Vec::with_capacity(levels.len());
        let mut row_decisions = Vec::with_capacity(levels.len());
        for k in 0..levels.len() {
            let action = choose_action(
                per_action.iter().enumerate().map(|(i, qs)| (layer + 1 + i, qs[k])),
                lambda,
            );
            row_values.push(match action {
                Action::Stop => 0.0,
                Action::Jump(s) => per_action[s - layer - 1][k],
            });
            row_decisions.push(action);
        }
        values[layer - 1] = row_values;
        q_values[layer - 1] = per_action;
        decisions[layer - 1] = row_decisions;
    }
    let payoff = tree.root_count() as f64
        * model
            .initial()
            .iter()
            .zip(&values[0])
            .map(|(p, v)| p * v)
            .sum::<f64>();
    Ok(OracleSolution {
        lambda,
        q,
        levels,
        values,
        q_values,
        decisions,
        payoff,
        model: model.clone(),
    })
}

/// Exact expected payoff (summed over roots) of an arbitrary layer-wise
/// policy on the discretized chain.
pub fn evaluate_policy<P: Policy + ?Sized>(
    model: &DiscreteGaussianChain,
    policy: &P,
    lambda: f64,
    q: f64,
) -> Result<f64> {
    check_size(model)?;
    check_params(lambda, q)?;
    let tree = model.tree();
    let g = tree.num_layers();
    let levels = model.levels();
    let mut values: Vec<Vec<f64>> = alloc::vec![Vec::new(); g];
    values[g - 1] = levels.iter().map(|&z| if z >= q { 1.0 } else { 0.0 }).collect();
    for layer in (1..g).rev() {
        // Conditional expectations are only needed for the actions used.
        let mut cache: Vec<Option<Vec<f64>>> = alloc::vec![None; g + 1];
        let mut row = Vec::with_capacity(levels.len());
        for (k, &z) in levels.iter().enumerate() {
            let v = match policy.decide(layer, z) {
                Action::Stop => 0.0,
                Action::Jump(s) => {
                    if s <= layer || s > g {
                        return Err(Error::NotBelow {
                            node_layer: layer,
                            target: s,
                        });
                    }
                    let expected = cache[s]
                        .get_or_insert_with(|| conditional(model, &values[s - 1], s - layer));
                    tree.span(layer, s)? as f64 * (expected[k] - lambda * tree.cost(s)?)
                }
            };
            row.push(v);
        }
        values[layer - 1] = row;
    }
    Ok(tree.root_count() as f64
        * model
            .initial()
            .iter()
            .zip(&values[0])
            .map(|(p, v)| p * v)
            .sum::<f64>())
}
