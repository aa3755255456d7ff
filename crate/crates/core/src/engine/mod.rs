//! Executes a strategy over a concrete hypothesis tree.
//!
//! The tree is never materialized. Each layer-1 subtree is processed on its
//! own with a small work queue of pending index ranges per layer; statistics
//! are computed on demand through a [`StatisticEvaluator`].

use alloc::vec::Vec;
use core::ops::Range;

use crate::fit::{Action, Policy, Strategy};
use crate::tree::{NodeId, TreeConfig};
use crate::{Error, Result};

pub mod pulsar;

/// Source of node statistics for one dataset.
///
/// Repeated evaluation of the same node must return the same value.
pub trait StatisticEvaluator {
    fn tree(&self) -> &TreeConfig;

    fn evaluate(&self, node: NodeId) -> f64;
}

impl<E: StatisticEvaluator + ?Sized> StatisticEvaluator for &E {
    fn tree(&self) -> &TreeConfig {
        (**self).tree()
    }

    fn evaluate(&self, node: NodeId) -> f64 {
        (**self).evaluate(node)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub leaf: u64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub node: NodeId,
    pub value: f64,
    pub action: Action,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchOptions {
    /// Keep every observed node with its value and action. Off by default:
    /// the log grows with the number of observations.
    pub keep_log: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    /// Observed leaves with value `>= q_reject`, in increasing leaf order.
    pub detections: Vec<Detection>,
    /// `per_layer_observed[l - 1]` counts observations in layer `l`.
    pub per_layer_observed: Vec<u64>,
    pub total_cost: f64,
    pub observed_log: Option<Vec<Observation>>,
    /// Largest number of pending range entries held at once.
    pub peak_queue_entries: usize,
    /// Largest number of nodes covered by pending ranges at once.
    pub peak_pending_nodes: u64,
}

impl SearchOutcome {
    pub fn empty(tree: &TreeConfig, keep_log: bool) -> Self {
        SearchOutcome {
            detections: Vec::new(),
            per_layer_observed: alloc::vec![0; tree.num_layers()],
            total_cost: 0.0,
            observed_log: keep_log.then(Vec::new),
            peak_queue_entries: 0,
            peak_pending_nodes: 0,
        }
    }

    pub fn observed_total(&self) -> u64 {
        self.per_layer_observed.iter().sum()
    }

    /// Appends the outcome of a later subtree. Outcomes must be merged in
    /// increasing root order to keep detections sorted.
    pub fn merge(&mut self, other: SearchOutcome, tree: &TreeConfig) {
        self.detections.extend(other.detections);
        for (a, b) in self.per_layer_observed.iter_mut().zip(&other.per_layer_observed) {
            *a += b;
        }
        if let (Some(log), Some(more)) = (self.observed_log.as_mut(), other.observed_log) {
            log.extend(more);
        }
        self.peak_queue_entries = self.peak_queue_entries.max(other.peak_queue_entries);
        self.peak_pending_nodes = self.peak_pending_nodes.max(other.peak_pending_nodes);
        self.total_cost = weighted_cost(tree, &self.per_layer_observed);
    }
}

fn weighted_cost(tree: &TreeConfig, counts: &[u64]) -> f64 {
    tree.costs()
        .iter()
        .zip(counts)
        .map(|(c, &n)| c * n as f64)
        .sum()
}

/// Sorts and merges overlapping or touching ranges in place.
fn coalesce(ranges: &mut Vec<Range<u64>>) {
    ranges.sort_by_key(|r| r.start);
    let mut out: Vec<Range<u64>> = Vec::with_capacity(ranges.len());
    for r in ranges.drain(..) {
        match out.last_mut() {
            Some(last) if r.start <= last.end => last.end = last.end.max(r.end),
            _ => out.push(r),
        }
    }
    *ranges = out;
}

/// Searches the subtree of one layer-1 node.
pub fn search_subtree<P, E>(
    policy: &P,
    eval: &E,
    q_reject: f64,
    root: u64,
    opts: SearchOptions,
) -> Result<SearchOutcome>
where
    P: Policy + ?Sized,
    E: StatisticEvaluator + ?Sized,
{
    let tree = eval.tree();
    let g = tree.num_layers();
    tree.check_node(NodeId::new(1, root))?;
    let mut out = SearchOutcome::empty(tree, opts.keep_log);
    // pending[l - 1]: ranges scheduled for observation in layer l.
    let mut pending: Vec<Vec<Range<u64>>> = alloc::vec![Vec::new(); g];
    pending[0].push(root..root + 1);
    let mut entries = 1usize;
    let mut nodes = 1u64;
    out.peak_queue_entries = 1;
    out.peak_pending_nodes = 1;

    for layer in 1..=g {
        let mut ranges = core::mem::take(&mut pending[layer - 1]);
        entries -= ranges.len();
        nodes -= ranges.iter().map(|r| r.end - r.start).sum::<u64>();
        coalesce(&mut ranges);
        for range in ranges {
            for index in range {
                let node = NodeId::new(layer, index);
                let value = eval.evaluate(node);
                out.per_layer_observed[layer - 1] += 1;
                let action = if layer == g {
                    if value >= q_reject {
                        out.detections.push(Detection { leaf: index, value });
                    }
                    Action::Stop
                } else {
                    policy.decide(layer, value)
                };
                if let Some(log) = out.observed_log.as_mut() {
                    log.push(Observation { node, value, action });
                }
                if let Action::Jump(s) = action {
                    if s <= layer || s > g {
                        return Err(Error::NotBelow {
                            node_layer: layer,
                            target: s,
                        });
                    }
                    let r = tree.descendant_range(node, s)?;
                    nodes += r.end - r.start;
                    let list = &mut pending[s - 1];
                    match list.last_mut() {
                        Some(last) if last.end == r.start => last.end = r.end,
                        _ => {
                            list.push(r);
                            entries += 1;
                        }
                    }
                    out.peak_queue_entries = out.peak_queue_entries.max(entries);
                    out.peak_pending_nodes = out.peak_pending_nodes.max(nodes);
                }
            }
        }
    }
    out.total_cost = weighted_cost(tree, &out.per_layer_observed);
    Ok(out)
}

/// Searches the subtrees of the given roots (in the given order).
pub fn search_roots<P, E, I>(
    policy: &P,
    eval: &E,
    q_reject: f64,
    roots: I,
    opts: SearchOptions,
) -> Result<SearchOutcome>
where
    P: Policy + ?Sized,
    E: StatisticEvaluator + ?Sized,
    I: IntoIterator<Item = u64>,
{
    let tree = eval.tree();
    let mut out = SearchOutcome::empty(tree, opts.keep_log);
    for root in roots {
        let sub = search_subtree(policy, eval, q_reject, root, opts)?;
        out.merge(sub, tree);
    }
    Ok(out)
}

/// Runs `strategy` over the whole tree: every layer-1 node is observed, and
/// every observed node's action schedules its descendants in the target
/// layer. Leaves observed with value `>= q_reject` are detections.
pub fn run_search<E>(
    strategy: &Strategy,
    eval: &E,
    q_reject: f64,
    opts: SearchOptions,
) -> Result<SearchOutcome>
where
    E: StatisticEvaluator + ?Sized,
{
    if strategy.tree() != eval.tree() {
        return Err(Error::TreeMismatch);
    }
    search_roots(strategy, eval, q_reject, 0..eval.tree().root_count(), opts)
}

/// Observes every leaf.
pub fn naive_search<E>(eval: &E, q_reject: f64) -> SearchOutcome
where
    E: StatisticEvaluator + ?Sized,
{
    let tree = eval.tree();
    let g = tree.num_layers();
    let n = tree.leaf_count();
    let mut out = SearchOutcome::empty(tree, false);
    for index in 0..n {
        let value = eval.evaluate(NodeId::new(g, index));
        if value >= q_reject {
            out.detections.push(Detection { leaf: index, value });
        }
    }
    out.per_layer_observed[g - 1] = n;
    out.total_cost = weighted_cost(tree, &out.per_layer_observed);
    out
}

#[cfg(test)]
mod tests;
