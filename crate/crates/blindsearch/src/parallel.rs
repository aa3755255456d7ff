//! Deterministic parallel drivers.
//!
//! Work is split by index (path number, root number, simulation number) and
//! every item draws from its own RNG stream, so results do not depend on the
//! number of worker threads. Outcomes are merged in index order.

use anyhow::Context;
use blindsearch_core::engine::{search_subtree, Detection, SearchOptions, SearchOutcome, StatisticEvaluator};
use blindsearch_core::fit::{PathModel, PathSample, Strategy};
use blindsearch_core::tree::NodeId;
use blindsearch_core::{stream_rng, Error};
use rayon::prelude::*;

/// Caps the worker count; `0` or unset means one worker per core.
pub const THREADS_ENV: &str = "BLINDSEARCH_THREADS";

pub fn thread_count() -> anyhow::Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => {
            let n: usize = v
                .trim()
                .parse()
                .with_context(|| format!("{THREADS_ENV} must be a non-negative integer, got {v:?}"))?;
            Ok(if n == 0 { default_threads() } else { n })
        }
        _ => Ok(default_threads()),
    }
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Runs `f` inside a pool sized by [`thread_count`].
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count()?)
        .build()
        .context("building worker pool")?;
    Ok(pool.install(f))
}

/// Same samples as [`blindsearch_core::fit::sample_paths`], computed in
/// parallel.
pub fn sample_paths<M: PathModel + Sync>(model: &M, count: usize, seed: u64) -> Vec<PathSample> {
    (0..count)
        .into_par_iter()
        .map(|i| model.sample_path(&mut stream_rng(seed, i as u64)))
        .collect()
}

/// Parallel version of [`blindsearch_core::engine::run_search`].
pub fn run_search<E>(
    strategy: &Strategy,
    eval: &E,
    q_reject: f64,
    opts: SearchOptions,
) -> Result<SearchOutcome, Error>
where
    E: StatisticEvaluator + Sync + ?Sized,
{
    let tree = eval.tree();
    if strategy.tree() != tree {
        return Err(Error::TreeMismatch);
    }
    let parts: Vec<SearchOutcome> = (0..tree.root_count())
        .into_par_iter()
        .map(|root| search_subtree(strategy, eval, q_reject, root, opts))
        .collect::<Result<_, _>>()?;
    let mut out = SearchOutcome::empty(tree, opts.keep_log);
    for part in parts {
        out.merge(part, tree);
    }
    Ok(out)
}

/// Parallel version of [`blindsearch_core::engine::naive_search`].
pub fn naive_search<E>(eval: &E, q_reject: f64) -> SearchOutcome
where
    E: StatisticEvaluator + Sync + ?Sized,
{
    let tree = eval.tree();
    let g = tree.num_layers();
    let per_root = tree.span(1, g).expect("tree spans are checked at construction");
    let detections: Vec<Vec<Detection>> = (0..tree.root_count())
        .into_par_iter()
        .map(|root| {
            (root * per_root..(root + 1) * per_root)
                .filter_map(|leaf| {
                    let value = eval.evaluate(NodeId::new(g, leaf));
                    (value >= q_reject).then_some(Detection { leaf, value })
                })
                .collect()
        })
        .collect();
    let mut out = SearchOutcome::empty(tree, false);
    out.detections = detections.into_iter().flatten().collect();
    out.per_layer_observed[g - 1] = tree.leaf_count();
    out.total_cost = tree.costs()[g - 1] * tree.leaf_count() as f64;
    out
}
