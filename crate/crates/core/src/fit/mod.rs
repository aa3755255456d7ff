//! Strategy fitting by approximate dynamic programming over sampled paths.
//!
//! A strategy maps the value observed at a node in layer `l` to an
//! [`Action`]: stop exploring the subtree, or observe every descendant in a
//! deeper layer `s`. Fitting runs backward from the leaves. For each layer
//! and each candidate action, the continuation value is regressed
//! (monotonically, see [`crate::isotonic`]) on the layer's observed value,
//! using per-path payoffs rescaled by descendant counts so they estimate the
//! payoff of the whole subtree without bias.

use alloc::vec::Vec;

use rand::Rng;

use crate::isotonic::{MonotoneFn, SortedAbscissae};
use crate::stats::chi2_2_quantile;
use crate::tree::TreeConfig;
use crate::{Error, Result};

#[cfg(test)]
mod tests;

/// Decision taken after observing a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    /// Stop searching the subtree below the node.
    Stop,
    /// Observe all descendants in the given (deeper) layer.
    Jump(usize),
}

impl Action {
    /// `0` for [`Action::Stop`], the target layer otherwise.
    pub fn code(self) -> usize {
        match self {
            Action::Stop => 0,
            Action::Jump(s) => s,
        }
    }

    pub fn from_code(code: usize) -> Self {
        if code == 0 {
            Action::Stop
        } else {
            Action::Jump(code)
        }
    }
}

/// Anything that picks an action from a layer and an observed value.
pub trait Policy {
    fn decide(&self, layer: usize, x: f64) -> Action;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn decide(&self, layer: usize, x: f64) -> Action {
        (**self).decide(layer, x)
    }
}

/// Picks the action with the largest continuation value. `values` yields
/// `(s, Q_s)` for the jump actions; stopping is worth 0.
///
/// Ties: stop whenever it attains the maximum and `lambda > 0`, otherwise the
/// deepest maximizing layer. With `lambda = 0` every observed node therefore
/// keeps searching, which reproduces the exhaustive search.
pub fn choose_action(values: impl Iterator<Item = (usize, f64)>, lambda: f64) -> Action {
    let mut best: Option<(usize, f64)> = None;
    for (s, q) in values {
        match best {
            Some((_, b)) if q < b => {}
            _ => best = Some((s, q)),
        }
    }
    match best {
        None => Action::Stop,
        Some((_, q)) if q < 0.0 || q.is_nan() => Action::Stop,
        Some((_, q)) if q == 0.0 && lambda > 0.0 => Action::Stop,
        Some((s, _)) => Action::Jump(s),
    }
}

/// A fitted layer-wise search strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    tree: TreeConfig,
    lambda: f64,
    q_train: f64,
    /// `continuation[l - 1][s - l - 1]` is the fitted continuation value of
    /// jumping from layer `l` to layer `s`.
    continuation: Vec<Vec<MonotoneFn>>,
    seed: u64,
    num_paths: usize,
}

impl Strategy {
    pub fn from_parts(
        tree: TreeConfig,
        lambda: f64,
        q_train: f64,
        continuation: Vec<Vec<MonotoneFn>>,
        seed: u64,
        num_paths: usize,
    ) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidParameter("lambda must be finite and >= 0"));
        }
        if !q_train.is_finite() {
            return Err(Error::InvalidParameter("q_train must be finite"));
        }
        let g = tree.num_layers();
        if continuation.len() != g - 1 {
            return Err(Error::LengthMismatch {
                expected: g - 1,
                found: continuation.len(),
            });
        }
        for (i, actions) in continuation.iter().enumerate() {
            let layer = i + 1;
            if actions.len() != g - layer {
                return Err(Error::LengthMismatch {
                    expected: g - layer,
                    found: actions.len(),
                });
            }
        }
        Ok(Strategy {
            tree,
            lambda,
            q_train,
            continuation,
            seed,
            num_paths,
        })
    }

    pub fn tree(&self) -> &TreeConfig {
        &self.tree
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn q_train(&self) -> f64 {
        self.q_train
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_paths(&self) -> usize {
        self.num_paths
    }

    /// Fitted continuation value for jumping from `layer` to `target`.
    pub fn continuation(&self, layer: usize, target: usize) -> Option<&MonotoneFn> {
        if layer == 0 || target <= layer {
            return None;
        }
        self.continuation.get(layer - 1)?.get(target - layer - 1)
    }

    /// All fitted functions of `layer`, indexed by `target - layer - 1`.
    pub fn layer_functions(&self, layer: usize) -> &[MonotoneFn] {
        layer
            .checked_sub(1)
            .and_then(|i| self.continuation.get(i))
            .map_or(&[], Vec::as_slice)
    }

    /// Splits the real line into the intervals on which `decide(layer, .)`
    /// is constant. Each entry is `(start, action)`; the first starts at
    /// negative infinity.
    pub fn decision_regions(&self, layer: usize) -> Vec<(f64, Action)> {
        let mut cuts: Vec<f64> = self
            .layer_functions(layer)
            .iter()
            .flat_map(|f| f.breakpoints().iter().copied())
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut regions = alloc::vec![(f64::NEG_INFINITY, self.decide(layer, f64::NEG_INFINITY))];
        for x in cuts {
            let action = self.decide(layer, x);
            if regions.last().map(|r| r.1) != Some(action) {
                regions.push((x, action));
            }
        }
        regions
    }
}

impl Policy for Strategy {
    fn decide(&self, layer: usize, x: f64) -> Action {
        let fns = self.layer_functions(layer);
        choose_action(
            fns.iter()
                .enumerate()
                .map(|(i, f)| (layer + 1 + i, f.evaluate(x))),
            self.lambda,
        )
    }
}

/// Observed values along one root-to-leaf path, one per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    /// Node index per layer (`path[l - 1]` lies in layer `l`).
    pub path: Vec<u64>,
    pub values: Vec<f64>,
}

impl PathSample {
    /// Value in layer `l` (1-based).
    pub fn value(&self, layer: usize) -> f64 {
        self.values[layer - 1]
    }
}

/// A generative model that can simulate the statistics along one uniformly
/// chosen root-to-leaf path.
pub trait PathModel {
    fn tree(&self) -> &TreeConfig;

    fn sample_path<R: Rng + ?Sized>(&self, rng: &mut R) -> PathSample;
}

/// Uniform random root-to-leaf path: uniform root, then a uniform child at
/// every step.
pub fn random_path<R: Rng + ?Sized>(tree: &TreeConfig, rng: &mut R) -> Vec<u64> {
    let mut path = Vec::with_capacity(tree.num_layers());
    let mut v = rng.random_range(0..tree.root_count());
    path.push(v);
    for &b in tree.branching() {
        v = v * b + rng.random_range(0..b);
        path.push(v);
    }
    path
}

/// Path `i` is drawn from stream `i` of `seed`, so any partition of the index
/// range across workers reproduces the same samples.
pub fn sample_paths<M: PathModel>(model: &M, count: usize, seed: u64) -> Vec<PathSample> {
    (0..count)
        .map(|i| model.sample_path(&mut crate::stream_rng(seed, i as u64)))
        .collect()
}

/// Path payoff of the node on `sample`'s path in `layer`, when `policy` is
/// followed from that node on.
///
/// Leaf exceedances are scaled by the number of leaves below the node and the
/// cost of each observed path node in layer `l*` by the number of layer-`l*`
/// descendants, which makes the average over uniform paths equal to the
/// subtree payoff.
pub fn path_payoff<P: Policy + ?Sized>(
    sample: &PathSample,
    policy: &P,
    tree: &TreeConfig,
    lambda: f64,
    q: f64,
    layer: usize,
) -> Result<f64> {
    let g = tree.num_layers();
    tree.check_layer(layer)?;
    if layer >= g {
        return Err(Error::LayerOutOfRange {
            layer,
            num_layers: g - 1,
        });
    }
    if sample.values.len() != g {
        return Err(Error::LengthMismatch {
            expected: g,
            found: sample.values.len(),
        });
    }
    let mut payoff = 0.0;
    let mut current = layer;
    loop {
        if current == g {
            if sample.value(g) >= q {
                payoff += tree.span(layer, g)? as f64;
            }
            break;
        }
        match policy.decide(current, sample.value(current)) {
            Action::Stop => break,
            Action::Jump(s) => {
                if s <= current || s > g {
                    return Err(Error::NotBelow {
                        node_layer: current,
                        target: s,
                    });
                }
                payoff -= lambda * tree.span(layer, s)? as f64 * tree.cost(s)?;
                current = s;
            }
        }
    }
    Ok(payoff)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub tree: TreeConfig,
    pub lambda: f64,
    pub q_train: f64,
    /// Recorded in the strategy; fitting itself is deterministic.
    pub seed: u64,
}

/// Non-fatal problems found while fitting.
#[derive(Debug, Clone, PartialEq)]
pub enum FitWarning {
    /// Every path had the same value in this layer; its continuation values
    /// are constants.
    DegenerateLayer { layer: usize },
    /// No path reached `q_train` in the leaf layer, so the fit carries no
    /// information about detections.
    NoExceedances,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub strategy: Strategy,
    pub warnings: Vec<FitWarning>,
    /// Mean path payoff at the root layer (per root node).
    pub mean_root_payoff: f64,
}

/// Fits continuation values layer by layer, from `G - 1` up to 1.
pub fn fit_strategy(paths: &[PathSample], cfg: &FitConfig) -> Result<FitOutcome> {
    let tree = &cfg.tree;
    let g = tree.num_layers();
    if paths.len() < 2 {
        return Err(Error::TooFewPaths { found: paths.len() });
    }
    if !(cfg.lambda.is_finite() && cfg.lambda >= 0.0) {
        return Err(Error::InvalidParameter("lambda must be finite and >= 0"));
    }
    if !cfg.q_train.is_finite() {
        return Err(Error::InvalidParameter("q_train must be finite"));
    }
    for (index, p) in paths.iter().enumerate() {
        if p.values.len() != g {
            return Err(Error::LengthMismatch {
                expected: g,
                found: p.values.len(),
            });
        }
        if p.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "path statistic",
                index,
            });
        }
    }

    let m = paths.len();
    let mut warnings = Vec::new();
    // payoffs[l - 1][i]: path payoff of path i's layer-l node.
    let mut payoffs: Vec<Vec<f64>> = alloc::vec![Vec::new(); g];
    payoffs[g - 1] = paths
        .iter()
        .map(|p| if p.value(g) >= cfg.q_train { 1.0 } else { 0.0 })
        .collect();
    if payoffs[g - 1].iter().all(|&p| p == 0.0) {
        warnings.push(FitWarning::NoExceedances);
    }

    let mut continuation: Vec<Vec<MonotoneFn>> = alloc::vec![Vec::new(); g - 1];
    let mut targets = alloc::vec![0.0; m];
    for layer in (1..g).rev() {
        let xs: Vec<f64> = paths.iter().map(|p| p.value(layer)).collect();
        let sorted = SortedAbscissae::new(&xs)?;
        if sorted.distinct_count() == 1 {
            warnings.push(FitWarning::DegenerateLayer { layer });
        }
        let mut fns = Vec::with_capacity(g - layer);
        for s in layer + 1..=g {
            let width = tree.span(layer, s)? as f64;
            let cost = cfg.lambda * tree.cost(s)?;
            for (t, p) in targets.iter_mut().zip(&payoffs[s - 1]) {
                *t = width * (p - cost);
            }
            fns.push(sorted.fit_unweighted(&targets)?);
        }

        let mut layer_payoff = Vec::with_capacity(m);
        for (i, &x) in xs.iter().enumerate() {
            let action = choose_action(
                fns.iter()
                    .enumerate()
                    .map(|(k, f)| (layer + 1 + k, f.evaluate(x))),
                cfg.lambda,
            );
            layer_payoff.push(match action {
                Action::Stop => 0.0,
                Action::Jump(s) => {
                    tree.span(layer, s)? as f64 * (payoffs[s - 1][i] - cfg.lambda * tree.cost(s)?)
                }
            });
        }
        payoffs[layer - 1] = layer_payoff;
        continuation[layer - 1] = fns;
    }

    let mean_root_payoff = payoffs[0].iter().sum::<f64>() / m as f64;
    let strategy = Strategy::from_parts(
        tree.clone(),
        cfg.lambda,
        cfg.q_train,
        continuation,
        cfg.seed,
        m,
    )?;
    Ok(FitOutcome {
        strategy,
        warnings,
        mean_root_payoff,
    })
}

/// Training threshold for a target cost fraction `beta` of the naive search:
/// the `1 - beta` quantile of the chi-squared(2) null law.
pub fn threshold_rule_of_thumb(beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParameter("beta must lie in (0, 1)"));
    }
    chi2_2_quantile(1.0 - beta)
}
