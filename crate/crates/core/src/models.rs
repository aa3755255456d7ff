//! Synthetic tree models used to validate fitting and search.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::engine::StatisticEvaluator;
use crate::fit::{random_path, PathModel, PathSample};
use crate::tree::{NodeId, TreeConfig};
use crate::{Error, Result};

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * core::f64::consts::FRAC_1_SQRT_2)
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho.is_finite() && rho > -1.0 && rho < 1.0) {
        return Err(Error::InvalidParameter("rho must lie in (-1, 1)"));
    }
    Ok(())
}

/// Gaussian tree: roots are N(0, 1) and every child is
/// `rho * parent + sqrt(1 - rho^2) * noise`, so every node is N(0, 1) and
/// values along a path form an AR(1) chain with correlation `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTree {
    tree: TreeConfig,
    rho: f64,
}

impl GaussianTree {
    pub fn new(tree: TreeConfig, rho: f64) -> Result<Self> {
        check_rho(rho)?;
        Ok(GaussianTree { tree, rho })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Simulates every node of the tree; meant for small trees.
    pub fn sample_realization<R: Rng + ?Sized>(&self, rng: &mut R) -> TreeRealization {
        let innovation = (1.0 - self.rho * self.rho).sqrt();
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(self.tree.num_layers());
        values.push(
            (0..self.tree.root_count())
                .map(|_| rng.sample(StandardNormal))
                .collect(),
        );
        for &b in self.tree.branching() {
            let parents = values.last().map_or(&[][..], Vec::as_slice);
            let mut next = Vec::with_capacity(parents.len() * b as usize);
            for &p in parents {
                for _ in 0..b {
                    let z: f64 = rng.sample(StandardNormal);
                    next.push(self.rho * p + innovation * z);
                }
            }
            values.push(next);
        }
        TreeRealization {
            tree: self.tree.clone(),
            values,
        }
    }
}

impl PathModel for GaussianTree {
    fn tree(&self) -> &TreeConfig {
        &self.tree
    }

    fn sample_path<R: Rng + ?Sized>(&self, rng: &mut R) -> PathSample {
        let path = random_path(&self.tree, rng);
        let innovation = (1.0 - self.rho * self.rho).sqrt();
        let mut values = Vec::with_capacity(path.len());
        let mut x: f64 = rng.sample(StandardNormal);
        values.push(x);
        for _ in 1..path.len() {
            let z: f64 = rng.sample(StandardNormal);
            x = self.rho * x + innovation * z;
            values.push(x);
        }
        PathSample { path, values }
    }
}

/// [`GaussianTree`] discretized to a finite set of levels.
///
/// `[-half_width, half_width]` is cut into equal cells (the outer two extend
/// to infinity); a cell is represented by its midpoint. Root levels take the
/// N(0, 1) cell masses and a child of a node at level `z` takes the
/// N(rho z, 1 - rho^2) cell masses. Conditional laws are explicit, which is
/// what the exact dynamic-programming oracle needs.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteGaussianChain {
    tree: TreeConfig,
    rho: f64,
    half_width: f64,
    levels: Vec<f64>,
    initial: Vec<f64>,
    /// Row-major `K x K` transition probabilities.
    transition: Vec<f64>,
    initial_cdf: Vec<f64>,
    transition_cdf: Vec<f64>,
}

fn cell_masses(mean: f64, sd: f64, edges: &[f64]) -> Vec<f64> {
    let mut cdf_prev = 0.0;
    let mut out = Vec::with_capacity(edges.len() + 1);
    for &e in edges {
        let c = normal_cdf((e - mean) / sd);
        out.push(c - cdf_prev);
        cdf_prev = c;
    }
    out.push(1.0 - cdf_prev);
    out
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = p
        .iter()
        .map(|&x| {
            acc += x;
            acc
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    out
}

impl DiscreteGaussianChain {
    pub fn new(tree: TreeConfig, rho: f64, num_levels: usize, half_width: f64) -> Result<Self> {
        check_rho(rho)?;
        if num_levels < 2 {
            return Err(Error::InvalidParameter("at least 2 levels are required"));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidParameter("half width must be positive"));
        }
        let k = num_levels;
        let h = 2.0 * half_width / k as f64;
        let levels: Vec<f64> = (0..k).map(|i| -half_width + (i as f64 + 0.5) * h).collect();
        let edges: Vec<f64> = (1..k).map(|i| -half_width + i as f64 * h).collect();
        let initial = cell_masses(0.0, 1.0, &edges);
        let sd = (1.0 - rho * rho).sqrt();
        let mut transition = Vec::with_capacity(k * k);
        let mut transition_cdf = Vec::with_capacity(k * k);
        for &z in &levels {
            let row = cell_masses(rho * z, sd, &edges);
            transition_cdf.extend(cumulative(&row));
            transition.extend(row);
        }
        let initial_cdf = cumulative(&initial);
        Ok(DiscreteGaussianChain {
            tree,
            rho,
            half_width,
            levels,
            initial,
            transition,
            initial_cdf,
            transition_cdf,
        })
    }

    pub fn tree(&self) -> &TreeConfig {
        &self.tree
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// Transition probability from level `from` to level `to`.
    pub fn transition(&self, from: usize, to: usize) -> f64 {
        self.transition[from * self.levels.len() + to]
    }

    /// Level index whose cell contains `x`.
    pub fn level_of(&self, x: f64) -> usize {
        let k = self.levels.len();
        let h = 2.0 * self.half_width / k as f64;
        let pos = ((x + self.half_width) / h).floor();
        if pos.is_nan() || pos < 0.0 {
            0
        } else {
            (pos as usize).min(k - 1)
        }
    }

    /// `E[f(X_child) | X_parent = level i]` for every `i`.
    pub fn step_expectation(&self, f: &[f64]) -> Vec<f64> {
        let k = self.levels.len();
        (0..k)
            .map(|i| {
                self.transition[i * k..(i + 1) * k]
                    .iter()
                    .zip(f)
                    .map(|(p, v)| p * v)
                    .sum()
            })
            .collect()
    }

    fn draw(cdf: &[f64], u: f64) -> usize {
        cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
    }

    fn draw_root<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        Self::draw(&self.initial_cdf, rng.random::<f64>())
    }

    fn draw_child<R: Rng + ?Sized>(&self, parent: usize, rng: &mut R) -> usize {
        let k = self.levels.len();
        Self::draw(
            &self.transition_cdf[parent * k..(parent + 1) * k],
            rng.random::<f64>(),
        )
    }

    pub fn sample_realization<R: Rng + ?Sized>(&self, rng: &mut R) -> TreeRealization {
        let mut idx: Vec<usize> = (0..self.tree.root_count())
            .map(|_| self.draw_root(rng))
            .collect();
        let mut values = Vec::with_capacity(self.tree.num_layers());
        values.push(idx.iter().map(|&i| self.levels[i]).collect());
        for &b in self.tree.branching() {
            let mut next = Vec::with_capacity(idx.len() * b as usize);
            for &p in &idx {
                for _ in 0..b {
                    next.push(self.draw_child(p, rng));
                }
            }
            values.push(next.iter().map(|&i| self.levels[i]).collect());
            idx = next;
        }
        TreeRealization {
            tree: self.tree.clone(),
            values,
        }
    }
}

impl PathModel for DiscreteGaussianChain {
    fn tree(&self) -> &TreeConfig {
        &self.tree
    }

    fn sample_path<R: Rng + ?Sized>(&self, rng: &mut R) -> PathSample {
        let path = random_path(&self.tree, rng);
        let mut level = self.draw_root(rng);
        let mut values = Vec::with_capacity(path.len());
        values.push(self.levels[level]);
        for _ in 1..path.len() {
            level = self.draw_child(level, rng);
            values.push(self.levels[level]);
        }
        PathSample { path, values }
    }
}

/// Every node value of a (small) tree, stored layer by layer.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeRealization {
    tree: TreeConfig,
    values: Vec<Vec<f64>>,
}

impl TreeRealization {
    pub fn new(tree: TreeConfig, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != tree.num_layers() {
            return Err(Error::LengthMismatch {
                expected: tree.num_layers(),
                found: values.len(),
            });
        }
        for (i, layer) in values.iter().enumerate() {
            let expected = tree.nodes_in_layer(i + 1)?;
            if layer.len() as u64 != expected {
                return Err(Error::LengthMismatch {
                    expected: expected as usize,
                    found: layer.len(),
                });
            }
        }
        Ok(TreeRealization { tree, values })
    }

    pub fn values(&self, layer: usize) -> &[f64] {
        &self.values[layer - 1]
    }
}

impl StatisticEvaluator for TreeRealization {
    fn tree(&self) -> &TreeConfig {
        &self.tree
    }

    fn evaluate(&self, node: NodeId) -> f64 {
        self.values[node.layer - 1][node.index as usize]
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash-based evaluator for huge trees: every node carries independent
/// chi-squared(2) noise, and the ancestors of a few chosen leaves (the
/// peaks) get a per-layer boost. Values are a pure function of
/// `(seed, node)`, so nothing is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsePeaks {
    tree: TreeConfig,
    seed: u64,
    peaks: Vec<u64>,
    boost: Vec<f64>,
}

impl SparsePeaks {
    /// `boost[l - 1]` is added at layer `l` on every ancestor of a peak leaf.
    pub fn new(tree: TreeConfig, seed: u64, peaks: Vec<u64>, boost: Vec<f64>) -> Result<Self> {
        if boost.len() != tree.num_layers() {
            return Err(Error::LengthMismatch {
                expected: tree.num_layers(),
                found: boost.len(),
            });
        }
        if peaks.iter().any(|&p| p >= tree.leaf_count()) {
            return Err(Error::IndexOutOfRange {
                layer: tree.num_layers(),
                index: peaks.iter().copied().max().unwrap_or(0),
            });
        }
        Ok(SparsePeaks {
            tree,
            seed,
            peaks,
            boost,
        })
    }

    pub fn peaks(&self) -> &[u64] {
        &self.peaks
    }

    fn noise(&self, node: NodeId) -> f64 {
        let h = splitmix64(self.seed ^ splitmix64(node.index ^ ((node.layer as u64) << 58)));
        // Uniform in (0, 1], then the chi-squared(2) quantile transform.
        let u = ((h >> 11) as f64 + 1.0) / (1u64 << 53) as f64;
        -2.0 * u.ln()
    }
}

impl StatisticEvaluator for SparsePeaks {
    fn tree(&self) -> &TreeConfig {
        &self.tree
    }

    fn evaluate(&self, node: NodeId) -> f64 {
        let g = self.tree.num_layers();
        let width = self.tree.span(node.layer, g).unwrap_or(1);
        let boosted = self.peaks.iter().any(|&p| p / width == node.index);
        let base = self.noise(node);
        if boosted {
            base + self.boost[node.layer - 1]
        } else {
            base
        }
    }
}
