//! Frequency/drift search grid for photon periodicity, as an 8-ary tree.
//!
//! Layer `l` of a `G`-layer grid uses the blocked power with `2^(G-l)` time
//! blocks, evaluated on a lattice with frequency spacing
//! `2^(G-l) / (o T)` and drift spacing `4^(G-l) / (o^2 T^2)` for
//! oversampling factor `o`. The children of `(w, wd)` sit at
//! `(w + a dw', wd + c dwd')`, with `a` in `{-1/2, 1/2}`, `c` in
//! `{-3/2, -1/2, 1/2, 3/2}` and `dw', dwd'` the next layer's spacings, so
//! the leaves of neighbouring roots tile the plane without gaps.

use alloc::vec::Vec;

use rand::Rng;

use crate::engine::StatisticEvaluator;
use crate::fit::{random_path, PathModel, PathSample};
use crate::stats::{blocked_power_with, simulate_photons, BlockLayout, FreqDrift, PhotonSeries, SignalSpec};
use crate::tree::{NodeId, TreeConfig};
use crate::{Error, Result};

/// Children per node: 2 frequency offsets times 4 drift offsets.
pub const CHILDREN: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub omega_min: f64,
    pub omega_max: f64,
    pub omegadot_min: f64,
    pub omegadot_max: f64,
    pub layers: usize,
    pub oversampling: f64,
    /// Observation span `T` in seconds.
    pub span: f64,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.omega_min,
            self.omega_max,
            self.omegadot_min,
            self.omegadot_max,
            self.oversampling,
            self.span,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("grid parameters must be finite"));
        }
        if self.omega_min <= 0.0 {
            return Err(Error::InvalidParameter("minimum frequency must be positive"));
        }
        if self.omega_max < self.omega_min || self.omegadot_max < self.omegadot_min {
            return Err(Error::InvalidParameter("empty frequency or drift range: no root nodes"));
        }
        if self.layers < 2 || self.layers > 20 {
            return Err(Error::InvalidParameter("grid needs between 2 and 20 layers"));
        }
        if self.oversampling <= 0.0 || self.span <= 0.0 {
            return Err(Error::InvalidParameter("oversampling and span must be positive"));
        }
        Ok(())
    }

    /// Frequency spacing of layer `l`.
    pub fn freq_spacing(&self, layer: usize) -> f64 {
        let scale = (1u64 << (self.layers - layer)) as f64;
        scale / (self.oversampling * self.span)
    }

    /// Drift spacing of layer `l`.
    pub fn drift_spacing(&self, layer: usize) -> f64 {
        let scale = (1u64 << (2 * (self.layers - layer))) as f64;
        scale / (self.oversampling * self.oversampling * self.span * self.span)
    }

    /// Number of root frequencies and root drifts.
    pub fn root_grid(&self) -> Result<(u64, u64)> {
        self.validate()?;
        let count = |range: f64, step: f64| -> Result<u64> {
            let n = (range / step).ceil().max(1.0);
            if n >= u64::MAX as f64 {
                return Err(Error::Overflow);
            }
            Ok(n as u64)
        };
        Ok((
            count(self.omega_max - self.omega_min, self.freq_spacing(1))?,
            count(self.omegadot_max - self.omegadot_min, self.drift_spacing(1))?,
        ))
    }

    /// Tree with one root per root-lattice point, 8 children per node and
    /// unit observation cost in every layer.
    pub fn tree(&self) -> Result<TreeConfig> {
        self.tree_with_costs(alloc::vec![1.0; self.layers])
    }

    pub fn tree_with_costs(&self, costs: Vec<f64>) -> Result<TreeConfig> {
        let (nf, nd) = self.root_grid()?;
        let roots = nf.checked_mul(nd).ok_or(Error::Overflow)?;
        TreeConfig::new(roots, alloc::vec![CHILDREN; self.layers - 1], costs)
    }

    fn root_center(&self, root: u64, nf: u64, nd: u64) -> (f64, f64) {
        let (i_f, i_d) = (root / nd, root % nd);
        let mid_f = 0.5 * (self.omega_min + self.omega_max);
        let mid_d = 0.5 * (self.omegadot_min + self.omegadot_max);
        let off_f = i_f as f64 - 0.5 * (nf - 1) as f64;
        let off_d = i_d as f64 - 0.5 * (nd - 1) as f64;
        (
            mid_f + off_f * self.freq_spacing(1),
            mid_d + off_d * self.drift_spacing(1),
        )
    }

    /// Frequency and drift probed by `node`. Children near the edge of the
    /// search box may probe slightly outside it.
    pub fn node_params(&self, node: NodeId) -> Result<FreqDrift> {
        let (nf, nd) = self.root_grid()?;
        if node.layer == 0 || node.layer > self.layers {
            return Err(Error::LayerOutOfRange {
                layer: node.layer,
                num_layers: self.layers,
            });
        }
        let depth = 3 * (node.layer - 1) as u32;
        let root = node.index >> depth;
        if root >= nf * nd {
            return Err(Error::IndexOutOfRange {
                layer: node.layer,
                index: node.index,
            });
        }
        let (mut omega, mut omega_dot) = self.root_center(root, nf, nd);
        for layer in 2..=node.layer {
            let digit = (node.index >> (3 * (node.layer - layer))) & 7;
            let eta_f = (digit & 1) as f64 - 0.5;
            let eta_d = (digit >> 1) as f64 - 1.5;
            omega += eta_f * self.freq_spacing(layer);
            omega_dot += eta_d * self.drift_spacing(layer);
        }
        Ok(FreqDrift { omega, omega_dot })
    }

    /// Roots whose leaf tiles come within `(df, dd)` of `(omega, omega_dot)`.
    pub fn roots_near(&self, omega: f64, omega_dot: f64, df: f64, dd: f64) -> Result<Vec<u64>> {
        let (nf, nd) = self.root_grid()?;
        let half_f = 0.5 * self.freq_spacing(1);
        let half_d = 0.5 * self.drift_spacing(1);
        let mut out = Vec::new();
        for root in 0..nf * nd {
            let (cf, cd) = self.root_center(root, nf, nd);
            if (cf - omega).abs() <= df + half_f && (cd - omega_dot).abs() <= dd + half_d {
                out.push(root);
            }
        }
        Ok(out)
    }
}

/// Blocked-power statistics of one photon series over a [`GridSpec`] tree.
#[derive(Debug, Clone)]
pub struct PulsarEvaluator {
    grid: GridSpec,
    tree: TreeConfig,
    photons: PhotonSeries,
    /// `layouts[k]` splits the series into `2^k` blocks.
    layouts: Vec<BlockLayout>,
}

impl PulsarEvaluator {
    pub fn new(photons: PhotonSeries, grid: GridSpec) -> Result<Self> {
        let tree = grid.tree()?;
        Self::with_tree(photons, grid, tree)
    }

    /// Uses `tree` (e.g. with non-unit costs), which must have the grid's
    /// shape.
    pub fn with_tree(photons: PhotonSeries, grid: GridSpec, tree: TreeConfig) -> Result<Self> {
        let expected = grid.tree()?;
        if tree.root_count() != expected.root_count() || tree.branching() != expected.branching() {
            return Err(Error::TreeMismatch);
        }
        let rel = (photons.span() - grid.span).abs() / grid.span;
        if rel > 1e-9 {
            return Err(Error::InvalidParameter(
                "photon span does not match the grid span",
            ));
        }
        let layouts = (0..grid.layers as u32)
            .map(|k| BlockLayout::new(&photons, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(PulsarEvaluator {
            grid,
            tree,
            photons,
            layouts,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn photons(&self) -> &PhotonSeries {
        &self.photons
    }

    /// Block exponent used in `layer`: `G - l`.
    pub fn kappa(&self, layer: usize) -> u32 {
        (self.grid.layers - layer) as u32
    }
}

impl StatisticEvaluator for PulsarEvaluator {
    fn tree(&self) -> &TreeConfig {
        &self.tree
    }

    fn evaluate(&self, node: NodeId) -> f64 {
        let params = match self.grid.node_params(node) {
            Ok(p) => p,
            Err(_) => return f64::NAN,
        };
        let layout = &self.layouts[self.kappa(node.layer) as usize];
        blocked_power_with(&self.photons, params, layout)
    }
}

/// Path sampler for training under the global null: every path gets a fresh
/// series of uniform arrivals and a uniformly chosen root-to-leaf path.
#[derive(Debug, Clone)]
pub struct PulsarNullModel {
    grid: GridSpec,
    tree: TreeConfig,
    photons: usize,
}

impl PulsarNullModel {
    pub fn new(grid: GridSpec, photons: usize) -> Result<Self> {
        if photons == 0 {
            return Err(Error::EmptyPhotonSeries);
        }
        let tree = grid.tree()?;
        Ok(PulsarNullModel {
            grid,
            tree,
            photons,
        })
    }

    pub fn with_tree(grid: GridSpec, photons: usize, tree: TreeConfig) -> Result<Self> {
        let mut model = Self::new(grid, photons)?;
        if tree.root_count() != model.tree.root_count() || tree.branching() != model.tree.branching() {
            return Err(Error::TreeMismatch);
        }
        model.tree = tree;
        Ok(model)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn photons(&self) -> usize {
        self.photons
    }
}

impl PathModel for PulsarNullModel {
    fn tree(&self) -> &TreeConfig {
        &self.tree
    }

    fn sample_path<R: Rng + ?Sized>(&self, rng: &mut R) -> PathSample {
        let spec = SignalSpec {
            theta: 0.0,
            freq: FreqDrift {
                omega: self.grid.omega_min,
                omega_dot: 0.0,
            },
            photons: self.photons,
            span: self.grid.span,
        };
        // Parameters were validated when the model was built.
        let photons = simulate_photons(&spec, rng).expect("validated null signal spec");
        let path = random_path(&self.tree, rng);
        let g = self.tree.num_layers();
        let values = path
            .iter()
            .enumerate()
            .map(|(i, &index)| {
                let layer = i + 1;
                let layout = BlockLayout::new(&photons, (g - layer) as u32)
                    .expect("grid layers are bounded");
                let params = self
                    .grid
                    .node_params(NodeId::new(layer, index))
                    .expect("path nodes lie inside the tree");
                blocked_power_with(&photons, params, &layout)
            })
            .collect();
        PathSample { path, values }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn grid() -> GridSpec {
        GridSpec {
            omega_min: 1.0,
            omega_max: 1.01,
            omegadot_min: -5e-11,
            omegadot_max: 0.0,
            layers: 5,
            oversampling: 3.0,
            span: 1000.0,
        }
    }

    #[test]
    fn spacings_and_blocks() {
        let g = grid();
        let t = g.span;
        assert!((g.freq_spacing(5) - 1.0 / (3.0 * t)).abs() < 1e-18);
        assert!((g.freq_spacing(1) - 16.0 / (3.0 * t)).abs() < 1e-15);
        assert!((g.drift_spacing(1) - 256.0 / (9.0 * t * t)).abs() < 1e-18);
        let photons = PhotonSeries::new(vec![1.0, 500.0, 999.0], t).unwrap();
        let ev = PulsarEvaluator::new(photons, g).unwrap();
        assert_eq!(ev.kappa(5), 0);
        assert_eq!(ev.kappa(1), 4);
        assert_eq!(1 << ev.kappa(1), 16);
    }

    #[test]
    fn children_offsets() {
        let g = grid();
        let tree = g.tree().unwrap();
        for layer in 1..5 {
            let parent = NodeId::new(layer, 3.min(tree.nodes_in_layer(layer).unwrap() - 1));
            let p = g.node_params(parent).unwrap();
            let kids = tree.descendant_range(parent, layer + 1).unwrap();
            let mut freqs = vec![];
            let mut drifts = vec![];
            for k in kids {
                let c = g.node_params(NodeId::new(layer + 1, k)).unwrap();
                let df = (c.omega - p.omega) / g.freq_spacing(layer + 1);
                let dd = (c.omega_dot - p.omega_dot) / g.drift_spacing(layer + 1);
                freqs.push((df * 2.0).round() as i64);
                drifts.push((dd * 2.0).round() as i64);
                assert!((df.abs() - 0.5).abs() < 1e-6);
            }
            freqs.sort();
            drifts.sort();
            assert_eq!(freqs, vec![-1, -1, -1, -1, 1, 1, 1, 1]);
            assert_eq!(drifts, vec![-3, -3, -1, -1, 1, 1, 3, 3]);
        }
    }

    #[test]
    fn leaves_tile_the_frequency_axis() {
        let g = grid();
        let tree = g.tree().unwrap();
        let (nf, nd) = g.root_grid().unwrap();
        assert_eq!(nd, 1);
        assert_eq!(tree.root_count(), nf);
        // Leaves with the same drift digit sequence, sorted by frequency, are
        // evenly spaced across root boundaries.
        let mut freqs: Vec<f64> = (0..tree.leaf_count())
            .map(|i| g.node_params(NodeId::new(5, i)).unwrap())
            .filter(|p| (p.omega_dot - g.node_params(NodeId::new(5, 0)).unwrap().omega_dot).abs() < 1e-30)
            .map(|p| p.omega)
            .collect();
        freqs.sort_by(f64::total_cmp);
        assert_eq!(freqs.len() as u64, nf * 16);
        let step = g.freq_spacing(5);
        for w in freqs.windows(2) {
            assert!(((w[1] - w[0]) / step - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn invalid_grids() {
        let mut g = grid();
        g.omega_max = 0.5;
        assert!(g.tree().is_err());
        let mut g = grid();
        g.omegadot_min = 1.0;
        assert!(g.tree().is_err());
        let mut g = grid();
        g.layers = 1;
        assert!(g.tree().is_err());
        let photons = PhotonSeries::new(vec![1.0], 10.0).unwrap();
        assert!(PulsarEvaluator::new(photons, grid()).is_err());
    }

    #[test]
    fn roots_near_covers_truth() {
        let g = grid();
        let tree = g.tree().unwrap();
        let truth = (1.004_321, -2e-11);
        let roots = g.roots_near(truth.0, truth.1, 1.0 / g.span, 1.0 / (g.span * g.span)).unwrap();
        assert!(!roots.is_empty());
        // Every leaf within the radius belongs to one of the returned roots.
        for leaf in 0..tree.leaf_count() {
            let p = g.node_params(NodeId::new(5, leaf)).unwrap();
            if (p.omega - truth.0).abs() <= 1.0 / g.span
                && (p.omega_dot - truth.1).abs() <= 1.0 / (g.span * g.span)
            {
                let root = tree.ancestor(NodeId::new(5, leaf), 1).unwrap().index;
                assert!(roots.contains(&root));
            }
        }
    }

    #[test]
    fn null_paths_look_like_chi2_at_the_leaf() {
        let g = grid();
        let model = PulsarNullModel::new(g, 200).unwrap();
        let paths = crate::fit::sample_paths(&model, 3000, 1);
        let mut leaf: Vec<f64> = paths.iter().map(|p| p.value(5)).collect();
        let d = crate::stats::ks_distance(&mut leaf, crate::stats::chi2_2_cdf);
        assert!(d < 0.04, "{d}");
        // Coarse layers average 16 blocks: same mean, far smaller spread.
        let coarse: Vec<f64> = paths.iter().map(|p| p.value(1)).collect();
        let mean = coarse.iter().sum::<f64>() / coarse.len() as f64;
        let var = coarse.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / coarse.len() as f64;
        assert!((mean - 2.0).abs() < 0.1, "{mean}");
        assert!(var < 1.0, "{var}");
    }
}
