//! Layered hypothesis tree with positional node addressing.
//!
//! Layers are numbered `1..=G` (1 is the coarsest). Node indices are zero
//! based and contiguous within a layer; the children of node `v` in layer `l`
//! are `[v * b[l], (v + 1) * b[l])`. No links are stored, so navigating a tree
//! with billions of leaves costs O(1) memory.

use alloc::vec::Vec;
use core::ops::Range;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TreeConfig {
    root_count: u64,
    branching: Vec<u64>,
    costs: Vec<f64>,
    layer_sizes: Vec<u64>,
}

/// A node address: 1-based layer, 0-based index within the layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    pub layer: usize,
    pub index: u64,
}

impl NodeId {
    pub const fn new(layer: usize, index: u64) -> Self {
        NodeId { layer, index }
    }
}

impl TreeConfig {
    /// `branching[l - 1]` is the number of children per node going from layer
    /// `l` to `l + 1`; `costs[l - 1]` is the cost of one observation in layer
    /// `l`. The layer count is `costs.len()`.
    pub fn new(root_count: u64, branching: Vec<u64>, costs: Vec<f64>) -> Result<Self> {
        let num_layers = costs.len();
        if num_layers < 2 {
            return Err(Error::InvalidTree("at least 2 layers are required"));
        }
        if branching.len() != num_layers - 1 {
            return Err(Error::LengthMismatch {
                expected: num_layers - 1,
                found: branching.len(),
            });
        }
        if root_count == 0 {
            return Err(Error::InvalidTree("root count must be positive"));
        }
        if branching.iter().any(|&b| b == 0) {
            return Err(Error::InvalidTree("branching factors must be positive"));
        }
        if costs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidTree("costs must be finite and nonnegative"));
        }
        let mut layer_sizes = Vec::with_capacity(num_layers);
        layer_sizes.push(root_count);
        for &b in &branching {
            let prev = *layer_sizes.last().unwrap_or(&root_count);
            layer_sizes.push(prev.checked_mul(b).ok_or(Error::Overflow)?);
        }
        Ok(TreeConfig {
            root_count,
            branching,
            costs,
            layer_sizes,
        })
    }

    /// Same branching factor and unit cost in every layer.
    pub fn uniform(num_layers: usize, root_count: u64, branching: u64) -> Result<Self> {
        let branching = alloc::vec![branching; num_layers.saturating_sub(1)];
        Self::new(root_count, branching, alloc::vec![1.0; num_layers])
    }

    pub fn num_layers(&self) -> usize {
        self.costs.len()
    }

    pub fn root_count(&self) -> u64 {
        self.root_count
    }

    pub fn branching(&self) -> &[u64] {
        &self.branching
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn cost(&self, layer: usize) -> Result<f64> {
        self.check_layer(layer)?;
        Ok(self.costs[layer - 1])
    }

    /// Children per node going from `layer` to `layer + 1`.
    pub fn branching_at(&self, layer: usize) -> Result<u64> {
        if layer == 0 || layer >= self.num_layers() {
            return Err(Error::LayerOutOfRange {
                layer,
                num_layers: self.num_layers() - 1,
            });
        }
        Ok(self.branching[layer - 1])
    }

    pub fn nodes_in_layer(&self, layer: usize) -> Result<u64> {
        self.check_layer(layer)?;
        Ok(self.layer_sizes[layer - 1])
    }

    /// Number of hypotheses a naive search tests.
    pub fn leaf_count(&self) -> u64 {
        self.layer_sizes[self.num_layers() - 1]
    }

    /// Number of descendants in layer `to` of any single node in layer
    /// `from` (1 when `from == to`).
    pub fn span(&self, from: usize, to: usize) -> Result<u64> {
        self.check_layer(from)?;
        self.check_layer(to)?;
        if to < from {
            return Err(Error::NotBelow {
                node_layer: from,
                target: to,
            });
        }
        self.branching[from - 1..to - 1]
            .iter()
            .try_fold(1u64, |acc, &b| acc.checked_mul(b))
            .ok_or(Error::Overflow)
    }

    /// Contiguous index interval of the descendants of `node` in layer
    /// `target`.
    pub fn descendant_range(&self, node: NodeId, target: usize) -> Result<Range<u64>> {
        self.check_node(node)?;
        self.check_layer(target)?;
        if target <= node.layer {
            return Err(Error::NotBelow {
                node_layer: node.layer,
                target,
            });
        }
        let width = self.span(node.layer, target)?;
        // Valid nodes always map inside the (already checked) target layer.
        let start = node.index * width;
        Ok(start..start + width)
    }

    /// Ancestor of `node` in layer `layer <= node.layer`.
    pub fn ancestor(&self, node: NodeId, layer: usize) -> Result<NodeId> {
        self.check_node(node)?;
        let width = self.span(layer, node.layer)?;
        Ok(NodeId::new(layer, node.index / width))
    }

    pub fn check_layer(&self, layer: usize) -> Result<()> {
        if layer == 0 || layer > self.num_layers() {
            return Err(Error::LayerOutOfRange {
                layer,
                num_layers: self.num_layers(),
            });
        }
        Ok(())
    }

    pub fn check_node(&self, node: NodeId) -> Result<()> {
        if node.index >= self.nodes_in_layer(node.layer)? {
            return Err(Error::IndexOutOfRange {
                layer: node.layer,
                index: node.index,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn binary(n1: u64, layers: usize) -> TreeConfig {
        TreeConfig::uniform(layers, n1, 2).unwrap()
    }

    #[test]
    fn layer_sizes() {
        let t = binary(4, 5);
        assert_eq!(t.nodes_in_layer(1).unwrap(), 4);
        assert_eq!(t.nodes_in_layer(5).unwrap(), 64);
        assert_eq!(t.leaf_count(), 64);
        assert!(t.nodes_in_layer(0).is_err());
        assert!(t.nodes_in_layer(6).is_err());

        let octo = TreeConfig::uniform(5, 7, 8).unwrap();
        assert_eq!(octo.nodes_in_layer(5).unwrap(), 7 * 8u64.pow(4));
    }

    #[test]
    fn descendant_examples() {
        let t = binary(4, 5);
        assert_eq!(t.descendant_range(NodeId::new(2, 3), 4).unwrap(), 12..16);
        assert_eq!(t.descendant_range(NodeId::new(3, 5), 4).unwrap(), 10..12);
        assert!(matches!(
            t.descendant_range(NodeId::new(3, 1), 3),
            Err(Error::NotBelow { .. })
        ));
        assert!(t.descendant_range(NodeId::new(2, 8), 3).is_err());

        let octo = TreeConfig::uniform(5, 1, 8).unwrap();
        assert_eq!(octo.descendant_range(NodeId::new(1, 0), 3).unwrap(), 0..64);
    }

    #[test]
    fn invalid_configs() {
        assert!(TreeConfig::new(1, vec![], vec![1.0]).is_err());
        assert!(TreeConfig::new(0, vec![2], vec![1.0, 1.0]).is_err());
        assert!(TreeConfig::new(1, vec![0], vec![1.0, 1.0]).is_err());
        assert!(TreeConfig::new(1, vec![2], vec![1.0, -1.0]).is_err());
        assert!(TreeConfig::new(1, vec![2, 2], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn overflow_is_an_error() {
        assert_eq!(
            TreeConfig::uniform(3, u64::MAX / 2, 4),
            Err(Error::Overflow)
        );
        // 2^63 leaves is representable.
        let big = TreeConfig::uniform(64, 1, 2).unwrap();
        assert_eq!(big.leaf_count(), 1u64 << 63);
    }

    fn arb_tree() -> impl Strategy<Value = TreeConfig> {
        (2usize..5, 1u64..5).prop_flat_map(|(g, n1)| {
            proptest::collection::vec(1u64..5, g - 1).prop_map(move |b| {
                TreeConfig::new(n1, b, vec![1.0; g]).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn ranges_partition_lower_layers(t in arb_tree()) {
            let g = t.num_layers();
            for l in 1..g {
                for s in l + 1..=g {
                    let mut next = 0;
                    for v in 0..t.nodes_in_layer(l).unwrap() {
                        let r = t.descendant_range(NodeId::new(l, v), s).unwrap();
                        prop_assert_eq!(r.start, next);
                        prop_assert_eq!(r.end - r.start, t.span(l, s).unwrap());
                        next = r.end;
                    }
                    prop_assert_eq!(next, t.nodes_in_layer(s).unwrap());
                }
            }
        }

        #[test]
        fn ranges_nest_and_compose(t in arb_tree(), pick in any::<u64>()) {
            let g = t.num_layers();
            let root = NodeId::new(1, pick % t.root_count());
            for mid in 2..=g {
                let mids = t.descendant_range(root, mid).unwrap();
                let direct_leaves = if mid < g {
                    Some(t.descendant_range(root, g).unwrap())
                } else {
                    None
                };
                for m in mids.clone() {
                    let node = NodeId::new(mid, m);
                    prop_assert_eq!(t.ancestor(node, 1).unwrap(), root);
                    if let Some(direct) = &direct_leaves {
                        let via = t.descendant_range(node, g).unwrap();
                        prop_assert!(direct.start <= via.start && via.end <= direct.end);
                    }
                }
                if let Some(direct) = direct_leaves {
                    // Union over the intermediate layer equals the direct range.
                    let first = t.descendant_range(NodeId::new(mid, mids.start), g).unwrap();
                    let last = t.descendant_range(NodeId::new(mid, mids.end - 1), g).unwrap();
                    prop_assert_eq!(first.start..last.end, direct);
                }
            }
        }
    }
}
