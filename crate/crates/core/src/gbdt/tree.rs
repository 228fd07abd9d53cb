use serde::{Deserialize, Serialize};

use crate::gbdt::binning::BinnedDataset;

/// Internal split node. A child reference `>= 0` points at another node;
/// a negative reference `c` points at leaf `!c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub feature: usize,
    pub threshold_bin: usize,
    /// Rows with `x <= threshold` go left.
    pub threshold: f64,
    /// Direction for missing values.
    pub default_left: bool,
    pub left: i32,
    pub right: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    /// Leaf outputs before learning-rate scaling.
    pub leaves: Vec<f64>,
}

#[inline]
pub(crate) fn leaf_ref(leaf: usize) -> i32 {
    !(leaf as i32)
}

impl Tree {
    pub fn single_leaf(value: f64) -> Self {
        Tree {
            nodes: Vec::new(),
            leaves: vec![value],
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    /// Leaf reached by raw feature values.
    #[inline]
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        if self.nodes.is_empty() {
            return 0;
        }
        let mut at = 0i32;
        while at >= 0 {
            let n = &self.nodes[at as usize];
            let v = x[n.feature];
            let go_left = if v.is_nan() { n.default_left } else { v <= n.threshold };
            at = if go_left { n.left } else { n.right };
        }
        !at as usize
    }

    /// Leaf reached by row `row` of a binned dataset.
    #[inline]
    pub fn leaf_index_binned(&self, data: &BinnedDataset, row: usize) -> usize {
        if self.nodes.is_empty() {
            return 0;
        }
        let mut at = 0i32;
        while at >= 0 {
            let n = &self.nodes[at as usize];
            at = if data.columns[n.feature][row] as usize <= n.threshold_bin {
                n.left
            } else {
                n.right
            };
        }
        !at as usize
    }

    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.leaves[self.leaf_index(x)]
    }

    /// Checks child references and feature indices.
    pub fn validate(&self, n_features: usize) -> Result<(), String> {
        if self.leaves.is_empty() {
            return Err("tree without leaves".into());
        }
        if self.nodes.len() + 1 != self.leaves.len() {
            return Err(format!("{} nodes cannot carry {} leaves", self.nodes.len(), self.leaves.len()));
        }
        let mut seen_leaf = vec![false; self.leaves.len()];
        let mut seen_node = vec![false; self.nodes.len()];
        let mut stack = if self.nodes.is_empty() { vec![leaf_ref(0)] } else { vec![0i32] };
        while let Some(c) = stack.pop() {
            if c >= 0 {
                let i = c as usize;
                let n = self.nodes.get(i).ok_or_else(|| format!("dangling node {i}"))?;
                if std::mem::replace(&mut seen_node[i], true) {
                    return Err(format!("node {i} reachable twice"));
                }
                if n.feature >= n_features {
                    return Err(format!("feature index {} out of range", n.feature));
                }
                if !n.threshold.is_finite() {
                    return Err("non-finite threshold".into());
                }
                stack.push(n.left);
                stack.push(n.right);
            } else {
                let l = !c as usize;
                if l >= self.leaves.len() || std::mem::replace(&mut seen_leaf[l], true) {
                    return Err(format!("bad leaf reference {l}"));
                }
            }
        }
        if seen_leaf.iter().any(|s| !s) || seen_node.iter().any(|s| !s) {
            return Err("unreachable tree parts".into());
        }
        if self.leaves.iter().any(|v| !v.is_finite()) {
            return Err("non-finite leaf value".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stump() -> Tree {
        Tree {
            nodes: vec![Node {
                feature: 1,
                threshold_bin: 0,
                threshold: 2.5,
                default_left: true,
                left: leaf_ref(0),
                right: leaf_ref(1),
            }],
            leaves: vec![-1.0, 3.0],
        }
    }

    #[test]
    fn routes_by_threshold_and_missing() {
        let t = stump();
        assert_eq!(t.predict(&[0.0, 2.5]), -1.0);
        assert_eq!(t.predict(&[0.0, 2.6]), 3.0);
        assert_eq!(t.predict(&[0.0, f64::NAN]), -1.0);
        t.validate(2).unwrap();
        assert!(t.validate(1).is_err());
    }

    #[test]
    fn single_leaf_tree() {
        let t = Tree::single_leaf(0.25);
        assert_eq!(t.predict(&[]), 0.25);
        t.validate(26).unwrap();
    }
}
