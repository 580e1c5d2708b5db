//! Flat binary regression trees.

use serde::{Deserialize, Serialize};

/// Node arrays indexed by node id; node 0 is the root.
/// `feature[i] < 0` marks a leaf. Rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Tree {
    pub feature: Vec<i32>,
    pub threshold: Vec<f64>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    pub value: Vec<f64>,
    /// Training rows that reached the node.
    pub n_rows: Vec<u32>,
}

impl Tree {
    pub fn leaf(value: f64, n_rows: u32) -> Self {
        let mut t = Tree::default();
        t.push_leaf(value, n_rows);
        t
    }

    pub fn n_nodes(&self) -> usize {
        self.feature.len()
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        self.feature[node] < 0
    }

    pub(crate) fn push_leaf(&mut self, value: f64, n_rows: u32) -> usize {
        self.feature.push(-1);
        self.threshold.push(0.0);
        self.left.push(0);
        self.right.push(0);
        self.value.push(value);
        self.n_rows.push(n_rows);
        self.feature.len() - 1
    }

    pub(crate) fn make_split(
        &mut self,
        node: usize,
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    ) {
        self.feature[node] = feature as i32;
        self.threshold[node] = threshold;
        self.left[node] = left as u32;
        self.right[node] = right as u32;
        self.value[node] = 0.0;
    }

    /// Hand-built single split: `x[feature] <= threshold ? left_value : right_value`.
    pub fn stump(feature: usize, threshold: f64, left_value: f64, right_value: f64) -> Self {
        let mut t = Tree::default();
        t.push_leaf(0.0, 0);
        let l = t.push_leaf(left_value, 0);
        let r = t.push_leaf(right_value, 0);
        t.make_split(0, feature, threshold, l, r);
        t
    }

    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut node = 0;
        while self.feature[node] >= 0 {
            let f = self.feature[node] as usize;
            node = if row[f] <= self.threshold[node] {
                self.left[node] as usize
            } else {
                self.right[node] as usize
            };
        }
        node
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.value[self.leaf_index(row)]
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, n: usize) -> usize {
            if t.is_leaf(n) {
                0
            } else {
                1 + go(t, t.left[n] as usize).max(go(t, t.right[n] as usize))
            }
        }
        if self.feature.is_empty() {
            0
        } else {
            go(self, 0)
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_nodes()).filter(|&n| self.is_leaf(n))
    }

    pub fn uses_feature(&self, f: usize) -> bool {
        self.feature.contains(&(f as i32))
    }
}
