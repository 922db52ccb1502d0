//! Soft regression trees.
//!
//! A branch `[x_j <= C]` routes a point left with probability
//! `psi((C - x_j) / tau)` where `psi` is the logistic CDF, so the leaf weights
//! of a tree form a partition of unity that is smooth in `x`. Hard trees use
//! the indicator `I(x_j <= C)` through a separate code path.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Logistic CDF `1 / (1 + exp(-u))`, with the exponent clamped to `[-500, 500]`.
#[inline]
pub fn gating(u: f64) -> f64 {
    1.0 / (1.0 + (-u.clamp(-500.0, 500.0)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

/// Root-to-node address.
pub type NodePath = Vec<Side>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        mu: f64,
    },
    Branch {
        var: usize,
        cut: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    pub fn leaf(mu: f64) -> Self {
        Node::Leaf { mu }
    }

    pub fn branch(var: usize, cut: f64, left: Node, right: Node) -> Self {
        Node::Branch { var, cut, left: Box::new(left), right: Box::new(right) }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf { .. })
    }

    pub fn num_leaves(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Branch { left, right, .. } => left.num_leaves() + right.num_leaves(),
        }
    }

    pub fn num_branches(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Branch { left, right, .. } => 1 + left.num_branches() + right.num_branches(),
        }
    }

    /// Depth of the deepest leaf (a lone leaf has depth 0).
    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Branch { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn child(&self, side: Side) -> Option<&Node> {
        match (self, side) {
            (Node::Branch { left, .. }, Side::Left) => Some(left),
            (Node::Branch { right, .. }, Side::Right) => Some(right),
            _ => None,
        }
    }

    fn child_mut(&mut self, side: Side) -> Option<&mut Node> {
        match (self, side) {
            (Node::Branch { left, .. }, Side::Left) => Some(left),
            (Node::Branch { right, .. }, Side::Right) => Some(right),
            _ => None,
        }
    }
}

/// Bandwidth regime of a tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    Soft(f64),
    Hard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftTree {
    pub root: Node,
    pub gate: Gate,
}

/// Per-dimension intervals `[lower_j, upper_j]` inside the unit cube.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperrect {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Hyperrect {
    pub fn unit(p: usize) -> Self {
        Hyperrect { lower: vec![0.0; p], upper: vec![1.0; p] }
    }

    pub fn width(&self, j: usize) -> f64 {
        self.upper[j] - self.lower[j]
    }

    /// Narrows the box as if the point went `side` at the hard split `[x_var <= cut]`.
    pub fn narrow(&mut self, var: usize, cut: f64, side: Side) {
        match side {
            Side::Left => self.upper[var] = self.upper[var].min(cut),
            Side::Right => self.lower[var] = self.lower[var].max(cut),
        }
    }
}

impl SoftTree {
    pub fn stump(mu: f64, gate: Gate) -> Self {
        SoftTree { root: Node::leaf(mu), gate }
    }

    /// Bandwidth; zero for hard trees.
    pub fn tau(&self) -> f64 {
        match self.gate {
            Gate::Soft(t) => t,
            Gate::Hard => 0.0,
        }
    }

    pub fn is_hard(&self) -> bool {
        matches!(self.gate, Gate::Hard)
    }

    /// Probability of going left at `[x <= cut]`.
    #[inline]
    pub fn left_prob(&self, x: f64, cut: f64) -> f64 {
        match self.gate {
            Gate::Soft(tau) => gating((cut - x) / tau),
            Gate::Hard => {
                if x <= cut {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn num_leaves(&self) -> usize {
        self.root.num_leaves()
    }

    pub fn num_branches(&self) -> usize {
        self.root.num_branches()
    }

    /// Leaf values in left-to-right order.
    pub fn leaf_values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        fn walk(n: &Node, out: &mut Vec<f64>) {
            match n {
                Node::Leaf { mu } => out.push(*mu),
                Node::Branch { left, right, .. } => {
                    walk(left, out);
                    walk(right, out);
                }
            }
        }
        walk(&self.root, &mut out);
        out
    }

    /// Overwrites leaf values in left-to-right order.
    pub fn set_leaf_values(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.num_leaves(), "leaf count mismatch");
        fn walk(n: &mut Node, values: &[f64], k: &mut usize) {
            match n {
                Node::Leaf { mu } => {
                    *mu = values[*k];
                    *k += 1;
                }
                Node::Branch { left, right, .. } => {
                    walk(left, values, k);
                    walk(right, values, k);
                }
            }
        }
        let mut k = 0;
        walk(&mut self.root, values, &mut k);
    }

    /// Paths to every leaf, left-to-right.
    pub fn leaf_paths(&self) -> Vec<NodePath> {
        let mut out = Vec::new();
        collect_paths(&self.root, &mut Vec::new(), &mut out, &|n| n.is_leaf());
        out
    }

    /// Paths to branches whose two children are both leaves.
    pub fn prunable_paths(&self) -> Vec<NodePath> {
        let mut out = Vec::new();
        collect_paths(&self.root, &mut Vec::new(), &mut out, &|n| match n {
            Node::Branch { left, right, .. } => left.is_leaf() && right.is_leaf(),
            Node::Leaf { .. } => false,
        });
        out
    }

    pub fn node_at(&self, path: &[Side]) -> Option<&Node> {
        path.iter().try_fold(&self.root, |n, &s| n.child(s))
    }

    pub fn node_at_mut(&mut self, path: &[Side]) -> Option<&mut Node> {
        let mut node = &mut self.root;
        for &s in path {
            node = node.child_mut(s)?;
        }
        Some(node)
    }

    /// Adds one to `counts[var]` for every branch.
    pub fn add_var_counts(&self, counts: &mut [usize]) {
        fn walk(n: &Node, counts: &mut [usize]) {
            if let Node::Branch { var, left, right, .. } = n {
                counts[*var] += 1;
                walk(left, counts);
                walk(right, counts);
            }
        }
        walk(&self.root, counts);
    }

    /// Largest split variable index, if any.
    pub fn max_var(&self) -> Option<usize> {
        fn walk(n: &Node) -> Option<usize> {
            match n {
                Node::Leaf { .. } => None,
                Node::Branch { var, left, right, .. } => {
                    Some((*var).max(walk(left).unwrap_or(0)).max(walk(right).unwrap_or(0)))
                }
            }
        }
        walk(&self.root)
    }
}

fn collect_paths(node: &Node, path: &mut NodePath, out: &mut Vec<NodePath>, keep: &dyn Fn(&Node) -> bool) {
    if keep(node) {
        out.push(path.clone());
    }
    if let Node::Branch { left, right, .. } = node {
        path.push(Side::Left);
        collect_paths(left, path, out, keep);
        path.pop();
        path.push(Side::Right);
        collect_paths(right, path, out, keep);
        path.pop();
    }
}

/// Leaf weights `phi_l(x)` for a single point, leaves in left-to-right order.
pub fn leaf_weights(tree: &SoftTree, x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(tree.num_leaves());
    fn walk(tree: &SoftTree, n: &Node, x: &[f64], w: f64, out: &mut Vec<f64>) {
        match n {
            Node::Leaf { .. } => out.push(w),
            Node::Branch { var, cut, left, right } => {
                let p = tree.left_prob(x[*var], *cut);
                walk(tree, left, x, w * p, out);
                walk(tree, right, x, w * (1.0 - p), out);
            }
        }
    }
    walk(tree, &tree.root, x, 1.0, &mut out);
    out
}

/// N x L matrix of leaf weights for every row of `x`.
pub fn leaf_weight_matrix(tree: &SoftTree, x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(tree.num_leaves());
    fn walk(tree: &SoftTree, node: &Node, x: &DMatrix<f64>, w: Vec<f64>, cols: &mut Vec<Vec<f64>>) {
        match node {
            Node::Leaf { .. } => cols.push(w),
            Node::Branch { var, cut, left, right } => {
                let xj = x.column(*var);
                let mut wl = w;
                let mut wr = wl.clone();
                for ((l, r), &xv) in wl.iter_mut().zip(wr.iter_mut()).zip(xj.iter()) {
                    let p = tree.left_prob(xv, *cut);
                    *l *= p;
                    *r *= 1.0 - p;
                }
                walk(tree, left, x, wl, cols);
                walk(tree, right, x, wr, cols);
            }
        }
    }
    walk(tree, &tree.root, x, vec![1.0; n], &mut cols);
    let l = cols.len();
    DMatrix::from_iterator(n, l, cols.into_iter().flatten())
}

pub fn tree_predict(tree: &SoftTree, x: &[f64]) -> f64 {
    leaf_weights(tree, x).iter().zip(tree.leaf_values()).map(|(w, mu)| w * mu).sum()
}

/// Predictions of one tree at every row of `x`.
pub fn tree_predict_rows(tree: &SoftTree, x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows();
    let mut out = vec![0.0; n];
    fn walk(tree: &SoftTree, node: &Node, x: &DMatrix<f64>, w: Vec<f64>, out: &mut [f64]) {
        match node {
            Node::Leaf { mu } => {
                for (o, wi) in out.iter_mut().zip(w) {
                    *o += wi * mu;
                }
            }
            Node::Branch { var, cut, left, right } => {
                let xj = x.column(*var);
                let mut wl = w;
                let mut wr = wl.clone();
                for ((l, r), &xv) in wl.iter_mut().zip(wr.iter_mut()).zip(xj.iter()) {
                    let p = tree.left_prob(xv, *cut);
                    *l *= p;
                    *r *= 1.0 - p;
                }
                walk(tree, left, x, wl, out);
                walk(tree, right, x, wr, out);
            }
        }
    }
    walk(tree, &tree.root, x, vec![1.0; n], &mut out);
    out
}

/// Row-wise sum of tree predictions.
pub fn forest_predict(trees: &[SoftTree], x: &DMatrix<f64>) -> Result<Vec<f64>> {
    let p = x.ncols();
    if let Some(m) = trees.iter().filter_map(SoftTree::max_var).max() {
        if m >= p {
            return Err(Error::DimensionMismatch { expected: m + 1, found: p });
        }
    }
    let mut out = vec![0.0; x.nrows()];
    for t in trees {
        for (o, v) in out.iter_mut().zip(tree_predict_rows(t, x)) {
            *o += v;
        }
    }
    Ok(out)
}

/// Box of points reaching `path`, treating every ancestor as a hard split.
pub fn branch_hyperrect(tree: &SoftTree, path: &[Side], p: usize) -> Result<Hyperrect> {
    let mut rect = Hyperrect::unit(p);
    let mut node = &tree.root;
    for (depth, &side) in path.iter().enumerate() {
        match node {
            Node::Branch { var, cut, left, right } => {
                if *var >= p {
                    return Err(Error::DimensionMismatch { expected: var + 1, found: p });
                }
                rect.narrow(*var, *cut, side);
                node = match side {
                    Side::Left => left,
                    Side::Right => right,
                };
            }
            Node::Leaf { .. } => {
                return Err(Error::InvalidArgument(format!(
                    "path descends through a leaf at depth {depth}"
                )))
            }
        }
    }
    Ok(rect)
}
