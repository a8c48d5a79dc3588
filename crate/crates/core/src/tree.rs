//! Least-squares regression trees grown best-first up to a split budget.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::Real;

/// Number of explanatory variables per instance.
pub const N_FEATURES: usize = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("no training rows")]
    EmptyTraining,
    #[error("{features} feature rows but {targets} targets")]
    LengthMismatch { features: usize, targets: usize },
    #[error("min_leaf must be at least 1")]
    InvalidMinLeaf,
    #[error("non-finite value in training row {0}")]
    NonFinite(usize),
}

/// Nested tree node; rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode<T> {
    Split {
        feature: usize,
        threshold: T,
        left: Box<TreeNode<T>>,
        right: Box<TreeNode<T>>,
    },
    Leaf {
        value: T,
        n: usize,
    },
}

impl<T: Real> TreeNode<T> {
    fn route(&self, x: &[T; N_FEATURES]) -> &TreeNode<T> {
        let mut node = self;
        while let TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } = node
        {
            node = if x[*feature] <= *threshold { left } else { right };
        }
        node
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree<T> {
    pub root: TreeNode<T>,
    pub n_splits: usize,
    pub max_splits: usize,
    pub min_leaf: usize,
}

impl<T: Real> RegressionTree<T> {
    pub fn predict(&self, x: &[T; N_FEATURES]) -> T {
        match self.root.route(x) {
            TreeNode::Leaf { value, .. } => *value,
            TreeNode::Split { .. } => unreachable!("route ends at a leaf"),
        }
    }

    /// Leaf values in left-to-right order.
    pub fn leaf_values(&self) -> Vec<T> {
        fn walk<T: Real>(node: &TreeNode<T>, out: &mut Vec<T>) {
            match node {
                TreeNode::Leaf { value, .. } => out.push(*value),
                TreeNode::Split { left, right, .. } => {
                    walk(left, out);
                    walk(right, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    /// `(feature, threshold)` of every split in pre-order.
    pub fn splits(&self) -> Vec<(usize, T)> {
        fn walk<T: Real>(node: &TreeNode<T>, out: &mut Vec<(usize, T)>) {
            if let TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } = node
            {
                out.push((*feature, *threshold));
                walk(left, out);
                walk(right, out);
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }
}

/// Same as [`RegressionTree::predict`].
pub fn predict_tree<T: Real>(tree: &RegressionTree<T>, x: &[T; N_FEATURES]) -> T {
    tree.predict(x)
}

#[inline]
fn cmp_real<T: Real>(a: T, b: T) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

/// Row indices of one node, listed once per feature in `(x_f, y)` order.
type Orders = [Vec<usize>; N_FEATURES];

#[derive(Debug, Clone)]
struct Candidate<T> {
    feature: usize,
    threshold: T,
    gain: T,
    /// Rows going left are `orders[feature][..position]`.
    position: usize,
}

fn root_orders<T: Real>(x: &[[T; N_FEATURES]], y: &[T]) -> Orders {
    std::array::from_fn(|f| {
        let mut order: Vec<usize> = (0..y.len()).collect();
        order.sort_by(|&a, &b| cmp_real(x[a][f], x[b][f]).then(cmp_real(y[a], y[b])));
        order
    })
}

/// Best admissible split of a node, or `None`.
///
/// Rows are ordered by `(x_f, y)` so every partial sum depends only on the
/// multiset of rows, which makes the result independent of input order.
fn best_split<T: Real>(
    orders: &Orders,
    x: &[[T; N_FEATURES]],
    y: &[T],
    min_leaf: usize,
) -> Option<Candidate<T>> {
    let n = orders[0].len();
    if n < 2 * min_leaf || n < 2 {
        return None;
    }
    let sum_sq: T = orders[0].iter().map(|&r| y[r] * y[r]).sum();
    let floor = T::epsilon() * sum_sq;
    let half = T::lit(0.5);
    let n_t = T::from_count(n);

    let mut prefix = vec![T::zero(); n + 1];
    let mut best: Option<Candidate<T>> = None;
    for (f, order) in orders.iter().enumerate() {
        for (i, &r) in order.iter().enumerate() {
            prefix[i + 1] = prefix[i] + y[r];
        }
        let total = prefix[n];
        for p in min_leaf..=n - min_leaf {
            let lo = x[order[p - 1]][f];
            let hi = x[order[p]][f];
            if !(lo < hi) {
                continue;
            }
            let n_l = T::from_count(p);
            let n_r = T::from_count(n - p);
            let diff = prefix[p] / n_l - (total - prefix[p]) / n_r;
            let gain = n_l * n_r / n_t * diff * diff;
            if gain > floor && best.as_ref().is_none_or(|b| gain > b.gain) {
                let mut threshold = (lo + hi) * half;
                if !(threshold < hi) {
                    threshold = lo;
                }
                best = Some(Candidate {
                    feature: f,
                    threshold,
                    gain,
                    position: p,
                });
            }
        }
    }
    best
}

/// Stable partition of every feature order into the two children.
fn split_orders<T>(orders: Orders, c: &Candidate<T>, goes_left: &mut [bool]) -> (Orders, Orders) {
    for &r in &orders[c.feature][..c.position] {
        goes_left[r] = true;
    }
    let mut left: Orders = Default::default();
    let mut right: Orders = Default::default();
    for (f, order) in orders.iter().enumerate() {
        let (l, r): (Vec<usize>, Vec<usize>) = order.iter().partition(|&&r| goes_left[r]);
        left[f] = l;
        right[f] = r;
    }
    for &r in &orders[c.feature][..c.position] {
        goes_left[r] = false;
    }
    (left, right)
}

enum ArenaNode<T> {
    Leaf {
        orders: Orders,
        candidate: Option<Candidate<T>>,
    },
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
}

fn leaf_mean<T: Real>(rows: &[usize], y: &[T]) -> T {
    let mut values: Vec<T> = rows.iter().map(|&r| y[r]).collect();
    values.sort_by(|a, b| cmp_real(*a, *b));
    values.iter().copied().sum::<T>() / T::from_count(values.len())
}

/// Grows a tree on `(x, y)`.
///
/// At each step the leaf whose best admissible split removes the most
/// squared error is split, until `max_splits` splits exist or no split
/// lowers the error. Thresholds are midpoints between consecutive distinct
/// values, both children must keep `min_leaf` rows, and ties go to the
/// earlier-created leaf, then the smaller feature index, then the smaller
/// threshold.
pub fn fit_tree<T: Real>(
    x: &[[T; N_FEATURES]],
    y: &[T],
    max_splits: usize,
    min_leaf: usize,
) -> Result<RegressionTree<T>, TreeError> {
    if x.len() != y.len() {
        return Err(TreeError::LengthMismatch {
            features: x.len(),
            targets: y.len(),
        });
    }
    if y.is_empty() {
        return Err(TreeError::EmptyTraining);
    }
    if min_leaf == 0 {
        return Err(TreeError::InvalidMinLeaf);
    }
    if let Some(i) = (0..y.len()).find(|&i| !y[i].is_finite() || x[i].iter().any(|v| !v.is_finite())) {
        return Err(TreeError::NonFinite(i));
    }

    let orders = root_orders(x, y);
    let candidate = if max_splits > 0 {
        best_split(&orders, x, y, min_leaf)
    } else {
        None
    };
    let mut arena = vec![ArenaNode::Leaf { orders, candidate }];
    let mut goes_left = vec![false; y.len()];
    let mut n_splits = 0;
    while n_splits < max_splits {
        let mut pick: Option<(usize, T)> = None;
        for (id, node) in arena.iter().enumerate() {
            if let ArenaNode::Leaf {
                candidate: Some(c), ..
            } = node
            {
                if pick.is_none_or(|(_, g)| c.gain > g) {
                    pick = Some((id, c.gain));
                }
            }
        }
        let Some((id, _)) = pick else { break };
        let ArenaNode::Leaf {
            orders,
            candidate: Some(c),
        } = std::mem::replace(
            &mut arena[id],
            ArenaNode::Leaf {
                orders: Default::default(),
                candidate: None,
            },
        )
        else {
            unreachable!()
        };
        n_splits += 1;
        let more = n_splits < max_splits;
        let left_id = arena.len();
        let (left, right) = split_orders(orders, &c, &mut goes_left);
        for orders in [left, right] {
            let candidate = if more { best_split(&orders, x, y, min_leaf) } else { None };
            arena.push(ArenaNode::Leaf { orders, candidate });
        }
        arena[id] = ArenaNode::Split {
            feature: c.feature,
            threshold: c.threshold,
            left: left_id,
            right: left_id + 1,
        };
    }

    fn build<T: Real>(arena: &[ArenaNode<T>], id: usize, y: &[T]) -> TreeNode<T> {
        match &arena[id] {
            ArenaNode::Leaf { orders, .. } => TreeNode::Leaf {
                value: leaf_mean(&orders[0], y),
                n: orders[0].len(),
            },
            ArenaNode::Split {
                feature,
                threshold,
                left,
                right,
            } => TreeNode::Split {
                feature: *feature,
                threshold: *threshold,
                left: Box::new(build(arena, *left, y)),
                right: Box::new(build(arena, *right, y)),
            },
        }
    }

    Ok(RegressionTree {
        root: build(&arena, 0, y),
        n_splits,
        max_splits,
        min_leaf,
    })
}
