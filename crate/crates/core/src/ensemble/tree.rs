//! Binary CART classification trees with Gini impurity.
//!
//! Each feature's sample order is sorted once at the root and partitioned
//! stably at every split, so a level of the tree costs O(n) per feature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::N_FEATURES;

pub type Row = [f64; N_FEATURES];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        class: u8,
        counts: [u64; 2],
    },
    /// Rows with `row[feature] < threshold` go left, the rest go right.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    fn leaf(counts: [u64; 2]) -> Self {
        TreeNode::Leaf {
            class: majority_class(counts),
            counts,
        }
    }

    pub fn predict(&self, row: &Row) -> u8 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { class, .. } => return *class,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*feature] < *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match self {
            TreeNode::Leaf { class, .. } if *class > 1 => Err(Error::MalformedModel(format!(
                "leaf class {class} is not 0 or 1"
            ))),
            TreeNode::Leaf { .. } => Ok(()),
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if *feature >= N_FEATURES {
                    return Err(Error::MalformedModel(format!(
                        "feature index {feature} out of range 0..{N_FEATURES}"
                    )));
                }
                if !threshold.is_finite() {
                    return Err(Error::MalformedModel("non-finite split threshold".into()));
                }
                left.validate()?;
                right.validate()
            }
        }
    }
}

fn majority_class(counts: [u64; 2]) -> u8 {
    u8::from(counts[1] > counts[0])
}

/// 1 − p₀² − p₁².
pub fn gini_impurity(counts: [u64; 2]) -> Result<f64> {
    let n = counts[0] + counts[1];
    if n == 0 {
        return Err(Error::InvalidArgument(
            "Gini impurity of an empty node".into(),
        ));
    }
    let n = n as f64;
    let p0 = counts[0] as f64 / n;
    let p1 = counts[1] as f64 / n;
    Ok(1.0 - p0 * p0 - p1 * p1)
}

/// n · gini, kept unnormalized so candidate splits compare on a common scale.
fn weighted_gini(c0: u64, c1: u64) -> f64 {
    let n = (c0 + c1) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (a, b) = (c0 as f64, c1 as f64);
    n - (a * a + b * b) / n
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeLimits {
    /// `None` grows until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

impl Default for TreeLimits {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_leaf: 1,
        }
    }
}

/// Grows a tree on `rows` with binary `labels` (0 or 1).
///
/// Candidate thresholds are midpoints between consecutive distinct values of
/// each feature; the split with the lowest weighted child impurity wins, ties
/// going to the lower feature index and then the lower threshold.
pub fn train_tree(rows: &[Row], labels: &[u8], limits: &TreeLimits) -> Result<TreeNode> {
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if rows.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} rows but {} labels",
            rows.len(),
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::InvalidArgument(format!("label {bad} is not 0 or 1")));
    }
    let min_leaf = limits.min_leaf.max(1);
    let orders: Vec<Vec<u32>> = (0..N_FEATURES)
        .map(|f| {
            let mut idx: Vec<u32> = (0..rows.len() as u32).collect();
            idx.sort_by(|&a, &b| {
                rows[a as usize][f]
                    .total_cmp(&rows[b as usize][f])
                    .then(a.cmp(&b))
            });
            idx
        })
        .collect();
    let mut grower = Grower {
        rows,
        labels,
        max_depth: limits.max_depth,
        min_leaf,
        goes_left: vec![false; rows.len()],
    };
    Ok(grower.grow(orders, 0))
}

struct Grower<'a> {
    rows: &'a [Row],
    labels: &'a [u8],
    max_depth: Option<usize>,
    min_leaf: usize,
    goes_left: Vec<bool>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl Grower<'_> {
    fn grow(&mut self, orders: Vec<Vec<u32>>, depth: usize) -> TreeNode {
        let n = orders[0].len();
        let ones = orders[0]
            .iter()
            .filter(|&&i| self.labels[i as usize] == 1)
            .count() as u64;
        let counts = [n as u64 - ones, ones];
        if counts[0] == 0
            || counts[1] == 0
            || self.max_depth.is_some_and(|d| depth >= d)
            || n < 2 * self.min_leaf
        {
            return TreeNode::leaf(counts);
        }

        let parent = weighted_gini(counts[0], counts[1]);
        let Some(best) = self.best_split(&orders, counts) else {
            return TreeNode::leaf(counts);
        };
        // Demand a decrease beyond rounding noise.
        if best.impurity >= parent * (1.0 - 1e-12) {
            return TreeNode::leaf(counts);
        }

        for &i in &orders[0] {
            self.goes_left[i as usize] = self.rows[i as usize][best.feature] < best.threshold;
        }
        let mut left_orders = Vec::with_capacity(N_FEATURES);
        let mut right_orders = Vec::with_capacity(N_FEATURES);
        for order in orders {
            let (l, r): (Vec<u32>, Vec<u32>) =
                order.into_iter().partition(|&i| self.goes_left[i as usize]);
            left_orders.push(l);
            right_orders.push(r);
        }
        let left = self.grow(left_orders, depth + 1);
        let right = self.grow(right_orders, depth + 1);
        TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn best_split(&self, orders: &[Vec<u32>], counts: [u64; 2]) -> Option<BestSplit> {
        let n = orders[0].len();
        let mut best: Option<BestSplit> = None;
        for (f, order) in orders.iter().enumerate() {
            let mut left = [0u64; 2];
            for k in 0..n - 1 {
                let i = order[k] as usize;
                left[self.labels[i] as usize] += 1;
                let n_left = k + 1;
                if n_left < self.min_leaf || n - n_left < self.min_leaf {
                    continue;
                }
                let here = self.rows[i][f];
                let next = self.rows[order[k + 1] as usize][f];
                if here == next {
                    continue;
                }
                let impurity = weighted_gini(left[0], left[1])
                    + weighted_gini(counts[0] - left[0], counts[1] - left[1]);
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    best = Some(BestSplit {
                        feature: f,
                        threshold: midpoint(here, next),
                        impurity,
                    });
                }
            }
        }
        best
    }
}

/// Midpoint strictly above `lo` and at most `hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo && mid <= hi {
        mid
    } else {
        hi
    }
}
