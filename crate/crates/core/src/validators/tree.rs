use super::{argmax_smallest, Classifier, Matrix};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_DEPTH: usize = 12;

/// Improvement smaller than this is treated as a tie.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        class: usize,
    },
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn predict(&self, x: &[f32]) -> usize {
        match self {
            TreeNode::Leaf { class } => *class,
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[*feature] as f64 <= *threshold {
                    left.predict(x)
                } else {
                    right.predict(x)
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
}

pub fn gini(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

/// CART with Gini impurity. A node splits while impure, under the depth cap,
/// and some threshold separates its samples, even if the best split does not
/// lower the impurity (as needed for XOR-like data).
#[derive(Debug, Clone)]
pub struct DecisionTree {
    pub max_depth: usize,
    root: Option<TreeNode>,
}

impl Default for DecisionTree {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_DEPTH)
    }
}

/// Best split of a node: feature, threshold and weighted child impurity.
pub type SplitChoice = (usize, f64, f64);

impl DecisionTree {
    pub fn new(max_depth: usize) -> Self {
        Self {
            max_depth,
            root: None,
        }
    }

    pub fn root(&self) -> Option<&TreeNode> {
        self.root.as_ref()
    }

    fn build(&self, x: &Matrix, y: &[usize], idx: &[usize], classes: usize, depth: usize) -> TreeNode {
        let mut counts = vec![0usize; classes];
        for &i in idx {
            counts[y[i]] += 1;
        }
        let majority = argmax_smallest(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>());
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.max_depth {
            return TreeNode::Leaf { class: majority };
        }
        let Some((feature, threshold, _)) = best_split(x, y, idx, classes) else {
            return TreeNode::Leaf { class: majority };
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| x.row(i)[feature] as f64 <= threshold);
        TreeNode::Split {
            feature,
            threshold,
            left: Box::new(self.build(x, y, &l, classes, depth + 1)),
            right: Box::new(self.build(x, y, &r, classes, depth + 1)),
        }
    }
}

/// Lowest weighted Gini over all features and midpoint thresholds; ties go to
/// the lowest feature, then the lowest threshold.
pub fn best_split(x: &Matrix, y: &[usize], idx: &[usize], classes: usize) -> Option<SplitChoice> {
    let n = idx.len();
    let mut best: Option<SplitChoice> = None;
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);
    let mut total = vec![0usize; classes];
    for &i in idx {
        total[y[i]] += 1;
    }
    for f in 0..x.cols {
        order.clear();
        order.extend(idx.iter().map(|&i| (x.row(i)[f] as f64, y[i])));
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = vec![0usize; classes];
        let mut right = total.clone();
        // Running sums of squared class counts on each side.
        let mut sq_left = 0usize;
        let mut sq_right: usize = total.iter().map(|c| c * c).sum();
        for k in 0..n - 1 {
            let c = order[k].1;
            sq_left += 2 * left[c] + 1;
            sq_right -= 2 * right[c] - 1;
            left[c] += 1;
            right[c] -= 1;
            if order[k].0 == order[k + 1].0 {
                continue;
            }
            let nl = (k + 1) as f64;
            let nr = (n - k - 1) as f64;
            let score = (nl - sq_left as f64 / nl + nr - sq_right as f64 / nr) / n as f64;
            if best.is_none_or(|b| score < b.2 - TIE_EPS) {
                best = Some((f, 0.5 * (order[k].0 + order[k + 1].0), score));
            }
        }
    }
    best
}

impl Classifier for DecisionTree {
    fn name(&self) -> String {
        "dt".into()
    }

    fn fit(&mut self, x: &Matrix, y: &[usize], num_classes: usize) -> Result<()> {
        if x.rows == 0 {
            return Err(Error::Param("decision tree needs a non-empty training set".into()));
        }
        let idx: Vec<usize> = (0..x.rows).collect();
        self.root = Some(self.build(x, y, &idx, num_classes, 0));
        Ok(())
    }

    fn predict(&mut self, x: &Matrix) -> Result<Vec<usize>> {
        let root = self
            .root
            .as_ref()
            .ok_or_else(|| Error::State("decision tree predict called before fit".into()))?;
        Ok((0..x.rows).map(|i| root.predict(x.row(i))).collect())
    }
}
