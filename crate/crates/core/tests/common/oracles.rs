//! Independent reference implementations for the classical validators.

#![allow(dead_code)]

use std::f64::consts::PI;

use rfbp_core::validators::{gini, TreeNode};

pub fn brute_force_knn(train: &[Vec<f32>], labels: &[usize], classes: usize, k: usize, q: &[f32]) -> usize {
    let mut all: Vec<(f64, usize)> = train
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let d = t
                .iter()
                .zip(q)
                .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
                .sum::<f64>();
            (d, j)
        })
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut votes = vec![0usize; classes];
    for &(_, j) in &all[..k] {
        votes[labels[j]] += 1;
    }
    let top = *votes.iter().max().unwrap();
    votes.iter().position(|&v| v == top).unwrap()
}

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

pub type Split = (usize, f64, f64);

/// Every feature and every midpoint threshold, scored with plain Gini.
pub fn exhaustive_split(x: &[[f32; 2]], y: &[usize], idx: &[usize], classes: usize) -> Option<Split> {
    let mut best: Option<Split> = None;
    for f in 0..2 {
        let mut values: Vec<f64> = idx.iter().map(|&i| x[i][f] as f64).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = 0.5 * (w[0] + w[1]);
            let mut l = vec![0; classes];
            let mut r = vec![0; classes];
            for &i in idx {
                if (x[i][f] as f64) <= t {
                    l[y[i]] += 1;
                } else {
                    r[y[i]] += 1;
                }
            }
            let nl: usize = l.iter().sum();
            let nr: usize = r.iter().sum();
            let score = (nl as f64 * gini(&l) + nr as f64 * gini(&r)) / idx.len() as f64;
            if best.is_none_or(|b| score < b.2 - 1e-12) {
                best = Some((f, t, score));
            }
        }
    }
    best
}

pub fn oracle_tree(x: &[[f32; 2]], y: &[usize], idx: &[usize], classes: usize, depth: usize, max_depth: usize) -> TreeNode {
    let mut counts = vec![0usize; classes];
    for &i in idx {
        counts[y[i]] += 1;
    }
    let top = *counts.iter().max().unwrap();
    let majority = counts.iter().position(|&c| c == top).unwrap();
    if counts.iter().filter(|&&c| c > 0).count() <= 1 || depth >= max_depth {
        return TreeNode::Leaf { class: majority };
    }
    let Some((feature, threshold, _)) = exhaustive_split(x, y, idx, classes) else {
        return TreeNode::Leaf { class: majority };
    };
    let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][feature] as f64 <= threshold);
    TreeNode::Split {
        feature,
        threshold,
        left: Box::new(oracle_tree(x, y, &l, classes, depth + 1, max_depth)),
        right: Box::new(oracle_tree(x, y, &r, classes, depth + 1, max_depth)),
    }
}
