use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features drawn (without replacement) as split candidates at each node.
    pub max_features: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
        n_samples: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

/// CART regression tree. Rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub root: Node,
}

impl RegressionTree {
    /// Fits a tree on the rows listed in `sample` (duplicates allowed, as in a bootstrap).
    pub fn fit<R: Rng>(x: &[Vec<f64>], y: &[f64], sample: &[usize], params: &TreeParams, rng: &mut R) -> Self {
        let n_features = x.first().map_or(0, Vec::len);
        let mut idx = sample.to_vec();
        let root = grow(x, y, &mut idx, 0, params, n_features, rng);
        RegressionTree { root }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if row[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn d(n: &Node) -> usize {
            match n {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + d(left).max(d(right)),
            }
        }
        d(&self.root)
    }

    /// Sample counts of all leaves, left to right.
    pub fn leaf_sizes(&self) -> Vec<usize> {
        fn walk(n: &Node, out: &mut Vec<usize>) {
            match n {
                Node::Leaf { n_samples, .. } => out.push(*n_samples),
                Node::Split { left, right, .. } => {
                    walk(left, out);
                    walk(right, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn grow<R: Rng>(
    x: &[Vec<f64>],
    y: &[f64],
    idx: &mut [usize],
    depth: usize,
    params: &TreeParams,
    n_features: usize,
    rng: &mut R,
) -> Node {
    let n = idx.len();
    let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / n as f64;
    let leaf = Node::Leaf { value: mean, n_samples: n };
    if depth >= params.max_depth || n < 2 * params.min_leaf.max(1) {
        return leaf;
    }
    let k = params.max_features.clamp(1, n_features.max(1));
    let mut features = index::sample(rng, n_features, k).into_vec();
    features.sort_unstable();

    let Some(split) = best_split(x, y, idx, &features, params.min_leaf.max(1)) else {
        return leaf;
    };
    let mid = partition(idx, |i| x[i][split.feature] <= split.threshold);
    let (l, r) = idx.split_at_mut(mid);
    Node::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(grow(x, y, l, depth + 1, params, n_features, rng)),
        right: Box::new(grow(x, y, r, depth + 1, params, n_features, rng)),
    }
}

/// Best variance-reducing split over the candidate features.
///
/// Scans features in ascending order and thresholds in ascending order; a later
/// candidate replaces the incumbent only when its gain is larger by more than rounding
/// noise, so mathematically tied splits resolve to the first one found.
fn best_split(x: &[Vec<f64>], y: &[f64], idx: &[usize], features: &[usize], min_leaf: usize) -> Option<Split> {
    let n = idx.len();
    let total: f64 = idx.iter().map(|&i| y[i]).sum();
    let parent_sse = sse(idx.iter().map(|&i| y[i]));
    let mut best: Option<Split> = None;
    let mut order = idx.to_vec();
    for &f in features {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        let total_sq: f64 = order.iter().map(|&i| y[i] * y[i]).sum();
        for k in 1..n {
            let yi = y[order[k - 1]];
            left_sum += yi;
            left_sq += yi * yi;
            let (lo, hi) = (x[order[k - 1]][f], x[order[k]][f]);
            if lo == hi || k < min_leaf || n - k < min_leaf {
                continue;
            }
            let (nl, nr) = (k as f64, (n - k) as f64);
            let right_sum = total - left_sum;
            let child_sse = (left_sq - left_sum * left_sum / nl) + ((total_sq - left_sq) - right_sum * right_sum / nr);
            let gain = parent_sse - child_sse;
            let tol = 1e-9 * parent_sse.max(1.0);
            if gain > tol && best.as_ref().is_none_or(|b| gain > b.gain + tol) {
                best = Some(Split {
                    feature: f,
                    threshold: lo + (hi - lo) / 2.0,
                    gain,
                });
            }
        }
    }
    best
}

fn sse(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, s) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    let mean = s / n.max(1) as f64;
    values.map(|v| (v - mean) * (v - mean)).sum()
}

/// Stable in-place partition; returns the number of elements satisfying `pred`.
fn partition(idx: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let (mut yes, no): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| pred(i));
    let mid = yes.len();
    yes.extend(no);
    idx.copy_from_slice(&yes);
    mid
}
