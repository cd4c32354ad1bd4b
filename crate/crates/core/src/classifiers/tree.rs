//! Binary decision trees shared by the forest and boosting models.
//!
//! A split sends `x[feature] <= threshold` left. Thresholds are always an
//! observed training value (the largest value on the left side), and split
//! search only looks at the order of values, so a fitted tree is unchanged
//! by strictly increasing transforms of any feature.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Nodes are stored flat; index 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        match &self.nodes[self.leaf_index(row)] {
            Node::Leaf { value } => *value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
            }
        }
        walk(self, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GiniParams {
    pub max_features: usize,
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
}

/// Grows a classification tree on `samples` (row indices, repeats allowed)
/// using Gini impurity. Leaves hold the fraction of positive samples.
///
/// At each node features are visited in a random order. After
/// `max_features` of them the search stops if a valid split was found;
/// otherwise it keeps going until one is found or features run out.
pub fn fit_gini<R: Rng>(x: &Matrix, y: &[u8], samples: &[usize], params: GiniParams, rng: &mut R) -> Tree {
    let mut nodes = Vec::new();
    let mut features: Vec<usize> = (0..x.cols()).collect();
    let mut stack = vec![(samples.to_vec(), 0usize, None::<(usize, bool)>)];
    while let Some((idx, depth, parent)) = stack.pop() {
        let id = nodes.len();
        if let Some((p, is_left)) = parent {
            if let Node::Split { left, right, .. } = &mut nodes[p] {
                if is_left {
                    *left = id;
                } else {
                    *right = id;
                }
            }
        }
        let pos = idx.iter().filter(|&&i| y[i] == 1).count();
        let n = idx.len();
        let leaf = Node::Leaf {
            value: if n == 0 { 0.0 } else { pos as f64 / n as f64 },
        };
        let depth_ok = params.max_depth.is_none_or(|m| depth < m);
        if pos == 0 || pos == n || n < 2 * params.min_samples_leaf.max(1) || !depth_ok {
            nodes.push(leaf);
            continue;
        }
        features.shuffle(rng);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut sorted = idx.clone();
        for (tried, &f) in features.iter().enumerate() {
            if tried >= params.max_features && best.is_some() {
                break;
            }
            sorted.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)).then(a.cmp(&b)));
            if let Some((score, threshold)) = best_gini_split(x, y, &sorted, f, pos, params.min_samples_leaf) {
                if best.is_none_or(|(s, _, _)| score < s) {
                    best = Some((score, f, threshold));
                }
            }
        }
        match best {
            None => nodes.push(leaf),
            Some((_, feature, threshold)) => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x.get(i, feature) <= threshold);
                nodes.push(Node::Split {
                    feature,
                    threshold,
                    left: 0,
                    right: 0,
                });
                stack.push((r, depth + 1, Some((id, false))));
                stack.push((l, depth + 1, Some((id, true))));
            }
        }
    }
    Tree { nodes }
}

/// Returns `(weighted child impurity, threshold)` of the best split of
/// `sorted` on feature `f`, or `None` if the feature is constant here.
fn best_gini_split(x: &Matrix, y: &[u8], sorted: &[usize], f: usize, total_pos: usize, min_leaf: usize) -> Option<(f64, f64)> {
    let n = sorted.len();
    let min_leaf = min_leaf.max(1);
    let mut left_pos = 0usize;
    let mut best: Option<(f64, f64)> = None;
    for i in 0..n - 1 {
        left_pos += usize::from(y[sorted[i]] == 1);
        let v = x.get(sorted[i], f);
        if v == x.get(sorted[i + 1], f) {
            continue;
        }
        let nl = i + 1;
        let nr = n - nl;
        if nl < min_leaf || nr < min_leaf {
            continue;
        }
        let score = nl as f64 * gini(left_pos, nl) + nr as f64 * gini(total_pos - left_pos, nr);
        if best.is_none_or(|(s, _)| score < s) {
            best = Some((score, v));
        }
    }
    best
}

fn gini(pos: usize, n: usize) -> f64 {
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

#[derive(Debug, Clone, Copy)]
pub struct SecondOrderParams {
    pub max_depth: usize,
    pub lambda: f64,
    pub min_child_weight: f64,
}

/// Grows a regression tree on gradients `g` and hessians `h` with the
/// exact greedy second-order gain. Leaf values are the raw Newton step
/// `-G / (H + lambda)`; callers apply the learning rate.
///
/// `presorted[f]` must list all rows in ascending order of feature `f`.
pub fn fit_second_order(
    x: &Matrix,
    g: &[f64],
    h: &[f64],
    presorted: &[Vec<usize>],
    params: SecondOrderParams,
) -> Tree {
    let n = x.rows();
    let mut nodes = Vec::new();
    let mut node_of = vec![0usize; n];
    // (sorted rows per feature for this node, depth, G, H, parent link)
    let root_g: f64 = g.iter().sum();
    let root_h: f64 = h.iter().sum();
    let mut stack = vec![(presorted.to_vec(), 0usize, root_g, root_h, None::<(usize, bool)>)];
    while let Some((lists, depth, gs, hs, parent)) = stack.pop() {
        let id = nodes.len();
        if let Some((p, is_left)) = parent {
            if let Node::Split { left, right, .. } = &mut nodes[p] {
                if is_left {
                    *left = id;
                } else {
                    *right = id;
                }
            }
        }
        let leaf = Node::Leaf {
            value: -gs / (hs + params.lambda),
        };
        if depth >= params.max_depth || lists.first().is_none_or(|l| l.len() < 2) {
            nodes.push(leaf);
            continue;
        }
        let parent_score = gs * gs / (hs + params.lambda);
        // Best split per feature, then the highest gain overall; ties keep
        // the lowest feature index so the result is independent of threading.
        let best = lists
            .par_iter()
            .enumerate()
            .filter_map(|(f, list)| {
                let (mut gl, mut hl) = (0.0, 0.0);
                let mut best: Option<(f64, usize, f64)> = None;
                for i in 0..list.len() - 1 {
                    gl += g[list[i]];
                    hl += h[list[i]];
                    let v = x.get(list[i], f);
                    if v == x.get(list[i + 1], f) {
                        continue;
                    }
                    let (gr, hr) = (gs - gl, hs - hl);
                    if hl < params.min_child_weight || hr < params.min_child_weight {
                        continue;
                    }
                    let gain = 0.5 * (gl * gl / (hl + params.lambda) + gr * gr / (hr + params.lambda) - parent_score);
                    if gain > 0.0 && best.is_none_or(|(b, _, _)| gain > b) {
                        best = Some((gain, f, v));
                    }
                }
                best
            })
            .reduce_with(|a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
        let Some((_, feature, threshold)) = best else {
            nodes.push(leaf);
            continue;
        };
        nodes.push(Node::Split {
            feature,
            threshold,
            left: 0,
            right: 0,
        });
        for &i in &lists[feature] {
            node_of[i] = usize::from(x.get(i, feature) > threshold);
        }
        let side = &node_of;
        let (left_lists, right_lists): (Vec<Vec<usize>>, Vec<Vec<usize>>) = lists
            .into_par_iter()
            .map(|list| list.into_iter().partition(|&i| side[i] == 0))
            .unzip();
        let (gl, hl) = sums(&left_lists[0], g, h);
        stack.push((right_lists, depth + 1, gs - gl, hs - hl, Some((id, false))));
        stack.push((left_lists, depth + 1, gl, hl, Some((id, true))));
    }
    Tree { nodes }
}

fn sums(rows: &[usize], g: &[f64], h: &[f64]) -> (f64, f64) {
    rows.iter().fold((0.0, 0.0), |(a, b), &i| (a + g[i], b + h[i]))
}

/// Row indices sorted by each feature's value (ties by row index).
pub fn presort(x: &Matrix) -> Vec<Vec<usize>> {
    (0..x.cols())
        .map(|f| {
            let mut v: Vec<usize> = (0..x.rows()).collect();
            v.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)).then(a.cmp(&b)));
            v
        })
        .collect()
}
