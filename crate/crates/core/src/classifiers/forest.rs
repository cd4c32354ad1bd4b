use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{fit_gini, GiniParams, Tree};
use super::{ForestParams, Matrix};
use crate::rng::{derive_seed, rng_from_seed};

/// Bagged Gini trees. The score is the fraction of trees voting positive,
/// where a tree votes positive when its leaf is majority-positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<Tree>,
}

impl RandomForest {
    pub fn fit(x: &Matrix, y: &[u8], p: &ForestParams, seed: u64) -> Self {
        let n = x.rows();
        let d = x.cols();
        let max_features = p
            .max_features
            .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
            .clamp(1, d);
        let params = GiniParams {
            max_features,
            min_samples_leaf: p.min_samples_leaf,
            max_depth: p.max_depth,
        };
        let trees = (0..p.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng_from_seed(derive_seed(seed, t as u64));
                let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                fit_gini(x, y, &sample, params, &mut rng)
            })
            .collect();
        Self { trees }
    }

    pub fn score(&self, row: &[f64]) -> f64 {
        if self.trees.is_empty() {
            return 0.0;
        }
        let votes = self.trees.iter().filter(|t| t.predict(row) > 0.5).count();
        votes as f64 / self.trees.len() as f64
    }
}
