use serde::{Deserialize, Serialize};

use super::tree::{fit_second_order, presort, SecondOrderParams, Tree};
use super::{sigmoid, softplus, BoostParams, Matrix};

/// Gradient boosted regression trees on the logistic loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedTrees {
    pub base_margin: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl BoostedTrees {
    /// Returns the model and the mean training log-loss after each round.
    pub fn fit(x: &Matrix, y: &[u8], p: &BoostParams) -> (Self, Vec<f64>) {
        let n = x.rows();
        let sorted = presort(x);
        let params = SecondOrderParams {
            max_depth: p.max_depth,
            lambda: p.lambda,
            min_child_weight: p.min_child_weight,
        };
        let mut margin = vec![0.0; n];
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n];
        let mut trees = Vec::with_capacity(p.n_rounds);
        let mut history = Vec::with_capacity(p.n_rounds);
        for _ in 0..p.n_rounds {
            for i in 0..n {
                let prob = sigmoid(margin[i]);
                g[i] = prob - f64::from(y[i]);
                h[i] = (prob * (1.0 - prob)).max(1e-16);
            }
            let mut tree = fit_second_order(x, &g, &h, &sorted, params);
            for node in &mut tree.nodes {
                if let super::tree::Node::Leaf { value } = node {
                    *value *= p.learning_rate;
                }
            }
            for (i, m) in margin.iter_mut().enumerate() {
                *m += tree.predict(x.row(i));
            }
            trees.push(tree);
            history.push(log_loss(&margin, y));
        }
        (
            Self {
                base_margin: 0.0,
                learning_rate: p.learning_rate,
                trees,
            },
            history,
        )
    }

    pub fn margin(&self, row: &[f64]) -> f64 {
        self.base_margin + self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn score(&self, row: &[f64]) -> f64 {
        sigmoid(self.margin(row))
    }
}

fn log_loss(margin: &[f64], y: &[u8]) -> f64 {
    let total: f64 = margin
        .iter()
        .zip(y)
        .map(|(&m, &l)| if l == 1 { softplus(-m) } else { softplus(m) })
        .sum();
    total / margin.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn training_loss_decreases_and_fits_xor() {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let a = (i % 2) as f64;
            let b = ((i / 2) % 2) as f64;
            rows.push([a + 0.01 * i as f64, b]);
            y.push(u8::from((a > 0.5) != (b > 0.5)));
        }
        let x = Matrix::from_rows(&rows);
        let p = BoostParams {
            n_rounds: 50,
            max_depth: 3,
            min_child_weight: 0.0,
            ..Default::default()
        };
        let (m, hist) = BoostedTrees::fit(&x, &y, &p);
        assert!(hist.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        for (i, &l) in y.iter().enumerate() {
            assert_eq!(u8::from(m.score(x.row(i)) >= 0.5), l);
        }
    }

    #[test]
    fn first_round_leaf_is_scaled_newton_step() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]);
        let p = BoostParams {
            n_rounds: 1,
            min_child_weight: 0.0,
            ..Default::default()
        };
        let (m, _) = BoostedTrees::fit(&x, &[0, 1], &p);
        // One row per leaf: g = -0.5, h = 0.25, lambda = 1.
        let expected = 0.1 * 0.5 / 1.25;
        assert!((m.margin(&[1.0]) - expected).abs() < 1e-12);
        assert!((m.margin(&[0.0]) + expected).abs() < 1e-12);
    }
}
