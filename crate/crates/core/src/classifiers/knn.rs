use serde::{Deserialize, Serialize};

use super::{KnnParams, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMetric {
    Euclidean,
    /// `1 - cos(a, b)`; a zero vector is at distance 1 from everything.
    Cosine,
}

/// Stores the training set; the score is the positive fraction among the
/// `k` nearest rows. Equal distances are ordered by training row index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub metric: DistanceMetric,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl Knn {
    pub fn fit(x: &Matrix, y: &[u8], p: &KnnParams) -> Self {
        Self {
            k: p.k.clamp(1, x.rows()),
            metric: p.metric,
            rows: (0..x.rows()).map(|i| x.row(i).to_vec()).collect(),
            labels: y.to_vec(),
        }
    }

    pub fn neighbors(&self, row: &[f64]) -> Vec<usize> {
        let mut dist: Vec<(f64, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| (self.distance(r, row), i))
            .collect();
        let k = self.k.min(dist.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, cmp);
            dist.truncate(k);
        }
        dist.sort_by(cmp);
        dist.into_iter().map(|(_, i)| i).collect()
    }

    pub fn score(&self, row: &[f64]) -> f64 {
        let nn = self.neighbors(row);
        let pos = nn.iter().filter(|&&i| self.labels[i] == 1).count();
        pos as f64 / nn.len() as f64
    }

    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.metric {
            DistanceMetric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            DistanceMetric::Cosine => {
                let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
                for (x, y) in a.iter().zip(b) {
                    ab += x * y;
                    aa += x * x;
                    bb += y * y;
                }
                if aa == 0.0 || bb == 0.0 {
                    1.0
                } else {
                    1.0 - ab / (aa.sqrt() * bb.sqrt())
                }
            }
        }
    }
}
