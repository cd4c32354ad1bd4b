//! Inputs shared by the criterion benchmarks in `benches/`.

use impact_core::classifiers::Matrix;
use impact_core::rng::rng_from_seed;
use rand::Rng;

/// `n` scores with roughly 20% positives; scores are shifted up for positives.
pub fn scored_labels(n: usize, seed: u64) -> (Vec<f64>, Vec<u8>) {
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|_| {
            let y = u8::from(rng.random::<f64>() < 0.2);
            (rng.random::<f64>() + 0.3 * f64::from(y), y)
        })
        .unzip()
}

/// Two Gaussian-ish blobs in `d` dimensions.
pub fn blobs(n: usize, d: usize, seed: u64) -> (Matrix, Vec<u8>) {
    let mut rng = rng_from_seed(seed);
    let mut data = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = (i % 2) as u8;
        for _ in 0..d {
            let noise: f64 = (0..4).map(|_| rng.random::<f64>() - 0.5).sum();
            data.push(noise + if label == 1 { 0.8 } else { 0.0 });
        }
        y.push(label);
    }
    (Matrix::new(n, d, data), y)
}

/// `(doi, abstract)` pairs from the synthetic generator.
pub fn abstracts(papers_per_year: usize) -> Vec<(String, String)> {
    let cfg = impact_core::synthetic::SyntheticConfig {
        papers_per_year,
        ..Default::default()
    };
    impact_core::synthetic::generate(&cfg)
        .records
        .into_iter()
        .map(|r| (r.doi, r.abstract_text))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inputs_have_the_requested_shape() {
        let (s, y) = scored_labels(100, 1);
        assert_eq!((s.len(), y.len()), (100, 100));
        let (x, y) = blobs(10, 3, 1);
        assert_eq!((x.rows(), x.cols(), y.len()), (10, 3, 10));
        assert_eq!(abstracts(2).len(), 16);
    }
}
