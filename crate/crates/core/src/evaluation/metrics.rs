//! Threshold-free ranking metrics computed exactly by sorting.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("scores and labels differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("only one class present")]
    SingleClass,
    #[error("no positive labels")]
    NoPositives,
    #[error("non-finite score")]
    NonFinite,
}

fn check(scores: &[f64], labels: &[u8]) -> Result<(usize, usize), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    Ok((pos, labels.len() - pos))
}

/// Indices ordered by score, descending, and the boundaries of tie groups.
fn tie_groups(scores: &[f64]) -> (Vec<usize>, Vec<(usize, usize)>) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=order.len() {
        if i == order.len() || scores[order[i]] != scores[order[start]] {
            groups.push((start, i));
            start = i;
        }
    }
    (order, groups)
}

/// Area under the ROC curve: the Mann-Whitney probability that a random
/// positive outscores a random negative, ties counting one half.
pub fn auc_roc(scores: &[f64], labels: &[u8]) -> Result<f64, MetricError> {
    let (pos, neg) = check(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let (order, groups) = tie_groups(scores);
    // Walk from the highest score down; each positive beats every negative
    // below its tie group and draws with the negatives inside it.
    let mut neg_above = 0u64;
    let mut wins2 = 0u64;
    for (s, e) in groups {
        let gp = order[s..e].iter().filter(|&&i| labels[i] == 1).count() as u64;
        let gn = (e - s) as u64 - gp;
        let neg_below = neg as u64 - neg_above - gn;
        wins2 += gp * (2 * neg_below + gn);
        neg_above += gn;
    }
    Ok(wins2 as f64 / (2.0 * pos as f64 * neg as f64))
}

/// Average precision. Positives are visited in descending score order and
/// the precision at each is averaged. A group of tied scores is treated as
/// one step: each positive in it gets the precision measured at the end
/// of the group, so a constant scorer gets exactly the prevalence.
pub fn auc_pr(scores: &[f64], labels: &[u8]) -> Result<f64, MetricError> {
    let (pos, _) = check(scores, labels)?;
    if pos == 0 {
        return Err(MetricError::NoPositives);
    }
    let (order, groups) = tie_groups(scores);
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (s, e) in groups {
        let gp = order[s..e].iter().filter(|&&i| labels[i] == 1).count();
        tp += gp;
        if gp > 0 {
            sum += gp as f64 * tp as f64 / e as f64;
        }
    }
    Ok(sum / pos as f64)
}

/// Fraction of items where `score >= threshold` agrees with the label.
pub fn accuracy(scores: &[f64], labels: &[u8], threshold: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let ok = scores
        .iter()
        .zip(labels)
        .filter(|(s, l)| u8::from(**s >= threshold) == **l)
        .count();
    ok as f64 / scores.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] == 1 && labels[j] == 0 {
                    den += 1.0;
                    if si > sj {
                        num += 1.0;
                    } else if si == sj {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn documented_examples() {
        assert_eq!(auc_roc(&[0.9, 0.8, 0.3, 0.2], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(auc_roc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert_eq!(auc_roc(&[0.5; 6], &[1, 0, 1, 0, 0, 0]).unwrap(), 0.5);
        let ap = auc_pr(&[4.0, 3.0, 2.0, 1.0], &[1, 0, 1, 0]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(auc_pr(&[0.9, 0.8, 0.1], &[1, 1, 0]).unwrap(), 1.0);
        assert_eq!(auc_pr(&[0.3; 5], &[1, 0, 0, 1, 0]).unwrap(), 0.4);
    }

    #[test]
    fn errors() {
        assert_eq!(auc_roc(&[0.1, 0.2], &[1, 1]), Err(MetricError::SingleClass));
        assert_eq!(auc_pr(&[0.1, 0.2], &[0, 0]), Err(MetricError::NoPositives));
        assert_eq!(auc_roc(&[0.1], &[1, 0]), Err(MetricError::LengthMismatch(1, 2)));
        assert_eq!(auc_roc(&[f64::NAN, 0.1], &[1, 0]), Err(MetricError::NonFinite));
    }

    #[test]
    fn random_scores_give_prevalence() {
        let mut rng = rng_from_seed(31);
        let n = 10_000;
        let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < 0.2)).collect();
        let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let p = labels.iter().filter(|&&l| l == 1).count() as f64 / n as f64;
        assert!((auc_pr(&scores, &labels).unwrap() - p).abs() < 0.03);
    }

    #[test]
    fn accuracy_counts_agreement() {
        assert_eq!(accuracy(&[0.2, 0.7, 0.5, 0.1], &[0, 1, 0, 0], 0.5), 0.75);
    }

    proptest! {
        #[test]
        fn matches_pairwise_oracle(pairs in prop::collection::vec((0u8..8, 0u8..2), 2..50)) {
            let scores: Vec<f64> = pairs.iter().map(|(s, _)| f64::from(*s) / 8.0).collect();
            let labels: Vec<u8> = pairs.iter().map(|(_, l)| *l).collect();
            let pos = labels.iter().filter(|&&l| l == 1).count();
            prop_assume!(pos > 0 && pos < labels.len());
            let got = auc_roc(&scores, &labels).unwrap();
            prop_assert!((got - pairwise_auc(&scores, &labels)).abs() <= 1e-12);
            // Strictly increasing transforms leave the ranking unchanged.
            let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
            prop_assert!((auc_roc(&warped, &labels).unwrap() - got).abs() <= 1e-12);
        }

        #[test]
        fn negation_complements_without_ties(raw in prop::collection::btree_set(0u32..10_000, 2..40), seed: u64) {
            let scores: Vec<f64> = raw.iter().map(|&v| f64::from(v)).collect();
            let mut rng = rng_from_seed(seed);
            let mut labels: Vec<u8> = (0..scores.len()).map(|_| rng.random_range(0..2)).collect();
            labels[0] = 0;
            labels[1] = 1;
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            let total = auc_roc(&scores, &labels).unwrap() + auc_roc(&neg, &labels).unwrap();
            prop_assert!((total - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn perfect_ranker_has_unit_ap(n_pos in 1usize..20, n_neg in 0usize..20) {
            let scores: Vec<f64> = (0..n_pos + n_neg).map(|i| -(i as f64)).collect();
            let labels: Vec<u8> = (0..n_pos + n_neg).map(|i| u8::from(i < n_pos)).collect();
            prop_assert_eq!(auc_pr(&scores, &labels).unwrap(), 1.0);
        }
    }
}
