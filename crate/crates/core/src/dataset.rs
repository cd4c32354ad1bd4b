//! Train/test splits and class-balance treatments.
//!
//! Every function is pure: the same inputs and seed always give the same
//! output. Inputs are sorted by DOI before shuffling so callers do not need
//! to care about the order they pass items in.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::Matrix;
use crate::embedding::EmbeddingMatrix;
use crate::rng::rng_from_seed;

pub const DEFAULT_TEST_FRACTION: f64 = 0.30;
pub const DEFAULT_YEAR_TEST_FRACTION: f64 = 0.20;
pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("need at least {needed} items, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("cannot balance: no {0} examples")]
    EmptyClass(&'static str),
    #[error("test fraction {0} outside (0, 1)")]
    InvalidFraction(f64),
    #[error("duplicate doi {0}")]
    DuplicateDoi(String),
    #[error("no embedding for {0}")]
    MissingEmbedding(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitScheme {
    /// Unstratified shuffle, 30% test by default.
    Shuffle7030,
    /// 20% of each publication-year stratum goes to test.
    YearProportional8020,
    /// Fold `index` (0-based) of `k` is the test side.
    KFold { index: usize, k: usize },
}

impl fmt::Display for SplitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitScheme::Shuffle7030 => f.write_str("shuffle-70-30"),
            SplitScheme::YearProportional8020 => f.write_str("year-proportional-80-20"),
            SplitScheme::KFold { index, k } => write!(f, "kfold({} of {k})", index + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Balance {
    /// Negatives undersampled to match positives on both sides.
    Balanced,
    /// Natural class distribution on both sides.
    Skewed,
}

impl Balance {
    pub const ALL: [Balance; 2] = [Balance::Balanced, Balance::Skewed];
}

impl fmt::Display for Balance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Balance::Balanced => "balanced",
            Balance::Skewed => "skewed",
        })
    }
}

impl FromStr for Balance {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "balanced" => Ok(Balance::Balanced),
            "skewed" => Ok(Balance::Skewed),
            other => Err(format!("unknown balance {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_dois: Vec<String>,
    pub test_dois: Vec<String>,
    pub seed: u64,
    pub scheme: SplitScheme,
}

impl DatasetSplit {
    /// Audit export with columns `doi, side, scheme, seed`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["doi", "side", "scheme", "seed"])?;
        let scheme = self.scheme.to_string();
        let seed = self.seed.to_string();
        for (side, dois) in [("train", &self.train_dois), ("test", &self.test_dois)] {
            for d in dois {
                w.write_record([d.as_str(), side, scheme.as_str(), seed.as_str()])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn sorted_unique(dois: &[String]) -> Result<Vec<String>, DatasetError> {
    let mut v = dois.to_vec();
    v.sort();
    if let Some(w) = v.windows(2).find(|w| w[0] == w[1]) {
        return Err(DatasetError::DuplicateDoi(w[0].clone()));
    }
    Ok(v)
}

fn test_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction) + 0.5 + 1e-9).floor() as usize
}

fn check_fraction(f: f64) -> Result<(), DatasetError> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(DatasetError::InvalidFraction(f))
    }
}

/// Uniform shuffle; the first `round(test_fraction * n)` DOIs form the test side.
pub fn shuffle_split(dois: &[String], test_fraction: f64, seed: u64) -> Result<DatasetSplit, DatasetError> {
    check_fraction(test_fraction)?;
    if dois.len() < 2 {
        return Err(DatasetError::TooFew {
            needed: 2,
            got: dois.len(),
        });
    }
    let mut v = sorted_unique(dois)?;
    v.shuffle(&mut rng_from_seed(seed));
    let k = test_count(v.len(), test_fraction);
    let train = v.split_off(k);
    Ok(DatasetSplit {
        train_dois: train,
        test_dois: v,
        seed,
        scheme: SplitScheme::Shuffle7030,
    })
}

/// Like [`shuffle_split`] but each label class is split separately, so
/// both sides keep the overall prevalence.
pub fn stratified_shuffle_split(items: &[(String, u8)], test_fraction: f64, seed: u64) -> Result<DatasetSplit, DatasetError> {
    check_fraction(test_fraction)?;
    if items.len() < 2 {
        return Err(DatasetError::TooFew {
            needed: 2,
            got: items.len(),
        });
    }
    let mut strata: BTreeMap<u8, Vec<String>> = BTreeMap::new();
    for (d, l) in items {
        strata.entry(*l).or_default().push(d.clone());
    }
    let (train, test) = split_strata(strata, test_fraction, seed)?;
    Ok(DatasetSplit {
        train_dois: train,
        test_dois: test,
        seed,
        scheme: SplitScheme::Shuffle7030,
    })
}

/// Within each publication-year stratum, `round(test_fraction * size)` DOIs go to test.
pub fn year_proportional_split(records: &[(String, i32)], test_fraction: f64, seed: u64) -> Result<DatasetSplit, DatasetError> {
    check_fraction(test_fraction)?;
    let mut strata: BTreeMap<i32, Vec<String>> = BTreeMap::new();
    for (d, y) in records {
        strata.entry(*y).or_default().push(d.clone());
    }
    let (train, test) = split_strata(strata, test_fraction, seed)?;
    Ok(DatasetSplit {
        train_dois: train,
        test_dois: test,
        seed,
        scheme: SplitScheme::YearProportional8020,
    })
}

fn split_strata<K: Ord>(
    strata: BTreeMap<K, Vec<String>>,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>), DatasetError> {
    let mut rng = rng_from_seed(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut seen = BTreeSet::new();
    for (_, members) in strata {
        let mut v = sorted_unique(&members)?;
        for d in &v {
            if !seen.insert(d.clone()) {
                return Err(DatasetError::DuplicateDoi(d.clone()));
            }
        }
        v.shuffle(&mut rng);
        let k = test_count(v.len(), test_fraction);
        train.extend(v.split_off(k));
        test.extend(v);
    }
    Ok((train, test))
}

/// Keeps every example of the smaller class and samples the larger class
/// without replacement down to the same size. With the usual top-q labels
/// (q < 0.5) the smaller class is the positives. Output is sorted by DOI.
pub fn balance_undersample(items: &[(String, u8)], seed: u64) -> Result<Vec<String>, DatasetError> {
    let mut pos: Vec<String> = items.iter().filter(|(_, l)| *l == 1).map(|(d, _)| d.clone()).collect();
    let mut neg: Vec<String> = items.iter().filter(|(_, l)| *l != 1).map(|(d, _)| d.clone()).collect();
    if pos.is_empty() {
        return Err(DatasetError::EmptyClass("positive"));
    }
    if neg.is_empty() {
        return Err(DatasetError::EmptyClass("negative"));
    }
    pos = sorted_unique(&pos)?;
    neg = sorted_unique(&neg)?;
    let (keep, mut sample) = if pos.len() <= neg.len() { (pos, neg) } else { (neg, pos) };
    sample.shuffle(&mut rng_from_seed(seed));
    sample.truncate(keep.len());
    let mut out = keep;
    out.extend(sample);
    out.sort();
    Ok(out)
}

/// Partitions `dois` into `k` folds whose sizes differ by at most one;
/// split `i` tests on fold `i` and trains on the rest.
pub fn k_folds(dois: &[String], k: usize, seed: u64) -> Result<Vec<DatasetSplit>, DatasetError> {
    if k < 2 || dois.len() < k {
        return Err(DatasetError::TooFew {
            needed: k.max(2),
            got: dois.len(),
        });
    }
    let mut v = sorted_unique(dois)?;
    v.shuffle(&mut rng_from_seed(seed));
    let mut folds: Vec<Vec<String>> = vec![Vec::new(); k];
    for (i, d) in v.into_iter().enumerate() {
        folds[i % k].push(d);
    }
    Ok((0..k)
        .map(|i| DatasetSplit {
            train_dois: folds
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .flat_map(|(_, f)| f.iter().cloned())
                .collect(),
            test_dois: folds[i].clone(),
            seed,
            scheme: SplitScheme::KFold { index: i, k },
        })
        .collect())
}

/// Stacks the embedding rows of `dois` (in order) into a feature matrix.
pub fn feature_matrix(emb: &EmbeddingMatrix, dois: &[String]) -> Result<Matrix, DatasetError> {
    let mut data = Vec::with_capacity(dois.len() * emb.dim);
    for d in dois {
        let v = emb.get(d).ok_or_else(|| DatasetError::MissingEmbedding(d.clone()))?;
        data.extend(v.iter().map(|x| f64::from(*x)));
    }
    Ok(Matrix::new(dois.len(), emb.dim, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dois(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("10.1/{i:04}")).collect()
    }

    fn labelled(pos: usize, neg: usize) -> Vec<(String, u8)> {
        dois(pos + neg).into_iter().enumerate().map(|(i, d)| (d, u8::from(i < pos))).collect()
    }

    #[test]
    fn shuffle_split_sizes_and_determinism() {
        let s = shuffle_split(&dois(10), 0.3, 1).unwrap();
        assert_eq!((s.test_dois.len(), s.train_dois.len()), (3, 7));
        assert_eq!(s, shuffle_split(&dois(10), 0.3, 1).unwrap());
        assert!(matches!(shuffle_split(&dois(1), 0.3, 1), Err(DatasetError::TooFew { .. })));
        let mut rev = dois(10);
        rev.reverse();
        assert_eq!(shuffle_split(&rev, 0.3, 1).unwrap(), s);
    }

    #[test]
    fn each_doi_tested_about_thirty_percent_of_the_time() {
        let ds = dois(20);
        let mut hits: BTreeMap<String, usize> = BTreeMap::new();
        for seed in 0..1000 {
            for d in shuffle_split(&ds, 0.3, seed).unwrap().test_dois {
                *hits.entry(d).or_default() += 1;
            }
        }
        for d in &ds {
            let f = hits.get(d).copied().unwrap_or(0) as f64 / 1000.0;
            assert!((f - 0.3).abs() <= 0.05, "{d}: {f}");
        }
    }

    #[test]
    fn stratified_split_keeps_prevalence() {
        let s = stratified_shuffle_split(&labelled(20, 80), 0.3, 4).unwrap();
        let pos_test = s.test_dois.iter().filter(|d| d.as_str() < "10.1/0020").count();
        assert_eq!((pos_test, s.test_dois.len()), (6, 30));
    }

    #[test]
    fn year_strata() {
        let mut recs: Vec<(String, i32)> = dois(10).into_iter().map(|d| (d, 2012)).collect();
        recs.extend((10..30).map(|i| (format!("10.1/{i:04}"), 2013)));
        let s = year_proportional_split(&recs, 0.2, 3).unwrap();
        let test_2012 = s.test_dois.iter().filter(|d| d.as_str() < "10.1/0010").count();
        assert_eq!((test_2012, s.test_dois.len() - test_2012), (2, 4));
        // A single stratum uses the same test size rule as the plain shuffle.
        let single: Vec<(String, i32)> = dois(17).into_iter().map(|d| (d, 2015)).collect();
        let a = year_proportional_split(&single, 0.2, 9).unwrap();
        let b = shuffle_split(&dois(17), 0.2, 9).unwrap();
        assert_eq!(a.test_dois, b.test_dois);
    }

    #[test]
    fn undersampling_examples() {
        let b = balance_undersample(&labelled(20, 80), 5).unwrap();
        assert_eq!(b.len(), 40);
        assert_eq!(b.iter().filter(|d| d.as_str() < "10.1/0020").count(), 20);
        let even = labelled(10, 10);
        assert_eq!(balance_undersample(&even, 5).unwrap(), dois(20));
        assert!(matches!(balance_undersample(&labelled(0, 5), 1), Err(DatasetError::EmptyClass("positive"))));
        assert!(matches!(balance_undersample(&labelled(5, 0), 1), Err(DatasetError::EmptyClass("negative"))));
    }

    #[test]
    fn folds_of_ten() {
        let f = k_folds(&dois(10), 5, 2).unwrap();
        assert_eq!(f.len(), 5);
        let mut all: Vec<String> = f.iter().flat_map(|s| s.test_dois.clone()).collect();
        assert!(f.iter().all(|s| s.test_dois.len() == 2 && s.train_dois.len() == 8));
        all.sort();
        assert_eq!(all, dois(10));
        assert!(matches!(k_folds(&dois(3), 5, 2), Err(DatasetError::TooFew { .. })));
    }

    #[test]
    fn csv_export() {
        let s = shuffle_split(&dois(3), 0.3, 8).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "doi,side,scheme,seed");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].ends_with(",train,shuffle-70-30,8"));
        assert!(lines[3].ends_with(",test,shuffle-70-30,8"));
        assert_eq!(SplitScheme::KFold { index: 0, k: 5 }.to_string(), "kfold(1 of 5)");
    }

    proptest! {
        #[test]
        fn shuffle_split_partitions(n in 2usize..200, frac in 0.05f64..0.95, seed: u64) {
            let ds = dois(n);
            let s = shuffle_split(&ds, frac, seed).unwrap();
            let train: BTreeSet<_> = s.train_dois.iter().collect();
            let test: BTreeSet<_> = s.test_dois.iter().collect();
            prop_assert!(train.is_disjoint(&test));
            prop_assert_eq!(train.len() + test.len(), n);
            prop_assert_eq!(s.test_dois.len(), (n as f64 * frac).round() as usize);
        }

        #[test]
        fn year_split_fraction_per_stratum(sizes in prop::collection::vec(1usize..60, 1..6), seed: u64) {
            let mut recs = Vec::new();
            for (y, &sz) in sizes.iter().enumerate() {
                for i in 0..sz {
                    recs.push((format!("{y}/{i}"), 2012 + y as i32));
                }
            }
            let s = year_proportional_split(&recs, 0.2, seed).unwrap();
            let test: BTreeSet<&String> = s.test_dois.iter().collect();
            for (y, &sz) in sizes.iter().enumerate() {
                let t = (0..sz).filter(|i| test.contains(&format!("{y}/{i}"))).count();
                prop_assert!((t as f64 / sz as f64 - 0.2).abs() <= 1.0 / sz as f64);
            }
            prop_assert_eq!(s.train_dois.len() + s.test_dois.len(), recs.len());
        }

        #[test]
        fn balanced_output_is_equal_parity_subset(pos in 1usize..40, neg in 1usize..120, seed: u64) {
            let items = labelled(pos, neg);
            let out = balance_undersample(&items, seed).unwrap();
            let lookup: BTreeMap<&String, u8> = items.iter().map(|(d, l)| (d, *l)).collect();
            let p = out.iter().filter(|d| lookup[d] == 1).count();
            prop_assert_eq!(p, out.len() - p);
            prop_assert_eq!(p, pos.min(neg));
            let unique: BTreeSet<_> = out.iter().collect();
            prop_assert_eq!(unique.len(), out.len());
        }

        #[test]
        fn folds_partition(n in 5usize..100, k in 2usize..6, seed: u64) {
            let f = k_folds(&dois(n), k, seed).unwrap();
            let sizes: Vec<usize> = f.iter().map(|s| s.test_dois.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let mut count: BTreeMap<&String, usize> = BTreeMap::new();
            for s in &f {
                for d in &s.test_dois {
                    *count.entry(d).or_default() += 1;
                }
                prop_assert_eq!(s.train_dois.len() + s.test_dois.len(), n);
            }
            prop_assert_eq!(count.len(), n);
            prop_assert!(count.values().all(|&c| c == 1));
        }
    }
}
