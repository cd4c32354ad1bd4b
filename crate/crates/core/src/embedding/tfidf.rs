use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::sparse::{SparseMatrix, SparseVector};
use super::EmbedError;

/// Smoothed TFIDF vocabulary: `idf(t) = ln((1 + N) / (1 + df(t))) + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    /// Token to column; columns follow lexicographic token order.
    pub vocabulary: BTreeMap<String, usize>,
    pub doc_count: usize,
    /// Indexed by column.
    pub doc_freq: Vec<usize>,
    /// Indexed by column.
    pub idf: Vec<f64>,
}

impl TfidfModel {
    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn idf_of(&self, token: &str) -> Option<f64> {
        self.vocabulary.get(token).map(|&i| self.idf[i])
    }

    pub fn doc_freq_of(&self, token: &str) -> Option<usize> {
        self.vocabulary.get(token).map(|&i| self.doc_freq[i])
    }
}

pub fn tfidf_fit<S: AsRef<str>>(documents: &[Vec<S>]) -> Result<TfidfModel, EmbedError> {
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in documents {
        let unique: BTreeSet<&str> = doc.iter().map(AsRef::as_ref).collect();
        for t in unique {
            *df.entry(t).or_default() += 1;
        }
    }
    if df.is_empty() {
        return Err(EmbedError::EmptyCorpus);
    }
    let n = documents.len() as f64;
    let mut vocabulary = BTreeMap::new();
    let mut doc_freq = Vec::with_capacity(df.len());
    let mut idf = Vec::with_capacity(df.len());
    for (i, (token, count)) in df.into_iter().enumerate() {
        vocabulary.insert(token.to_string(), i);
        doc_freq.push(count);
        idf.push(((1.0 + n) / (1.0 + count as f64)).ln() + 1.0);
    }
    Ok(TfidfModel {
        vocabulary,
        doc_count: documents.len(),
        doc_freq,
        idf,
    })
}

/// Raw term count times idf, L2-normalised. Out-of-vocabulary tokens are
/// ignored; a document with no known tokens maps to the zero vector.
pub fn tfidf_transform<S: AsRef<str>>(model: &TfidfModel, document: &[S]) -> SparseVector {
    let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
    for t in document {
        if let Some(&col) = model.vocabulary.get(t.as_ref()) {
            *tf.entry(col).or_default() += 1.0;
        }
    }
    let mut indices = Vec::with_capacity(tf.len());
    let mut values = Vec::with_capacity(tf.len());
    for (col, count) in tf {
        indices.push(col);
        values.push(count * model.idf[col]);
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut values {
            *v /= norm;
        }
    } else {
        log::debug!("document has no in-vocabulary tokens; zero tfidf vector");
    }
    SparseVector {
        dim: model.vocab_size(),
        indices,
        values,
    }
}

pub fn tfidf_matrix<S: AsRef<str> + Sync>(model: &TfidfModel, documents: &[Vec<S>]) -> SparseMatrix {
    use rayon::prelude::*;
    let rows: Vec<SparseVector> = documents
        .par_iter()
        .map(|d| tfidf_transform(model, d))
        .collect();
    SparseMatrix::from_rows(model.vocab_size(), &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn docs(raw: &[&str]) -> Vec<Vec<String>> {
        raw.iter()
            .map(|d| d.split_whitespace().map(String::from).collect())
            .collect()
    }

    #[test]
    fn closed_form_idf() {
        let m = tfidf_fit(&docs(&["a b", "a c", "a", "a d"])).unwrap();
        assert!((m.idf_of("a").unwrap() - 1.0).abs() < 1e-12);
        let expected = (5.0f64 / 2.0).ln() + 1.0;
        assert!((m.idf_of("b").unwrap() - expected).abs() < 1e-12);
        assert!((expected - 1.9163).abs() < 1e-4);
        assert_eq!(m.idf_of("b"), m.idf_of("c"));
        assert_eq!(m.vocabulary.values().copied().collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn all_empty_corpus_is_an_error() {
        assert!(matches!(tfidf_fit::<String>(&[vec![], vec![]]), Err(EmbedError::EmptyCorpus)));
        assert!(matches!(tfidf_fit::<String>(&[]), Err(EmbedError::EmptyCorpus)));
    }

    #[test]
    fn single_token_is_unit_vector() {
        let m = tfidf_fit(&docs(&["x y", "y z"])).unwrap();
        let v = tfidf_transform(&m, &["z", "oov"]);
        assert_eq!(v.indices.len(), 1);
        assert!((v.values[0] - 1.0).abs() < 1e-15);
        let zero = tfidf_transform(&m, &["oov"]);
        assert!(zero.indices.is_empty());
    }

    #[test]
    fn doubling_counts_is_invisible() {
        let m = tfidf_fit(&docs(&["a b b c", "b c d", "a d d"])).unwrap();
        let once = tfidf_transform(&m, &["a", "b", "b", "d"]);
        let twice = tfidf_transform(&m, &["a", "b", "b", "d", "a", "b", "b", "d"]);
        assert_eq!(once.indices, twice.indices);
        for (x, y) in once.values.iter().zip(&twice.values) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn idf_strictly_decreases_with_df((n, df_a, df_b) in (2usize..40).prop_flat_map(|n| (Just(n), 1..n)).prop_flat_map(|(n, a)| (Just(n), Just(a), a + 1..=n))) {
            // token "a" in df_a docs, "b" in df_b docs.
            let corpus: Vec<Vec<&str>> = (0..n)
                .map(|i| {
                    let mut d = vec!["filler"];
                    if i < df_a { d.push("a"); }
                    if i < df_b { d.push("b"); }
                    d
                })
                .collect();
            let m = tfidf_fit(&corpus).unwrap();
            prop_assert!(m.idf_of("a").unwrap() > m.idf_of("b").unwrap());
        }

        #[test]
        fn transform_norm_is_zero_or_one(doc in prop::collection::vec(0usize..8, 0..20)) {
            let corpus = docs(&["t0 t1 t2", "t2 t3 t4", "t5 t6 t0"]);
            let m = tfidf_fit(&corpus).unwrap();
            let tokens: Vec<String> = doc.iter().map(|i| format!("t{i}")).collect();
            let v = tfidf_transform(&m, &tokens);
            let norm = v.values.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!(norm == 0.0 || (norm - 1.0).abs() <= 1e-9);
        }
    }
}
