//! Dense document vectors from three providers: TFIDF + truncated SVD
//! computed locally, a remote embedding API, and imported vector stores.

mod remote;
mod sparse;
mod store;
mod svd;
mod tfidf;
mod tokenize;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use remote::{
    split_to_limit, text_hash, RemoteEmbedder, DEFAULT_BATCH_SIZE, DEFAULT_ENDPOINT, DEFAULT_MAX_CHARS,
    DEFAULT_MODEL, DEFAULT_REMOTE_DIM, ENV_EMBED_API_KEY, ENV_EMBED_ENDPOINT, ENV_EMBED_MODEL,
};
pub use sparse::{SparseMatrix, SparseVector};
pub use store::{import_vectors, load_vectors, read_vectors, write_vectors, write_vectors_file, MAGIC};
pub use svd::{truncated_svd, SvdFactors, OVERSAMPLING, POWER_ITERATIONS};
pub use tfidf::{tfidf_fit, tfidf_matrix, tfidf_transform, TfidfModel};
pub use tokenize::tokenize;

pub const DEFAULT_SVD_DIM: usize = 4096;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("no tokens in any document")]
    EmptyCorpus,
    #[error("rank {k} not in 1..={max_rank}")]
    RankTooLarge { k: usize, max_rank: usize },
    #[error("dimension mismatch{}: expected {expected}, got {actual}", .doi.as_ref().map(|d| format!(" for {d}")).unwrap_or_default())]
    DimensionMismatch {
        doi: Option<String>,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite component{}", .0.as_ref().map(|d| format!(" for {d}")).unwrap_or_default())]
    NonFinite(Option<String>),
    #[error("duplicate doi {0}")]
    DuplicateDoi(String),
    #[error("truncated vector store while reading {0}")]
    Truncated(String),
    #[error("vector store: {0}")]
    Store(String),
    #[error("cannot average an empty list of vectors")]
    EmptyAverage,
    #[error("embedding authentication failed: {0}")]
    Auth(String),
    #[error("embedding upstream failure: {0}")]
    Upstream(String),
    #[error("embedding request rejected: {0}")]
    Request(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fixed dimensions of the known providers, keyed by model id.
pub fn known_dim(model_id: &str) -> Option<usize> {
    match model_id {
        "remote-ada" => Some(DEFAULT_REMOTE_DIM),
        "import-sbert" => Some(768),
        "import-use" => Some(512),
        "import-infersent" => Some(4096),
        id => id.strip_prefix("tfidf-svd-").and_then(|k| k.parse().ok()),
    }
}

/// Per-paper vectors under one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    pub model_id: String,
    pub dim: usize,
    pub vectors: BTreeMap<String, Vec<f32>>,
}

impl EmbeddingMatrix {
    /// Checks lengths, finiteness and, for known model ids, the provider dimension.
    pub fn new(model_id: String, dim: usize, vectors: BTreeMap<String, Vec<f32>>) -> Result<Self, EmbedError> {
        if dim == 0 {
            return Err(EmbedError::DimensionMismatch {
                doi: None,
                expected: 1,
                actual: 0,
            });
        }
        if let Some(expected) = known_dim(&model_id) {
            if expected != dim {
                return Err(EmbedError::DimensionMismatch {
                    doi: None,
                    expected,
                    actual: dim,
                });
            }
        }
        for (doi, v) in &vectors {
            if v.len() != dim {
                return Err(EmbedError::DimensionMismatch {
                    doi: Some(doi.clone()),
                    expected: dim,
                    actual: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(EmbedError::NonFinite(Some(doi.clone())));
            }
        }
        Ok(Self {
            model_id,
            dim,
            vectors,
        })
    }

    pub fn get(&self, doi: &str) -> Option<&[f32]> {
        self.vectors.get(doi).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Unweighted component-wise mean.
pub fn average_section_vectors(section_vectors: &[Vec<f32>]) -> Result<Vec<f32>, EmbedError> {
    Ok(mean_f64(section_vectors)?.into_iter().map(|a| a as f32).collect())
}

fn mean_f64(vectors: &[Vec<f32>]) -> Result<Vec<f64>, EmbedError> {
    let first = vectors.first().ok_or(EmbedError::EmptyAverage)?;
    let dim = first.len();
    let mut acc = vec![0.0f64; dim];
    for v in vectors {
        if v.len() != dim {
            return Err(EmbedError::DimensionMismatch {
                doi: None,
                expected: dim,
                actual: v.len(),
            });
        }
        for (a, x) in acc.iter_mut().zip(v) {
            *a += f64::from(*x);
        }
    }
    let n = vectors.len() as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

/// Mean weighted by `weights` (e.g. section lengths in characters).
pub fn weighted_average_vectors(vectors: &[Vec<f32>], weights: &[f64]) -> Result<Vec<f32>, EmbedError> {
    let first = vectors.first().ok_or(EmbedError::EmptyAverage)?;
    let total: f64 = weights.iter().sum();
    if weights.len() != vectors.len() || total <= 0.0 {
        return average_section_vectors(vectors);
    }
    let mut acc = vec![0.0f64; first.len()];
    for (v, w) in vectors.iter().zip(weights) {
        if v.len() != acc.len() {
            return Err(EmbedError::DimensionMismatch {
                doi: None,
                expected: acc.len(),
                actual: v.len(),
            });
        }
        for (a, x) in acc.iter_mut().zip(v) {
            *a += w * f64::from(*x);
        }
    }
    Ok(acc.into_iter().map(|a| (a / total) as f32).collect())
}

/// Fits TFIDF on `documents` and projects to `target_dim` dimensions.
///
/// When the corpus is too small for `target_dim`, the rank is capped at
/// `min(N, V) - 1` (at least 1) and a warning is logged.
pub fn embed_tfidf_svd(
    documents: &[(String, String)],
    target_dim: usize,
    seed: u64,
) -> Result<(EmbeddingMatrix, TfidfModel, SvdFactors), EmbedError> {
    let tokens: Vec<Vec<String>> = documents.iter().map(|(_, t)| tokenize(t)).collect();
    let model = tfidf_fit(&tokens)?;
    let matrix = tfidf_matrix(&model, &tokens);
    let max_rank = matrix.rows.min(matrix.cols);
    let k = if target_dim > max_rank.saturating_sub(1) {
        let capped = max_rank.saturating_sub(1).max(1);
        log::warn!(
            "tfidf-svd: requested {target_dim} dims but corpus is {}x{}; using {capped}",
            matrix.rows,
            matrix.cols
        );
        capped
    } else {
        target_dim
    };
    let (factors, emb) = truncated_svd(&matrix, k, seed)?;
    let vectors = documents
        .iter()
        .enumerate()
        .map(|(i, (doi, _))| (doi.clone(), emb.row(i).iter().map(|x| *x as f32).collect()))
        .collect();
    let m = EmbeddingMatrix::new(format!("tfidf-svd-{k}"), k, vectors)?;
    Ok((m, model, factors))
}
