use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::citations::{DEFAULT_CONCURRENCY, DEFAULT_HORIZON_YEAR, DEFAULT_RATE_PER_SECOND, OPENALEX_BASE_URL};
use crate::classifiers::{ClassifierKind, Hyperparameters};
use crate::corpus::{CorpusFormat, DEFAULT_YEAR_RANGE};
use crate::dataset::Balance;
use crate::embedding::{DEFAULT_BATCH_SIZE, DEFAULT_MAX_CHARS, DEFAULT_MODEL, DEFAULT_REMOTE_DIM, DEFAULT_SVD_DIM};
use crate::evaluation::{SplitPlan, TextScope};
use crate::labeling::TargetMetric;

use super::PipelineError;

pub const DEFAULT_SEED: u64 = 42;

/// Whole-pipeline configuration, normally read from a TOML file.
///
/// Relative paths in a file are resolved against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub corpus: CorpusConfig,
    pub citations: CitationsConfig,
    pub labels: LabelsConfig,
    pub embeddings: Vec<EmbeddingProvider>,
    pub experiment: ExperimentConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            out_dir: PathBuf::from("out"),
            corpus: CorpusConfig::default(),
            citations: CitationsConfig::default(),
            labels: LabelsConfig::default(),
            embeddings: vec![EmbeddingProvider::TfidfSvd {
                dim: DEFAULT_SVD_DIM,
                text_scope: TextScope::Abstract,
                pooling: Pooling::Mean,
            }],
            experiment: ExperimentConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub path: PathBuf,
    pub format: CorpusFormat,
    pub first_year: i32,
    pub last_year: i32,
    /// Drop records without a parsable body instead of keeping them for
    /// abstract-only experiments.
    pub strict: bool,
    /// Section headings removed before embedding (case-insensitive).
    pub drop_sections: Vec<String>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            path: PathBuf::from("corpus.jsonl"),
            format: CorpusFormat::JsonLines,
            first_year: *DEFAULT_YEAR_RANGE.start(),
            last_year: *DEFAULT_YEAR_RANGE.end(),
            strict: false,
            drop_sections: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CitationsConfig {
    /// Citation cache; defaults to `citations/cache.jsonl` under the output directory.
    pub cache: Option<PathBuf>,
    pub base_url: String,
    pub mailto: Option<String>,
    /// Serve everything from the cache and report uncached DOIs as missing.
    pub offline: bool,
    pub rate_limit: f64,
    pub concurrency: usize,
    pub horizon_year: i32,
}

impl Default for CitationsConfig {
    fn default() -> Self {
        Self {
            cache: None,
            base_url: OPENALEX_BASE_URL.into(),
            mailto: None,
            offline: false,
            rate_limit: DEFAULT_RATE_PER_SECOND,
            concurrency: DEFAULT_CONCURRENCY,
            horizon_year: DEFAULT_HORIZON_YEAR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelsConfig {
    pub metrics: Vec<TargetMetric>,
    pub qs: Vec<f64>,
    pub years_ahead: Vec<u32>,
}

impl Default for LabelsConfig {
    fn default() -> Self {
        Self {
            metrics: vec![TargetMetric::Acc, TargetMetric::Ycc],
            qs: vec![0.2],
            years_ahead: (0..=11).collect(),
        }
    }
}

/// How section vectors are combined into a full-text vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    #[default]
    Mean,
    /// Weighted by section length in characters.
    LengthWeighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provider", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EmbeddingProvider {
    TfidfSvd {
        #[serde(default = "default_svd_dim")]
        dim: usize,
        #[serde(default = "default_scope")]
        text_scope: TextScope,
        #[serde(default)]
        pooling: Pooling,
    },
    Remote {
        /// Falls back to `IMPACT_EMBED_MODEL`, then the provider default.
        #[serde(default)]
        model: Option<String>,
        /// Falls back to `IMPACT_EMBED_ENDPOINT`, then the provider default.
        #[serde(default)]
        endpoint: Option<String>,
        #[serde(default = "default_remote_dim")]
        dim: usize,
        #[serde(default = "default_scope")]
        text_scope: TextScope,
        #[serde(default)]
        pooling: Pooling,
        #[serde(default = "default_batch_size")]
        batch_size: usize,
        #[serde(default = "default_max_chars")]
        max_chars: usize,
    },
    Import {
        path: PathBuf,
        model_id: String,
        dim: usize,
        #[serde(default = "default_scope")]
        text_scope: TextScope,
    },
}

fn default_svd_dim() -> usize {
    DEFAULT_SVD_DIM
}
fn default_remote_dim() -> usize {
    DEFAULT_REMOTE_DIM
}
fn default_scope() -> TextScope {
    TextScope::Abstract
}
fn default_batch_size() -> usize {
    DEFAULT_BATCH_SIZE
}
fn default_max_chars() -> usize {
    DEFAULT_MAX_CHARS
}

impl EmbeddingProvider {
    pub fn text_scope(&self) -> TextScope {
        match self {
            EmbeddingProvider::TfidfSvd { text_scope, .. }
            | EmbeddingProvider::Remote { text_scope, .. }
            | EmbeddingProvider::Import { text_scope, .. } => *text_scope,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            EmbeddingProvider::TfidfSvd { .. } => "tfidf-svd",
            EmbeddingProvider::Remote { .. } => "remote",
            EmbeddingProvider::Import { .. } => "import",
        }
    }

    /// The model name used by a remote provider after environment fallbacks.
    pub fn remote_model(&self) -> Option<String> {
        match self {
            EmbeddingProvider::Remote { model, .. } => Some(
                model
                    .clone()
                    .or_else(|| std::env::var(crate::embedding::ENV_EMBED_MODEL).ok())
                    .unwrap_or_else(|| DEFAULT_MODEL.to_string()),
            ),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub classifiers: Vec<Hyperparameters>,
    pub balances: Vec<Balance>,
    pub split: SplitPlan,
    /// Concurrently evaluated cells; all cores when unset.
    pub workers: Option<usize>,
    pub permute_labels: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            classifiers: ClassifierKind::ALL.iter().map(|k| Hyperparameters::default_for(*k)).collect(),
            balances: Balance::ALL.to_vec(),
            split: SplitPlan::default(),
            workers: None,
            permute_labels: false,
        }
    }
}

impl PipelineConfig {
    /// Parses TOML text; relative paths stay relative.
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and resolves its relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        fix(&mut self.corpus.path);
        if let Some(c) = self.citations.cache.as_mut() {
            fix(c);
        }
        for e in &mut self.embeddings {
            if let EmbeddingProvider::Import { path, .. } = e {
                fix(path);
            }
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.corpus.first_year > self.corpus.last_year {
            return bad(format!(
                "corpus.first_year {} is after corpus.last_year {}",
                self.corpus.first_year, self.corpus.last_year
            ));
        }
        if let Some(q) = self.labels.qs.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
            return bad(format!("labels.qs: {q} is not in (0, 1)"));
        }
        if self.labels.metrics.is_empty() || self.labels.qs.is_empty() || self.labels.years_ahead.is_empty() {
            return bad("labels.metrics, labels.qs and labels.years_ahead must be non-empty".into());
        }
        if self.embeddings.is_empty() {
            return bad("at least one [[embeddings]] provider is required".into());
        }
        for e in &self.embeddings {
            match e {
                EmbeddingProvider::TfidfSvd { dim: 0, .. }
                | EmbeddingProvider::Remote { dim: 0, .. }
                | EmbeddingProvider::Import { dim: 0, .. } => return bad("embedding dim must be positive".into()),
                EmbeddingProvider::Remote { max_chars: 0, .. } | EmbeddingProvider::Remote { batch_size: 0, .. } => {
                    return bad("remote max_chars and batch_size must be positive".into())
                }
                EmbeddingProvider::Import { model_id, dim, .. } => {
                    if let Some(known) = crate::embedding::known_dim(model_id).filter(|k| k != dim) {
                        return bad(format!("import {model_id}: dim {dim} but the model has {known}"));
                    }
                }
                _ => {}
            }
        }
        if self.experiment.classifiers.is_empty() || self.experiment.balances.is_empty() {
            return bad("experiment.classifiers and experiment.balances must be non-empty".into());
        }
        match self.experiment.split {
            SplitPlan::Shuffle { test_fraction, .. } | SplitPlan::YearProportional { test_fraction }
                if !(test_fraction > 0.0 && test_fraction < 1.0) =>
            {
                return bad(format!("experiment.split.test_fraction {test_fraction} is not in (0, 1)"));
            }
            SplitPlan::KFold { k } if k < 2 => return bad(format!("experiment.split.k = {k}; need at least 2")),
            _ => {}
        }
        if self.experiment.workers == Some(0) {
            return bad("experiment.workers must be positive".into());
        }
        if self.citations.rate_limit <= 0.0 || self.citations.concurrency == 0 {
            return bad("citations.rate_limit and citations.concurrency must be positive".into());
        }
        Ok(())
    }

    pub fn citation_cache_path(&self) -> PathBuf {
        self.citations
            .cache
            .clone()
            .unwrap_or_else(|| self.out_dir.join("citations").join("cache.jsonl"))
    }
}
