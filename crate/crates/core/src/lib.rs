//! Predicting whether a paper lands in the top-q most-cited papers of its
//! publication-year cohort from its text alone.
//!
//! The crate is organised as a pipeline:
//!
//! * [`corpus`] parses and validates paper records and segments full texts.
//! * [`citations`] retrieves per-year citation counts from OpenAlex with a local cache.
//! * [`labeling`] turns citation series into ACC/YCC counts and top-q labels.
//! * [`embedding`] produces dense vectors (TFIDF + truncated SVD, remote API, imports).
//! * [`dataset`] builds train/test splits and class-balance treatments.
//! * [`classifiers`] trains random forests, boosted trees, logistic regression, KNN and an MLP.
//! * [`evaluation`] computes AUC-ROC / average precision and runs experiment grids.
//! * [`report`] and [`pipeline`] write CSV/JSON/SVG outputs and orchestrate stages.
//! * [`synthetic`] generates corpora with a planted text signal for tests and demos.

pub mod citations;
pub mod classifiers;
pub mod corpus;
pub mod dataset;
pub mod embedding;
pub mod evaluation;
pub mod http;
pub mod labeling;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod synthetic;

pub use citations::{CitationError, CitationSeries};
pub use classifiers::{ClassifierKind, ClassifierSpec, TrainedModel};
pub use corpus::{CohortStats, PaperRecord, Section};
pub use dataset::{Balance, DatasetSplit, SplitScheme};
pub use embedding::{EmbeddingMatrix, SvdFactors, TfidfModel};
pub use evaluation::{EvalRecord, SummaryStats};
pub use labeling::{LabelTable, TargetMetric};
pub use pipeline::{Pipeline, PipelineConfig, PipelineError, Stage};
