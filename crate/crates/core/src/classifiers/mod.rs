//! Binary classifiers behind one contract: train on `N x d` features with
//! 0/1 labels, then produce scores in `[0, 1]` for ranking metrics.

mod boosting;
mod forest;
mod knn;
mod logistic;
mod mlp;
mod persist;
pub mod tree;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use boosting::BoostedTrees;
pub use forest::RandomForest;
pub use knn::{DistanceMetric, Knn};
pub use logistic::LogisticRegression;
pub use mlp::Mlp;
pub use persist::{load_model, read_model, save_model, write_model, MODEL_FORMAT_VERSION, MODEL_MAGIC};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("{0} needs both classes in the training labels")]
    DegenerateLabels(ClassifierKind),
    #[error("non-finite feature at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("feature dimension mismatch: model expects {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid training data: {0}")]
    InvalidData(String),
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix shape mismatch");
        Self { rows, cols, data }
    }

    /// All rows must share one length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    fn check_finite(&self) -> Result<(), ClassifierError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(p) => Err(ClassifierError::NonFinite {
                row: p / self.cols.max(1),
                col: p % self.cols.max(1),
            }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    RandomForest,
    GradientBoostedTrees,
    LogisticRegression,
    KNearestNeighbors,
    MultilayerPerceptron,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 5] = [
        ClassifierKind::RandomForest,
        ClassifierKind::GradientBoostedTrees,
        ClassifierKind::LogisticRegression,
        ClassifierKind::KNearestNeighbors,
        ClassifierKind::MultilayerPerceptron,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ClassifierKind::RandomForest => "random-forest",
            ClassifierKind::GradientBoostedTrees => "gradient-boosted-trees",
            ClassifierKind::LogisticRegression => "logistic-regression",
            ClassifierKind::KNearestNeighbors => "k-nearest-neighbors",
            ClassifierKind::MultilayerPerceptron => "multilayer-perceptron",
        }
    }

    /// Forests and KNN still produce (constant) scores from one class.
    pub fn tolerates_single_class(&self) -> bool {
        matches!(self, ClassifierKind::RandomForest | ClassifierKind::KNearestNeighbors)
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ClassifierKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown classifier {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features tried per split; `None` means `ceil(sqrt(d))`.
    pub max_features: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 1000,
            max_features: None,
            min_samples_leaf: 1,
            max_depth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Minimum hessian sum per child.
    pub min_child_weight: f64,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            n_rounds: 1000,
            max_depth: 6,
            learning_rate: 0.1,
            lambda: 1.0,
            min_child_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticParams {
    pub l2: f64,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            tolerance: 1e-6,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnnParams {
    pub k: usize,
    pub metric: DistanceMetric,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self {
            k: 5,
            metric: DistanceMetric::Euclidean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden: vec![32, 16],
            dropout: 0.5,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 200,
            patience: 10,
            validation_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum Hyperparameters {
    RandomForest(ForestParams),
    GradientBoostedTrees(BoostParams),
    LogisticRegression(LogisticParams),
    KNearestNeighbors(KnnParams),
    MultilayerPerceptron(MlpParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    #[serde(flatten)]
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
}

impl Hyperparameters {
    pub fn default_for(kind: ClassifierKind) -> Self {
        match kind {
            ClassifierKind::RandomForest => Hyperparameters::RandomForest(ForestParams::default()),
            ClassifierKind::GradientBoostedTrees => Hyperparameters::GradientBoostedTrees(BoostParams::default()),
            ClassifierKind::LogisticRegression => Hyperparameters::LogisticRegression(LogisticParams::default()),
            ClassifierKind::KNearestNeighbors => Hyperparameters::KNearestNeighbors(KnnParams::default()),
            ClassifierKind::MultilayerPerceptron => Hyperparameters::MultilayerPerceptron(MlpParams::default()),
        }
    }

    pub fn kind(&self) -> ClassifierKind {
        match self {
            Hyperparameters::RandomForest(_) => ClassifierKind::RandomForest,
            Hyperparameters::GradientBoostedTrees(_) => ClassifierKind::GradientBoostedTrees,
            Hyperparameters::LogisticRegression(_) => ClassifierKind::LogisticRegression,
            Hyperparameters::KNearestNeighbors(_) => ClassifierKind::KNearestNeighbors,
            Hyperparameters::MultilayerPerceptron(_) => ClassifierKind::MultilayerPerceptron,
        }
    }
}

impl ClassifierSpec {
    /// Spec with the variant's default hyperparameters.
    pub fn default_for(kind: ClassifierKind, seed: u64) -> Self {
        Self {
            hyperparameters: Hyperparameters::default_for(kind),
            seed,
        }
    }

    pub fn kind(&self) -> ClassifierKind {
        self.hyperparameters.kind()
    }

    /// Short identifier used in reports, e.g. `random-forest-1000`, `k-nearest-neighbors-5`.
    pub fn id(&self) -> String {
        match &self.hyperparameters {
            Hyperparameters::RandomForest(p) => format!("random-forest-{}", p.n_trees),
            Hyperparameters::GradientBoostedTrees(p) => format!("gradient-boosted-trees-{}", p.n_rounds),
            Hyperparameters::LogisticRegression(_) => "logistic-regression".into(),
            Hyperparameters::KNearestNeighbors(p) => format!("k-nearest-neighbors-{}", p.k),
            Hyperparameters::MultilayerPerceptron(p) => format!(
                "multilayer-perceptron-{}",
                p.hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join("x")
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelState {
    RandomForest(RandomForest),
    GradientBoostedTrees(BoostedTrees),
    LogisticRegression(LogisticRegression),
    KNearestNeighbors(Knn),
    MultilayerPerceptron(Mlp),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub duration_ms: f64,
    /// Trees, boosting rounds, optimizer iterations or epochs.
    pub iterations: usize,
    pub final_loss: Option<f64>,
    /// Per-iteration objective where the optimizer records one.
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ClassifierSpec,
    pub feature_dim: usize,
    pub state: ModelState,
    pub training_report: TrainingReport,
}

pub fn train_classifier(spec: &ClassifierSpec, x: &Matrix, y: &[u8]) -> Result<TrainedModel, ClassifierError> {
    if x.rows() != y.len() {
        return Err(ClassifierError::InvalidData(format!(
            "{} rows but {} labels",
            x.rows(),
            y.len()
        )));
    }
    if x.rows() == 0 || x.cols() == 0 {
        return Err(ClassifierError::InvalidData("empty feature matrix".into()));
    }
    if let Some(bad) = y.iter().find(|&&l| l > 1) {
        return Err(ClassifierError::InvalidData(format!("label {bad} is not 0/1")));
    }
    x.check_finite()?;
    let kind = spec.kind();
    let positives = y.iter().filter(|&&l| l == 1).count();
    let both = positives > 0 && positives < y.len();
    if !both && !kind.tolerates_single_class() {
        return Err(ClassifierError::DegenerateLabels(kind));
    }
    if x.rows() < 2 && !kind.tolerates_single_class() {
        return Err(ClassifierError::InvalidData("need at least 2 samples".into()));
    }

    let start = Instant::now();
    let (state, mut report) = match &spec.hyperparameters {
        Hyperparameters::RandomForest(p) => {
            let m = RandomForest::fit(x, y, p, spec.seed);
            let report = TrainingReport {
                iterations: m.trees.len(),
                ..Default::default()
            };
            (ModelState::RandomForest(m), report)
        }
        Hyperparameters::GradientBoostedTrees(p) => {
            let (m, history) = BoostedTrees::fit(x, y, p);
            let report = TrainingReport {
                iterations: m.trees.len(),
                final_loss: history.last().copied(),
                loss_history: history,
                ..Default::default()
            };
            (ModelState::GradientBoostedTrees(m), report)
        }
        Hyperparameters::LogisticRegression(p) => {
            let (m, history) = LogisticRegression::fit(x, y, p);
            let report = TrainingReport {
                iterations: history.len().saturating_sub(1),
                final_loss: history.last().copied(),
                loss_history: history,
                ..Default::default()
            };
            (ModelState::LogisticRegression(m), report)
        }
        Hyperparameters::KNearestNeighbors(p) => (
            ModelState::KNearestNeighbors(Knn::fit(x, y, p)),
            TrainingReport::default(),
        ),
        Hyperparameters::MultilayerPerceptron(p) => {
            let (m, history) = Mlp::fit(x, y, p, spec.seed);
            let report = TrainingReport {
                iterations: history.len(),
                final_loss: history.last().copied(),
                loss_history: history,
                ..Default::default()
            };
            (ModelState::MultilayerPerceptron(m), report)
        }
    };
    report.duration_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(TrainedModel {
        spec: spec.clone(),
        feature_dim: x.cols(),
        state,
        training_report: report,
    })
}

pub fn predict_scores(model: &TrainedModel, x: &Matrix) -> Result<Vec<f64>, ClassifierError> {
    if x.cols() != model.feature_dim {
        return Err(ClassifierError::DimensionMismatch {
            expected: model.feature_dim,
            actual: x.cols(),
        });
    }
    x.check_finite()?;
    let scores: Vec<f64> = (0..x.rows())
        .map(|i| {
            let row = x.row(i);
            match &model.state {
                ModelState::RandomForest(m) => m.score(row),
                ModelState::GradientBoostedTrees(m) => m.score(row),
                ModelState::LogisticRegression(m) => m.score(row),
                ModelState::KNearestNeighbors(m) => m.score(row),
                ModelState::MultilayerPerceptron(m) => m.score(row),
            }
        })
        .collect();
    debug_assert!(scores.iter().all(|s| (0.0..=1.0).contains(s)));
    Ok(scores)
}

/// `score >= threshold` becomes 1.
pub fn predict_labels(model: &TrainedModel, x: &Matrix, threshold: f64) -> Result<Vec<u8>, ClassifierError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(ClassifierError::InvalidThreshold(threshold));
    }
    Ok(labels_from_scores(&predict_scores(model, x)?, threshold))
}

pub fn labels_from_scores(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s >= threshold)).collect()
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}
