//! Ranking metrics, the experiment grid and median summaries.

mod metrics;
mod summary;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{accuracy, auc_pr, auc_roc, MetricError};
pub use summary::{aggregate_median, quantile, summarize, Axis, Score, SummaryStats};

use crate::classifiers::{predict_scores, train_classifier, ClassifierError, ClassifierSpec};
use crate::dataset::{
    balance_undersample, feature_matrix, k_folds, shuffle_split, stratified_shuffle_split, year_proportional_split,
    Balance, DatasetSplit, DEFAULT_FOLDS, DEFAULT_TEST_FRACTION, DEFAULT_YEAR_TEST_FRACTION,
};
use crate::embedding::EmbeddingMatrix;
use crate::labeling::{LabelTable, TargetMetric};
use crate::rng::{derive_seed_tagged, rng_from_seed};

/// Which text an embedding was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TextScope {
    Abstract,
    FullText,
}

impl fmt::Display for TextScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TextScope::Abstract => "abstract",
            TextScope::FullText => "full-text",
        })
    }
}

impl FromStr for TextScope {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "abstract" => Ok(TextScope::Abstract),
            "full-text" => Ok(TextScope::FullText),
            other => Err(format!("unknown text scope {other:?}")),
        }
    }
}

/// One evaluated cell of the experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub embedding_id: String,
    pub classifier_id: String,
    pub target_metric: TargetMetric,
    pub q: f64,
    pub years_ahead: u32,
    pub balance: Balance,
    pub text_scope: TextScope,
    pub seed: u64,
    /// Fold index under k-fold cross-validation.
    pub fold: Option<usize>,
    pub n_test: usize,
    pub prevalence: f64,
    pub auc_roc: f64,
    pub auc_pr: f64,
    /// Accuracy at threshold 0.5, reported for balanced cells only.
    pub accuracy_at_half: Option<f64>,
}

/// A grid cell that produced no record, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub embedding_id: String,
    pub classifier_id: String,
    pub target_metric: TargetMetric,
    pub q: f64,
    pub years_ahead: u32,
    pub balance: Balance,
    pub text_scope: TextScope,
    pub seed: u64,
    pub fold: Option<usize>,
    pub reason: String,
}

/// A `(cohort, years_ahead)` pair with no labels because `cohort + t`
/// lies past the citation horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HorizonExclusion {
    pub cohort: i32,
    pub years_ahead: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SplitPlan {
    Shuffle { test_fraction: f64, stratify: bool },
    YearProportional { test_fraction: f64 },
    KFold { k: usize },
}

impl Default for SplitPlan {
    fn default() -> Self {
        SplitPlan::Shuffle {
            test_fraction: DEFAULT_TEST_FRACTION,
            stratify: false,
        }
    }
}

impl SplitPlan {
    pub fn year_proportional() -> Self {
        SplitPlan::YearProportional {
            test_fraction: DEFAULT_YEAR_TEST_FRACTION,
        }
    }

    pub fn k_fold() -> Self {
        SplitPlan::KFold { k: DEFAULT_FOLDS }
    }

    fn folds(&self) -> Vec<Option<usize>> {
        match self {
            SplitPlan::KFold { k } => (0..*k).map(Some).collect(),
            _ => vec![None],
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScopedEmbedding {
    pub text_scope: TextScope,
    pub matrix: EmbeddingMatrix,
}

/// Data shared by all cells: embeddings (the embedding axis) and one
/// label table per `(target metric, q)`.
#[derive(Debug, Clone, Default)]
pub struct ExperimentData {
    pub embeddings: Vec<ScopedEmbedding>,
    pub labels: Vec<LabelTable>,
}

impl ExperimentData {
    fn label_table(&self, metric: TargetMetric, q: f64) -> Option<&LabelTable> {
        self.labels.iter().find(|t| t.metric == metric && (t.q - q).abs() < 1e-12)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub classifiers: Vec<ClassifierSpec>,
    pub metrics: Vec<TargetMetric>,
    pub qs: Vec<f64>,
    pub years_ahead: Vec<u32>,
    pub balances: Vec<Balance>,
    pub split: SplitPlan,
    /// Master seed; split, balance and permutation seeds derive from it.
    pub seed: u64,
    /// Shuffle training labels before fitting (a leakage control).
    pub permute_labels: bool,
    /// Upper bound on concurrently evaluated cells; `None` uses all cores.
    pub workers: Option<usize>,
}

/// Coordinates of one cell; indices point into the data and grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub embedding: usize,
    pub classifier: usize,
    pub metric: TargetMetric,
    pub q: f64,
    pub years_ahead: u32,
    pub balance: Balance,
    pub fold: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub records: Vec<EvalRecord>,
    pub skipped: Vec<SkippedCell>,
    pub horizon_exclusions: Vec<HorizonExclusion>,
}

/// Cartesian product of the grid axes over the embeddings in `data`.
pub fn cells(grid: &ExperimentGrid, data: &ExperimentData) -> Vec<Cell> {
    let mut out = Vec::new();
    for embedding in 0..data.embeddings.len() {
        for classifier in 0..grid.classifiers.len() {
            for &metric in &grid.metrics {
                for &q in &grid.qs {
                    for &years_ahead in &grid.years_ahead {
                        for &balance in &grid.balances {
                            for fold in grid.split.folds() {
                                out.push(Cell {
                                    embedding,
                                    classifier,
                                    metric,
                                    q,
                                    years_ahead,
                                    balance,
                                    fold,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Trains and scores one cell. Never mutates its inputs; an unevaluable
/// cell comes back as `Err` with the reason.
pub fn run_experiment(grid: &ExperimentGrid, data: &ExperimentData, cell: &Cell) -> Result<EvalRecord, SkippedCell> {
    let emb = &data.embeddings[cell.embedding];
    let spec = &grid.classifiers[cell.classifier];
    let skip = |reason: String| SkippedCell {
        embedding_id: emb.matrix.model_id.clone(),
        classifier_id: spec.id(),
        target_metric: cell.metric,
        q: cell.q,
        years_ahead: cell.years_ahead,
        balance: cell.balance,
        text_scope: emb.text_scope,
        seed: grid.seed,
        fold: cell.fold,
        reason,
    };

    let table = data
        .label_table(cell.metric, cell.q)
        .ok_or_else(|| skip(format!("no label table for {} q={}", cell.metric, cell.q)))?;
    let labelled = table.at_offset(cell.years_ahead);
    if labelled.is_empty() {
        return Err(skip("cohort horizon exceeded for every cohort".into()));
    }
    let items: Vec<(String, u8)> = labelled
        .into_iter()
        .filter(|(d, _)| emb.matrix.get(d).is_some())
        .collect();
    if items.len() < 2 {
        return Err(skip(format!("only {} labelled papers with embeddings", items.len())));
    }
    let label_of: BTreeMap<&str, u8> = items.iter().map(|(d, l)| (d.as_str(), *l)).collect();

    let split = make_split(grid, table, &items, cell.fold).map_err(|e| skip(format!("split failed: {e}")))?;
    let side = |dois: &[String]| -> Vec<(String, u8)> { dois.iter().map(|d| (d.clone(), label_of[d.as_str()])).collect() };
    let (mut train, mut test) = (side(&split.train_dois), side(&split.test_dois));
    if cell.balance == Balance::Balanced {
        let keep_train = balance_undersample(&train, derive_seed_tagged(grid.seed, "balance-train"))
            .map_err(|e| skip(format!("balancing train side: {e}")))?;
        let keep_test = balance_undersample(&test, derive_seed_tagged(grid.seed, "balance-test"))
            .map_err(|e| skip(format!("balancing test side: {e}")))?;
        train = side(&keep_train);
        test = side(&keep_test);
    }
    let test_pos = test.iter().filter(|(_, l)| *l == 1).count();
    if test_pos == 0 || test_pos == test.len() {
        return Err(skip("test side has a single class".into()));
    }

    let train_dois: Vec<String> = train.iter().map(|(d, _)| d.clone()).collect();
    let mut y_train: Vec<u8> = train.iter().map(|(_, l)| *l).collect();
    if grid.permute_labels {
        y_train.shuffle(&mut rng_from_seed(derive_seed_tagged(grid.seed, "permute-labels")));
    }
    let x_train = feature_matrix(&emb.matrix, &train_dois).map_err(|e| skip(e.to_string()))?;
    let model = train_classifier(spec, &x_train, &y_train).map_err(|e| match e {
        ClassifierError::DegenerateLabels(_) => skip("training side has a single class".into()),
        other => skip(format!("training failed: {other}")),
    })?;

    let test_dois: Vec<String> = test.iter().map(|(d, _)| d.clone()).collect();
    let y_test: Vec<u8> = test.iter().map(|(_, l)| *l).collect();
    let x_test = feature_matrix(&emb.matrix, &test_dois).map_err(|e| skip(e.to_string()))?;
    let scores = predict_scores(&model, &x_test).map_err(|e| skip(format!("scoring failed: {e}")))?;
    let roc = auc_roc(&scores, &y_test).map_err(|e| skip(e.to_string()))?;
    let pr = auc_pr(&scores, &y_test).map_err(|e| skip(e.to_string()))?;
    Ok(EvalRecord {
        embedding_id: emb.matrix.model_id.clone(),
        classifier_id: spec.id(),
        target_metric: cell.metric,
        q: cell.q,
        years_ahead: cell.years_ahead,
        balance: cell.balance,
        text_scope: emb.text_scope,
        seed: grid.seed,
        fold: cell.fold,
        n_test: y_test.len(),
        prevalence: test_pos as f64 / y_test.len() as f64,
        auc_roc: roc,
        auc_pr: pr,
        accuracy_at_half: (cell.balance == Balance::Balanced).then(|| accuracy(&scores, &y_test, 0.5)),
    })
}

/// Splits depend only on the master seed and the eligible set, so every
/// classifier and balance treatment of a cell sees the same partition.
fn make_split(
    grid: &ExperimentGrid,
    table: &LabelTable,
    items: &[(String, u8)],
    fold: Option<usize>,
) -> Result<DatasetSplit, crate::dataset::DatasetError> {
    let seed = derive_seed_tagged(grid.seed, "split");
    let dois: Vec<String> = items.iter().map(|(d, _)| d.clone()).collect();
    match grid.split {
        SplitPlan::Shuffle {
            test_fraction,
            stratify: false,
        } => shuffle_split(&dois, test_fraction, seed),
        SplitPlan::Shuffle {
            test_fraction,
            stratify: true,
        } => stratified_shuffle_split(items, test_fraction, seed),
        SplitPlan::YearProportional { test_fraction } => {
            let years = table.pub_year_of();
            let recs: Vec<(String, i32)> = dois.iter().map(|d| (d.clone(), years[d.as_str()])).collect();
            year_proportional_split(&recs, test_fraction, seed)
        }
        SplitPlan::KFold { k } => {
            let mut folds = k_folds(&dois, k, seed)?;
            Ok(folds.swap_remove(fold.unwrap_or(0)))
        }
    }
}

/// Every `(cohort, t)` pair, over all label tables, that has no labels at
/// a requested offset `t`.
pub fn horizon_exclusions(data: &ExperimentData, years_ahead: &[u32]) -> Vec<HorizonExclusion> {
    let mut out = BTreeSet::new();
    for table in &data.labels {
        let present: BTreeSet<(&str, u32)> = table.entries.keys().map(|(d, t)| (d.as_str(), *t)).collect();
        for (&cohort, members) in &table.cohort {
            for &t in years_ahead {
                if !members.iter().any(|d| present.contains(&(d.as_str(), t))) {
                    out.insert(HorizonExclusion { cohort, years_ahead: t });
                }
            }
        }
    }
    out.into_iter().collect()
}

/// Deterministic ordering by cell key.
pub fn record_order(a: &EvalRecord, b: &EvalRecord) -> Ordering {
    (&a.embedding_id, a.text_scope, &a.classifier_id, a.target_metric)
        .cmp(&(&b.embedding_id, b.text_scope, &b.classifier_id, b.target_metric))
        .then(a.q.total_cmp(&b.q))
        .then((a.years_ahead, a.balance, a.fold).cmp(&(b.years_ahead, b.balance, b.fold)))
}

fn skipped_order(a: &SkippedCell, b: &SkippedCell) -> Ordering {
    (&a.embedding_id, a.text_scope, &a.classifier_id, a.target_metric)
        .cmp(&(&b.embedding_id, b.text_scope, &b.classifier_id, b.target_metric))
        .then(a.q.total_cmp(&b.q))
        .then((a.years_ahead, a.balance, a.fold).cmp(&(b.years_ahead, b.balance, b.fold)))
}

/// Evaluates every cell of the grid. Each cell yields exactly one record
/// or one skip entry; both lists are sorted by cell key.
pub fn sweep(grid: &ExperimentGrid, data: &ExperimentData) -> SweepResult {
    let all = cells(grid, data);
    let run = || -> Vec<Result<EvalRecord, SkippedCell>> {
        all.par_iter().map(|c| run_experiment(grid, data, c)).collect()
    };
    let outcomes = match grid.workers {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(run),
            Err(e) => {
                log::warn!("could not build a {n}-thread pool ({e}); using the global pool");
                run()
            }
        },
        None => run(),
    };
    let mut result = SweepResult {
        horizon_exclusions: horizon_exclusions(data, &grid.years_ahead),
        ..Default::default()
    };
    for o in outcomes {
        match o {
            Ok(r) => result.records.push(r),
            Err(s) => {
                log::info!(
                    "skipped {} / {} {} t={} {}: {}",
                    s.embedding_id,
                    s.classifier_id,
                    s.target_metric,
                    s.years_ahead,
                    s.balance,
                    s.reason
                );
                result.skipped.push(s)
            }
        }
    }
    result.records.sort_by(record_order);
    result.skipped.sort_by(skipped_order);
    result
}
