use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::EvalRecord;

/// Record fields that can be used to group results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    EmbeddingId,
    TextScope,
    ClassifierId,
    TargetMetric,
    Q,
    YearsAhead,
    Balance,
}

impl Axis {
    pub fn value(&self, r: &EvalRecord) -> String {
        match self {
            Axis::EmbeddingId => r.embedding_id.clone(),
            Axis::TextScope => r.text_scope.to_string(),
            Axis::ClassifierId => r.classifier_id.clone(),
            Axis::TargetMetric => r.target_metric.to_string(),
            Axis::Q => r.q.to_string(),
            Axis::YearsAhead => r.years_ahead.to_string(),
            Axis::Balance => r.balance.to_string(),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::EmbeddingId => "embedding_id",
            Axis::TextScope => "text_scope",
            Axis::ClassifierId => "classifier_id",
            Axis::TargetMetric => "target_metric",
            Axis::Q => "q",
            Axis::YearsAhead => "years_ahead",
            Axis::Balance => "balance",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Score {
    AucRoc,
    AucPr,
}

impl Score {
    pub fn of(&self, r: &EvalRecord) -> f64 {
        match self {
            Score::AucRoc => r.auc_roc,
            Score::AucPr => r.auc_pr,
        }
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Score::AucRoc => "auc_roc",
            Score::AucPr => "auc_pr",
        })
    }
}

/// Box-plot statistics for one group of records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    /// One value per grouping axis, in the order requested.
    pub key: Vec<String>,
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

/// Inclusive quantile: linear interpolation at position `(n - 1) * p` of the sorted values.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `None` for an empty slice or any non-finite value.
pub fn summarize(key: Vec<String>, values: &[f64]) -> Option<SummaryStats> {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(SummaryStats {
        key,
        count: v.len(),
        median: quantile(&v, 0.5),
        q1: quantile(&v, 0.25),
        q3: quantile(&v, 0.75),
        min: v[0],
        max: v[v.len() - 1],
    })
}

/// Groups records by the `group_by` axes, pooling over every other axis,
/// and summarises `score` per group. Groups come out in key order.
pub fn aggregate_median(records: &[EvalRecord], group_by: &[Axis], score: Score) -> Vec<SummaryStats> {
    let mut groups: BTreeMap<Vec<String>, Vec<f64>> = BTreeMap::new();
    for r in records {
        let key = group_by.iter().map(|a| a.value(r)).collect();
        groups.entry(key).or_default().push(score.of(r));
    }
    groups
        .into_iter()
        .filter_map(|(k, v)| {
            let s = summarize(k.clone(), &v);
            if s.is_none() {
                log::warn!("dropping group {k:?}: no finite {score} values");
            }
            s
        })
        .collect()
}
