//! Result tables (CSV and JSON) and SVG charts.
//!
//! Charts are rendered from [`ReportRow`]s, which is exactly what the CSV
//! holds, so every chart can be regenerated from the CSV alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::ClassifierSpec;
use crate::evaluation::{quantile, summarize, EvalRecord, HorizonExclusion, SkippedCell, SummaryStats, SweepResult};
use crate::rng::RNG_ALGORITHM;

pub const REPORT_FORMAT_VERSION: u32 = 1;

pub const CSV_COLUMNS: [&str; 13] = [
    "embedding_id",
    "classifier_id",
    "target_metric",
    "q",
    "years_ahead",
    "balance",
    "text_scope",
    "seed",
    "n_test",
    "prevalence",
    "auc_roc",
    "auc_pr",
    "skip_reason",
];

pub const AUC_PR_DEFINITION: &str = "average precision; tied scores form one step whose positives share the precision at the end of the tie group; no interpolation";
pub const QUARTILE_CONVENTION: &str = "inclusive quartiles (linear interpolation at (n-1)p); whiskers at min and max";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("report CSV: {0}")]
    Format(String),
}

/// One CSV line: a scored cell, or a skipped cell with empty metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub embedding_id: String,
    pub classifier_id: String,
    pub target_metric: String,
    pub q: f64,
    pub years_ahead: u32,
    pub balance: String,
    pub text_scope: String,
    pub seed: u64,
    pub n_test: Option<usize>,
    pub prevalence: Option<f64>,
    pub auc_roc: Option<f64>,
    pub auc_pr: Option<f64>,
    pub skip_reason: Option<String>,
}

impl ReportRow {
    pub fn score(&self, metric: ChartMetric) -> Option<f64> {
        match metric {
            ChartMetric::AucRoc => self.auc_roc,
            ChartMetric::AucPr => self.auc_pr,
        }
    }
}

impl From<&EvalRecord> for ReportRow {
    fn from(r: &EvalRecord) -> Self {
        Self {
            embedding_id: r.embedding_id.clone(),
            classifier_id: r.classifier_id.clone(),
            target_metric: r.target_metric.to_string(),
            q: r.q,
            years_ahead: r.years_ahead,
            balance: r.balance.to_string(),
            text_scope: r.text_scope.to_string(),
            seed: r.seed,
            n_test: Some(r.n_test),
            prevalence: Some(r.prevalence),
            auc_roc: Some(r.auc_roc),
            auc_pr: Some(r.auc_pr),
            skip_reason: None,
        }
    }
}

impl From<&SkippedCell> for ReportRow {
    fn from(s: &SkippedCell) -> Self {
        Self {
            embedding_id: s.embedding_id.clone(),
            classifier_id: s.classifier_id.clone(),
            target_metric: s.target_metric.to_string(),
            q: s.q,
            years_ahead: s.years_ahead,
            balance: s.balance.to_string(),
            text_scope: s.text_scope.to_string(),
            seed: s.seed,
            n_test: None,
            prevalence: None,
            auc_roc: None,
            auc_pr: None,
            skip_reason: Some(s.reason.clone()),
        }
    }
}

/// Scored rows first (in cell order), then skipped ones.
pub fn report_rows(result: &SweepResult) -> Vec<ReportRow> {
    result
        .records
        .iter()
        .map(ReportRow::from)
        .chain(result.skipped.iter().map(ReportRow::from))
        .collect()
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

pub fn write_csv<W: Write>(rows: &[ReportRow], out: W) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.embedding_id.clone(),
            r.classifier_id.clone(),
            r.target_metric.clone(),
            r.q.to_string(),
            r.years_ahead.to_string(),
            r.balance.clone(),
            r.text_scope.clone(),
            r.seed.to_string(),
            opt(&r.n_test),
            opt(&r.prevalence),
            opt(&r.auc_roc),
            opt(&r.auc_pr),
            opt(&r.skip_reason),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ReportRow>, ReportError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        return Err(ReportError::Format(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |col: &str| ReportError::Format(format!("line {line}: bad {col}"));
        let field = |j: usize| rec.get(j).unwrap_or("");
        fn parse_opt<T: std::str::FromStr>(s: &str) -> Result<Option<T>, ()> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| ())
            }
        }
        rows.push(ReportRow {
            embedding_id: field(0).to_string(),
            classifier_id: field(1).to_string(),
            target_metric: field(2).to_string(),
            q: field(3).parse().map_err(|_| bad("q"))?,
            years_ahead: field(4).parse().map_err(|_| bad("years_ahead"))?,
            balance: field(5).to_string(),
            text_scope: field(6).to_string(),
            seed: field(7).parse().map_err(|_| bad("seed"))?,
            n_test: parse_opt(field(8)).map_err(|_| bad("n_test"))?,
            prevalence: parse_opt(field(9)).map_err(|_| bad("prevalence"))?,
            auc_roc: parse_opt(field(10)).map_err(|_| bad("auc_roc"))?,
            auc_pr: parse_opt(field(11)).map_err(|_| bad("auc_pr"))?,
            skip_reason: Some(field(12).to_string()).filter(|s| !s.is_empty()),
        });
    }
    Ok(rows)
}

/// A published reference range printed beside the measured value. These
/// are informational; nothing checks that measured values fall inside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceBand {
    pub label: String,
    pub reference_low: f64,
    pub reference_high: f64,
    pub measured_low: Option<f64>,
    pub measured_high: Option<f64>,
}

impl ReferenceBand {
    pub fn describe(&self) -> String {
        let reference = if self.reference_low == self.reference_high {
            format!("{:.2}", self.reference_low)
        } else {
            format!("{:.2}-{:.2}", self.reference_low, self.reference_high)
        };
        let measured = match (self.measured_low, self.measured_high) {
            (Some(lo), Some(hi)) if (lo - hi).abs() < 1e-12 => format!("{lo:.3}"),
            (Some(lo), Some(hi)) => format!("{lo:.3}-{hi:.3}"),
            _ => "n/a".to_string(),
        };
        format!("{}: reference {reference}, measured {measured}", self.label)
    }
}

fn median(values: &[f64]) -> Option<f64> {
    summarize(Vec::new(), values).map(|s| s.median)
}

/// Published sanity ranges for balanced ACC AUC-ROC medians, with the
/// matching measured statistic from `rows`.
pub fn reference_bands(rows: &[ReportRow]) -> Vec<ReferenceBand> {
    let scored: Vec<&ReportRow> = rows
        .iter()
        .filter(|r| r.target_metric == "ACC" && r.balance == "balanced" && r.auc_roc.is_some())
        .collect();
    let group_medians = |key: &dyn Fn(&ReportRow) -> String, filter: &dyn Fn(&ReportRow) -> bool| -> Vec<f64> {
        let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in scored.iter().filter(|r| filter(r)) {
            groups.entry(key(r)).or_default().push(r.auc_roc.unwrap_or_default());
        }
        groups.values().filter_map(|v| median(v)).collect()
    };
    let range = |v: Vec<f64>| -> (Option<f64>, Option<f64>) {
        (
            v.iter().copied().reduce(f64::min),
            v.iter().copied().reduce(f64::max),
        )
    };
    let per_embedding = range(group_medians(&|r| r.embedding_id.clone(), &|_| true));
    let best = range(group_medians(&|r| format!("{}|{}", r.embedding_id, r.classifier_id), &|_| true)).1;
    let tfidf_peak = range(group_medians(
        &|r| format!("{}|{}", r.embedding_id, r.years_ahead),
        &|r| r.embedding_id.starts_with("tfidf"),
    ))
    .1;
    vec![
        ReferenceBand {
            label: "balanced ACC median AUC-ROC per embedding".into(),
            reference_low: 0.69,
            reference_high: 0.76,
            measured_low: per_embedding.0,
            measured_high: per_embedding.1,
        },
        ReferenceBand {
            label: "balanced ACC best median AUC-ROC (embedding x classifier)".into(),
            reference_low: 0.85,
            reference_high: 0.85,
            measured_low: best,
            measured_high: best,
        },
        ReferenceBand {
            label: "balanced ACC TFIDF peak median AUC-ROC over years ahead".into(),
            reference_low: 0.8,
            reference_high: 0.8,
            measured_low: tfidf_peak,
            measured_high: tfidf_peak,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub format_version: u32,
    pub csv_columns: Vec<String>,
    pub rng_algorithm: String,
    pub seed: u64,
    pub config_hash: String,
    pub classifiers: Vec<ClassifierSpec>,
    /// Remaining experiment settings (grid axes, split plan, embedding parameters).
    pub settings: serde_json::Value,
    pub auc_pr_definition: String,
    pub quartile_convention: String,
    pub notes: Vec<String>,
    pub reference_bands: Vec<ReferenceBand>,
}

impl ReportMetadata {
    pub fn new(seed: u64, config_hash: String, classifiers: Vec<ClassifierSpec>, settings: serde_json::Value) -> Self {
        Self {
            format_version: REPORT_FORMAT_VERSION,
            csv_columns: CSV_COLUMNS.iter().map(|s| s.to_string()).collect(),
            rng_algorithm: RNG_ALGORITHM.to_string(),
            seed,
            config_hash,
            classifiers,
            settings,
            auc_pr_definition: AUC_PR_DEFINITION.to_string(),
            quartile_convention: QUARTILE_CONVENTION.to_string(),
            notes: vec![
                "train/test splits are drawn per (target metric, q, years ahead) cell from the papers eligible in that cell".into(),
                "balanced cells undersample the majority class on both the train and the test side; skewed cells keep the natural distribution".into(),
                "accuracy_at_half is the threshold-0.5 accuracy of balanced cells".into(),
            ],
            reference_bands: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonReport {
    pub metadata: ReportMetadata,
    pub records: Vec<EvalRecord>,
    pub skipped: Vec<SkippedCell>,
    pub horizon_exclusions: Vec<HorizonExclusion>,
    /// Medians by embedding and by classifier, pooled over the other axes.
    pub summaries: BTreeMap<String, Vec<SummaryStats>>,
}

pub fn write_json<W: Write>(report: &JsonReport, out: W) -> Result<(), ReportError> {
    let mut w = std::io::BufWriter::new(out);
    serde_json::to_writer_pretty(&mut w, report)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ChartMetric {
    AucRoc,
    AucPr,
}

impl ChartMetric {
    pub fn label(&self) -> &'static str {
        match self {
            ChartMetric::AucRoc => "AUC-ROC",
            ChartMetric::AucPr => "AUC-PR",
        }
    }

    fn slug(&self) -> &'static str {
        match self {
            ChartMetric::AucRoc => "auc_roc",
            ChartMetric::AucPr => "auc_pr",
        }
    }
}

/// A rendered chart and its suggested file name.
#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub file_name: String,
    pub svg: String,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect()
}

fn plot_y(v: f64) -> f64 {
    TOP + (1.0 - v.clamp(0.0, 1.0)) * (HEIGHT - TOP - BOTTOM)
}

fn frame(title: &str, x_label: &str, y_label: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let x1 = WIDTH - RIGHT;
    for i in 0..=4 {
        let v = f64::from(i) * 0.25;
        let y = plot_y(v);
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="#dddddd"/>"##);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.2}</text>"#, LEFT - 6.0, y + 4.0);
    }
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#,
        HEIGHT - BOTTOM
    );
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{0}" x2="{x1}" y2="{0}" stroke="black"/>"#,
        HEIGHT - BOTTOM
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (LEFT + x1) / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{0:.2}" text-anchor="middle" transform="rotate(-90 15 {0:.2})">{1}</text>"#,
        (TOP + HEIGHT - BOTTOM) / 2.0,
        escape(y_label)
    );
    s
}

fn legend(s: &mut String, names: &[String]) {
    for (i, name) in names.iter().enumerate() {
        let y = TOP + 10.0 + i as f64 * 18.0;
        let x = WIDTH - RIGHT + 15.0;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(s, r#"<rect x="{x}" y="{:.2}" width="12" height="12" fill="{color}"/>"#, y - 10.0);
        let _ = writeln!(s, r#"<text x="{}" y="{y:.2}">{}</text>"#, x + 18.0, escape(name));
    }
}

/// Median score per embedding across years ahead (one line per embedding),
/// pooling classifiers, q values and text scopes.
pub fn line_chart(rows: &[ReportRow], target_metric: &str, balance: &str, metric: ChartMetric) -> Option<Chart> {
    let mut series: BTreeMap<&str, BTreeMap<u32, Vec<f64>>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.target_metric == target_metric && r.balance == balance) {
        if let Some(v) = r.score(metric) {
            series.entry(&r.embedding_id).or_default().entry(r.years_ahead).or_default().push(v);
        }
    }
    if series.is_empty() {
        return None;
    }
    let years: Vec<u32> = {
        let mut y: Vec<u32> = series.values().flat_map(|m| m.keys().copied()).collect();
        y.sort_unstable();
        y.dedup();
        y
    };
    let (lo, hi) = (years[0] as f64, *years.last().unwrap_or(&years[0]) as f64);
    let x1 = WIDTH - RIGHT;
    let plot_x = |t: u32| {
        if hi > lo {
            LEFT + 20.0 + (t as f64 - lo) / (hi - lo) * (x1 - LEFT - 40.0)
        } else {
            (LEFT + x1) / 2.0
        }
    };
    let title = format!("Median {} by years ahead ({target_metric}, {balance})", metric.label());
    let mut s = frame(&title, "years ahead", &format!("median {}", metric.label()));
    for &t in &years {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{t}</text>"#,
            plot_x(t),
            HEIGHT - BOTTOM + 16.0
        );
    }
    let names: Vec<String> = series.keys().map(|k| k.to_string()).collect();
    for (i, (_, by_year)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<(f64, f64)> = by_year
            .iter()
            .filter_map(|(&t, v)| median(v).map(|m| (plot_x(t), plot_y(m))))
            .collect();
        let path: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            path.join(" ")
        );
        for (x, y) in points {
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
        }
    }
    legend(&mut s, &names);
    s.push_str("</svg>\n");
    Some(Chart {
        file_name: format!(
            "line_{}_{}_{}.svg",
            slug(target_metric),
            slug(balance),
            metric.slug()
        ),
        svg: s,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxGroup {
    Embedding,
    Classifier,
}

/// Box plot of scores grouped by embedding or classifier, pooling the other axes.
pub fn box_plot(rows: &[ReportRow], target_metric: &str, balance: &str, metric: ChartMetric, group: BoxGroup) -> Option<Chart> {
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.target_metric == target_metric && r.balance == balance) {
        if let Some(v) = r.score(metric) {
            let key = match group {
                BoxGroup::Embedding => &r.embedding_id,
                BoxGroup::Classifier => &r.classifier_id,
            };
            groups.entry(key).or_default().push(v);
        }
    }
    if groups.is_empty() {
        return None;
    }
    let group_name = match group {
        BoxGroup::Embedding => "embedding",
        BoxGroup::Classifier => "classifier",
    };
    let title = format!("{} by {group_name} ({target_metric}, {balance})", metric.label());
    let mut s = frame(&title, group_name, metric.label());
    let x1 = WIDTH - RIGHT;
    let slot = (x1 - LEFT) / groups.len() as f64;
    let names: Vec<String> = groups.keys().map(|k| k.to_string()).collect();
    for (i, values) in groups.values().enumerate() {
        let mut v = values.clone();
        v.sort_by(f64::total_cmp);
        let (q1, med, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
        let (min, max) = (v[0], v[v.len() - 1]);
        let cx = LEFT + slot * (i as f64 + 0.5);
        let half = (slot * 0.3).min(30.0);
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            plot_y(max),
            plot_y(q3)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            plot_y(q1),
            plot_y(min)
        );
        for w in [min, max] {
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black"/>"#,
                cx - half / 2.0,
                cx + half / 2.0,
                y = plot_y(w)
            );
        }
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.6" stroke="black"/>"#,
            cx - half,
            plot_y(q3),
            2.0 * half,
            (plot_y(q1) - plot_y(q3)).max(0.5)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            cx + half,
            y = plot_y(med)
        );
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            HEIGHT - BOTTOM + 16.0,
            i + 1
        );
    }
    let labelled: Vec<String> = names.iter().enumerate().map(|(i, n)| format!("{}: {n}", i + 1)).collect();
    legend(&mut s, &labelled);
    s.push_str("</svg>\n");
    Some(Chart {
        file_name: format!(
            "box_{group_name}_{}_{}_{}.svg",
            slug(target_metric),
            slug(balance),
            metric.slug()
        ),
        svg: s,
    })
}

/// Line charts for both scores and box plots by embedding and classifier,
/// for every target metric and balance present in `rows`.
pub fn render_charts(rows: &[ReportRow]) -> Vec<Chart> {
    let mut combos: Vec<(String, String)> = rows
        .iter()
        .filter(|r| r.auc_roc.is_some())
        .map(|r| (r.target_metric.clone(), r.balance.clone()))
        .collect();
    combos.sort();
    combos.dedup();
    let mut charts = Vec::new();
    for (tm, bal) in &combos {
        for metric in [ChartMetric::AucRoc, ChartMetric::AucPr] {
            charts.extend(line_chart(rows, tm, bal, metric));
            for group in [BoxGroup::Embedding, BoxGroup::Classifier] {
                charts.extend(box_plot(rows, tm, bal, metric, group));
            }
        }
    }
    charts
}
