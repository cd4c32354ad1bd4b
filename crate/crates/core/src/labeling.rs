//! ACC / YCC citation counts and top-q labels per publication-year cohort.
//!
//! Years-ahead `t = 0` is the publication calendar year. Labels are computed
//! per `(cohort, t)` cell so papers are only ranked against same-year peers
//! at the same offset.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::citations::{normalize_series, CitationSeries};
use crate::corpus::PaperRecord;

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("years-ahead {t} from {pub_year} is beyond the series horizon")]
    BeyondHorizon { pub_year: i32, t: u32 },
    #[error("q must lie in (0, 1), got {0}")]
    InvalidQ(f64),
    #[error("label table csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("label table csv: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TargetMetric {
    #[serde(rename = "ACC")]
    Acc,
    #[serde(rename = "YCC")]
    Ycc,
}

impl fmt::Display for TargetMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TargetMetric::Acc => "ACC",
            TargetMetric::Ycc => "YCC",
        })
    }
}

impl FromStr for TargetMetric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "ACC" => Ok(TargetMetric::Acc),
            "YCC" => Ok(TargetMetric::Ycc),
            other => Err(format!("unknown target metric {other:?}")),
        }
    }
}

fn last_year(series: &CitationSeries) -> Option<i32> {
    series.counts_by_year.keys().next_back().copied()
}

/// Citations received in calendar year `pub_year + t`.
pub fn ycc_at(series: &CitationSeries, pub_year: i32, t: u32) -> Result<u64, LabelError> {
    let year = pub_year + t as i32;
    match last_year(series) {
        Some(h) if year <= h => Ok(series.count(year)),
        _ => Err(LabelError::BeyondHorizon { pub_year, t }),
    }
}

/// Citations accumulated from the publication year through `pub_year + t`.
pub fn acc_at(series: &CitationSeries, pub_year: i32, t: u32) -> Result<u64, LabelError> {
    let year = pub_year + t as i32;
    match last_year(series) {
        Some(h) if year <= h => Ok((pub_year..=year).map(|y| series.count(y)).sum()),
        _ => Err(LabelError::BeyondHorizon { pub_year, t }),
    }
}

pub fn count_at(
    metric: TargetMetric,
    series: &CitationSeries,
    pub_year: i32,
    t: u32,
) -> Result<u64, LabelError> {
    match metric {
        TargetMetric::Acc => acc_at(series, pub_year, t),
        TargetMetric::Ycc => ycc_at(series, pub_year, t),
    }
}

/// `round(q * n)` with halves rounded up.
pub fn positives_for(n: usize, q: f64) -> usize {
    // The epsilon absorbs representation error such as 0.3 * 5 = 1.4999...
    ((q * n as f64) + 0.5 + 1e-9).floor() as usize
}

/// Marks the `round(q * n)` highest counts with 1. Ties at the cut go to the
/// lexicographically smaller DOI.
pub fn top_q_labels(counts: &BTreeMap<String, u64>, q: f64) -> BTreeMap<String, u8> {
    let k = positives_for(counts.len(), q);
    let mut ranked: Vec<(&String, u64)> = counts.iter().map(|(d, &c)| (d, c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked
        .into_iter()
        .enumerate()
        .map(|(i, (doi, _))| (doi.clone(), u8::from(i < k)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub count: u64,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelTable {
    pub metric: TargetMetric,
    pub q: f64,
    /// Keyed by `(doi, years_ahead)`.
    pub entries: BTreeMap<(String, u32), LabelEntry>,
    pub cohort: BTreeMap<i32, Vec<String>>,
    /// DOIs left out for lack of a citation series.
    pub excluded: Vec<String>,
}

impl LabelTable {
    pub fn get(&self, doi: &str, t: u32) -> Option<&LabelEntry> {
        self.entries.get(&(doi.to_string(), t))
    }

    pub fn pub_year_of(&self) -> BTreeMap<&str, i32> {
        self.cohort
            .iter()
            .flat_map(|(y, dois)| dois.iter().map(move |d| (d.as_str(), *y)))
            .collect()
    }

    /// `(doi, label)` for every paper with an entry at offset `t`.
    pub fn at_offset(&self, t: u32) -> Vec<(String, u8)> {
        self.entries
            .iter()
            .filter(|((_, tt), _)| *tt == t)
            .map(|((d, _), e)| (d.clone(), e.label))
            .collect()
    }

    pub fn years_ahead(&self) -> Vec<u32> {
        let mut ts: Vec<u32> = self.entries.keys().map(|(_, t)| *t).collect();
        ts.sort_unstable();
        ts.dedup();
        ts
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), LabelError> {
        let years = self.pub_year_of();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["doi", "pub_year", "metric", "q", "years_ahead", "count", "label"])?;
        for ((doi, t), e) in &self.entries {
            w.write_record([
                doi.clone(),
                years[doi.as_str()].to_string(),
                self.metric.to_string(),
                self.q.to_string(),
                t.to_string(),
                e.count.to_string(),
                e.label.to_string(),
            ])?;
        }
        w.flush().map_err(|e| LabelError::Csv(e.into()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, LabelError> {
        let mut r = csv::Reader::from_reader(input);
        let mut table: Option<LabelTable> = None;
        let mut cohort: BTreeMap<i32, BTreeSet<String>> = BTreeMap::new();
        for row in r.records() {
            let row = row?;
            let field = |i: usize| row.get(i).ok_or_else(|| LabelError::Format(format!("short row {row:?}")));
            let parse_err = |what: &str| LabelError::Format(format!("bad {what} in {row:?}"));
            let doi = field(0)?.to_string();
            let pub_year: i32 = field(1)?.parse().map_err(|_| parse_err("pub_year"))?;
            let metric: TargetMetric = field(2)?.parse().map_err(LabelError::Format)?;
            let q: f64 = field(3)?.parse().map_err(|_| parse_err("q"))?;
            let t: u32 = field(4)?.parse().map_err(|_| parse_err("years_ahead"))?;
            let count: u64 = field(5)?.parse().map_err(|_| parse_err("count"))?;
            let label: u8 = field(6)?.parse().map_err(|_| parse_err("label"))?;
            let tbl = table.get_or_insert_with(|| LabelTable {
                metric,
                q,
                entries: BTreeMap::new(),
                cohort: BTreeMap::new(),
                excluded: Vec::new(),
            });
            tbl.entries.insert((doi.clone(), t), LabelEntry { count, label });
            cohort.entry(pub_year).or_default().insert(doi);
        }
        let mut table = table.ok_or_else(|| LabelError::Format("empty label table".into()))?;
        table.cohort = cohort.into_iter().map(|(y, m)| (y, m.into_iter().collect())).collect();
        Ok(table)
    }
}

/// Builds labels for every `(cohort, t)` cell where `pub_year + t <= horizon_year`.
pub fn build_label_table(
    corpus: &[PaperRecord],
    citations: &BTreeMap<String, CitationSeries>,
    metric: TargetMetric,
    q: f64,
    horizons: &[u32],
    horizon_year: i32,
) -> Result<LabelTable, LabelError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(LabelError::InvalidQ(q));
    }
    let mut cohort: BTreeMap<i32, Vec<String>> = BTreeMap::new();
    let mut normalized: BTreeMap<&str, CitationSeries> = BTreeMap::new();
    let mut excluded = Vec::new();
    for r in corpus {
        let Some(series) = citations.get(&r.doi) else {
            log::warn!("{}: no citation series, excluded from labels", r.doi);
            excluded.push(r.doi.clone());
            continue;
        };
        let Ok(series) = normalize_series(series, r.pub_year, horizon_year) else {
            log::warn!("{}: published after horizon {horizon_year}", r.doi);
            excluded.push(r.doi.clone());
            continue;
        };
        cohort.entry(r.pub_year).or_default().push(r.doi.clone());
        normalized.insert(r.doi.as_str(), series);
    }
    for members in cohort.values_mut() {
        members.sort();
    }

    let mut entries = BTreeMap::new();
    for (&year, members) in &cohort {
        for &t in horizons {
            if year + t as i32 > horizon_year {
                continue;
            }
            let counts: BTreeMap<String, u64> = members
                .iter()
                .map(|d| Ok((d.clone(), count_at(metric, &normalized[d.as_str()], year, t)?)))
                .collect::<Result<_, LabelError>>()?;
            let labels = top_q_labels(&counts, q);
            for (doi, count) in counts {
                let label = labels[&doi];
                entries.insert((doi, t), LabelEntry { count, label });
            }
        }
    }
    Ok(LabelTable {
        metric,
        q,
        entries,
        cohort,
        excluded,
    })
}
