//! Per-year citation counts from the OpenAlex works endpoint, with an
//! append-only JSON-lines cache.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::{send_with_retry, RateLimiter, RetryOutcome, RetryPolicy, Transport};

pub const OPENALEX_BASE_URL: &str = "https://api.openalex.org";
pub const ENV_OPENALEX_MAILTO: &str = "IMPACT_OPENALEX_MAILTO";
/// Citations are available up to this calendar year.
pub const DEFAULT_HORIZON_YEAR: i32 = 2023;
pub const DEFAULT_RATE_PER_SECOND: f64 = 10.0;
pub const DEFAULT_CONCURRENCY: usize = 8;

#[derive(Debug, Error)]
pub enum CitationError {
    #[error("doi not found upstream: {0}")]
    NotFound(String),
    #[error("rate limited after retries: {0}")]
    RateLimited(String),
    #[error("upstream failure for {doi}: {message}")]
    Upstream { doi: String, message: String },
    #[error("unexpected payload for {doi}: {message}")]
    BadPayload { doi: String, message: String },
    #[error("horizon year {horizon} precedes publication year {pub_year}")]
    InvalidRange { pub_year: i32, horizon: i32 },
    #[error("citation cache corrupt at line {line}: {message}")]
    CacheCorrupt { line: usize, message: String },
    #[error("citation cache i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationSeries {
    pub doi: String,
    pub counts_by_year: BTreeMap<i32, u64>,
    pub retrieved_at: DateTime<Utc>,
}

impl CitationSeries {
    pub fn new(doi: impl Into<String>, counts: impl IntoIterator<Item = (i32, u64)>) -> Self {
        Self {
            doi: doi.into(),
            counts_by_year: counts.into_iter().collect(),
            retrieved_at: DateTime::<Utc>::UNIX_EPOCH,
        }
    }

    pub fn count(&self, year: i32) -> u64 {
        self.counts_by_year.get(&year).copied().unwrap_or(0)
    }
}

/// Dense series over `pub_year..=horizon_year`: years outside are dropped,
/// missing years become 0.
pub fn normalize_series(
    s: &CitationSeries,
    pub_year: i32,
    horizon_year: i32,
) -> Result<CitationSeries, CitationError> {
    if horizon_year < pub_year {
        return Err(CitationError::InvalidRange {
            pub_year,
            horizon: horizon_year,
        });
    }
    for (&year, &count) in &s.counts_by_year {
        if year < pub_year || year > horizon_year {
            log::debug!(
                "{}: dropping {count} citations in {year} outside {pub_year}..={horizon_year}",
                s.doi
            );
        }
    }
    Ok(CitationSeries {
        doi: s.doi.clone(),
        counts_by_year: (pub_year..=horizon_year).map(|y| (y, s.count(y))).collect(),
        retrieved_at: s.retrieved_at,
    })
}

/// Accepts `10.<registrant>/<suffix>` with an optional `https://doi.org/` prefix.
pub fn is_valid_doi(doi: &str) -> bool {
    let doi = strip_doi_prefix(doi);
    let Some(rest) = doi.strip_prefix("10.") else {
        return false;
    };
    let Some((registrant, suffix)) = rest.split_once('/') else {
        return false;
    };
    !registrant.is_empty()
        && registrant.chars().all(|c| c.is_ascii_digit() || c == '.')
        && !suffix.is_empty()
        && !doi.chars().any(char::is_whitespace)
}

fn strip_doi_prefix(doi: &str) -> &str {
    doi.trim()
        .trim_start_matches("https://doi.org/")
        .trim_start_matches("http://doi.org/")
        .trim_start_matches("doi:")
}

fn encode_path(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'.' | b'_' | b'~' | b'/' | b'(' | b')'
            | b';' | b':' => out.push(b as char),
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

#[derive(Deserialize)]
struct WorkPayload {
    #[serde(default)]
    counts_by_year: Vec<YearCount>,
}

#[derive(Deserialize)]
struct YearCount {
    year: i32,
    cited_by_count: u64,
}

/// Why a requested DOI has no series after [`OpenAlexClient::load_or_fetch`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingReason {
    NotFound,
    RateLimited,
    Upstream(String),
}

impl MissingReason {
    /// Network or upstream trouble, as opposed to a DOI unknown upstream.
    pub fn is_transient(&self) -> bool {
        !matches!(self, MissingReason::NotFound)
    }
}

#[derive(Debug, Default)]
pub struct FetchOutcome {
    pub series: BTreeMap<String, CitationSeries>,
    pub missing: BTreeMap<String, MissingReason>,
    /// Number of DOIs that went to the network.
    pub fetched: usize,
}

pub struct OpenAlexClient {
    transport: Arc<dyn Transport>,
    base_url: String,
    mailto: Option<String>,
    retry: RetryPolicy,
    limiter: RateLimiter,
    concurrency: usize,
}

impl OpenAlexClient {
    pub fn new(transport: Arc<dyn Transport>) -> Self {
        Self {
            transport,
            base_url: OPENALEX_BASE_URL.to_string(),
            mailto: std::env::var(ENV_OPENALEX_MAILTO).ok().filter(|m| !m.is_empty()),
            retry: RetryPolicy::default(),
            limiter: RateLimiter::new(DEFAULT_RATE_PER_SECOND),
            concurrency: DEFAULT_CONCURRENCY,
        }
    }

    pub fn with_base_url(mut self, url: impl Into<String>) -> Self {
        self.base_url = url.into().trim_end_matches('/').to_string();
        self
    }

    pub fn with_mailto(mut self, mailto: Option<String>) -> Self {
        self.mailto = mailto;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_rate_limit(mut self, per_second: f64) -> Self {
        self.limiter = RateLimiter::new(per_second);
        self
    }

    pub fn with_concurrency(mut self, n: usize) -> Self {
        self.concurrency = n.max(1);
        self
    }

    pub fn work_url(&self, doi: &str) -> String {
        let mut url = format!(
            "{}/works/https://doi.org/{}?select=doi,publication_year,counts_by_year",
            self.base_url,
            encode_path(strip_doi_prefix(doi))
        );
        if let Some(m) = &self.mailto {
            url.push_str("&mailto=");
            url.push_str(&encode_path(m));
        }
        url
    }

    /// Fetches the raw `counts_by_year` payload, keeping years up to `horizon_year`.
    pub fn fetch_citation_series(
        &self,
        doi: &str,
        horizon_year: i32,
    ) -> Result<CitationSeries, CitationError> {
        if !is_valid_doi(doi) {
            return Err(CitationError::NotFound(doi.to_string()));
        }
        let url = self.work_url(doi);
        let outcome = send_with_retry(&self.retry, || {
            self.limiter.acquire();
            self.transport.get(&url)
        });
        let resp = match outcome {
            RetryOutcome::Done(resp) => resp,
            RetryOutcome::Exhausted {
                last_status: Some(429),
                ..
            } => return Err(CitationError::RateLimited(doi.to_string())),
            RetryOutcome::Exhausted { last_error, .. } => {
                return Err(CitationError::Upstream {
                    doi: doi.to_string(),
                    message: last_error,
                })
            }
        };
        match resp.status {
            404 => return Err(CitationError::NotFound(doi.to_string())),
            s if !(200..300).contains(&s) => {
                return Err(CitationError::Upstream {
                    doi: doi.to_string(),
                    message: format!("HTTP {s}"),
                })
            }
            _ => {}
        }
        let payload: WorkPayload =
            serde_json::from_str(&resp.body).map_err(|e| CitationError::BadPayload {
                doi: doi.to_string(),
                message: e.to_string(),
            })?;
        Ok(CitationSeries {
            doi: doi.to_string(),
            counts_by_year: payload
                .counts_by_year
                .into_iter()
                .filter(|c| c.year <= horizon_year)
                .map(|c| (c.year, c.cited_by_count))
                .collect(),
            retrieved_at: Utc::now(),
        })
    }

    /// Serves cached series without network traffic and fetches the rest,
    /// appending new entries to the cache. Existing cache lines are never rewritten.
    pub fn load_or_fetch(
        &self,
        dois: &[String],
        cache_path: &Path,
        horizon_year: i32,
    ) -> Result<FetchOutcome, CitationError> {
        let cached = read_cache(cache_path)?;
        let mut outcome = FetchOutcome::default();
        let mut to_fetch = Vec::new();
        let mut queued = HashSet::new();
        for doi in dois {
            if let Some(s) = cached.get(doi) {
                outcome.series.insert(doi.clone(), s.clone());
            } else if queued.insert(doi.as_str()) {
                to_fetch.push(doi.as_str());
            }
        }
        if to_fetch.is_empty() {
            return Ok(outcome);
        }
        outcome.fetched = to_fetch.len();

        let results = self.fetch_many(&to_fetch, horizon_year);

        if let Some(parent) = cache_path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(cache_path)?;
        let mut writer = BufWriter::new(file);
        for (doi, result) in to_fetch.iter().zip(results) {
            match result {
                Ok(series) => {
                    serde_json::to_writer(&mut writer, &series)
                        .map_err(|e| CitationError::Io(e.into()))?;
                    writer.write_all(b"\n")?;
                    outcome.series.insert(doi.to_string(), series);
                }
                Err(e) => {
                    log::warn!("{e}");
                    let reason = match e {
                        CitationError::NotFound(_) => MissingReason::NotFound,
                        CitationError::RateLimited(_) => MissingReason::RateLimited,
                        other => MissingReason::Upstream(other.to_string()),
                    };
                    outcome.missing.insert(doi.to_string(), reason);
                }
            }
        }
        writer.flush()?;
        Ok(outcome)
    }

    fn fetch_many(
        &self,
        dois: &[&str],
        horizon_year: i32,
    ) -> Vec<Result<CitationSeries, CitationError>> {
        let next = AtomicUsize::new(0);
        let workers = self.concurrency.min(dois.len()).max(1);
        let mut slots: Vec<Option<Result<CitationSeries, CitationError>>> =
            (0..dois.len()).map(|_| None).collect();
        let collected: Vec<Vec<(usize, Result<CitationSeries, CitationError>)>> =
            std::thread::scope(|scope| {
                let handles: Vec<_> = (0..workers)
                    .map(|_| {
                        scope.spawn(|| {
                            let mut done = Vec::new();
                            loop {
                                let i = next.fetch_add(1, Ordering::Relaxed);
                                if i >= dois.len() {
                                    break;
                                }
                                done.push((i, self.fetch_citation_series(dois[i], horizon_year)));
                            }
                            done
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("fetch worker panicked"))
                    .collect()
            });
        for (i, r) in collected.into_iter().flatten() {
            slots[i] = Some(r);
        }
        slots
            .into_iter()
            .map(|s| s.expect("every doi fetched"))
            .collect()
    }
}

/// Reads a cache file; a missing file is an empty cache. First entry per DOI wins.
pub fn read_cache(path: &Path) -> Result<BTreeMap<String, CitationSeries>, CitationError> {
    let content = match fs::read_to_string(path) {
        Ok(c) => c,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(BTreeMap::new()),
        Err(e) => return Err(e.into()),
    };
    let mut out = BTreeMap::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let s: CitationSeries =
            serde_json::from_str(line).map_err(|e| CitationError::CacheCorrupt {
                line: i + 1,
                message: e.to_string(),
            })?;
        out.entry(s.doi.clone()).or_insert(s);
    }
    Ok(out)
}

/// Writes series as a fresh cache file (used for fixtures).
pub fn write_cache(path: &Path, series: &[CitationSeries]) -> Result<(), CitationError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for s in series {
        serde_json::to_writer(&mut w, s).map_err(|e| CitationError::Io(e.into()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
