//! Batched client for an OpenAI-compatible `/embeddings` endpoint.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EmbedError;
use crate::http::{send_with_retry, RetryOutcome, RetryPolicy, Transport};

pub const ENV_EMBED_API_KEY: &str = "IMPACT_EMBED_API_KEY";
pub const ENV_EMBED_ENDPOINT: &str = "IMPACT_EMBED_ENDPOINT";
pub const ENV_EMBED_MODEL: &str = "IMPACT_EMBED_MODEL";
pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/embeddings";
pub const DEFAULT_MODEL: &str = "text-embedding-ada-002";
pub const DEFAULT_REMOTE_DIM: usize = 1536;
pub const DEFAULT_BATCH_SIZE: usize = 64;
/// Roughly the provider's 8191-token context at ~4 characters per token.
pub const DEFAULT_MAX_CHARS: usize = 30_000;

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    index: usize,
    embedding: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    model: String,
    text_sha256: String,
    vector: Vec<f32>,
}

pub fn text_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub struct RemoteEmbedder {
    transport: Arc<dyn Transport>,
    endpoint: String,
    api_key: String,
    model: String,
    dim: usize,
    batch_size: usize,
    concurrency: usize,
    retry: RetryPolicy,
    /// `(model, sha256(text))` to vector.
    cache: Mutex<HashMap<(String, String), Vec<f32>>>,
    requests: AtomicUsize,
}

impl RemoteEmbedder {
    pub fn new(
        transport: Arc<dyn Transport>,
        endpoint: impl Into<String>,
        api_key: impl Into<String>,
        model: impl Into<String>,
        dim: usize,
    ) -> Self {
        Self {
            transport,
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            model: model.into(),
            dim,
            batch_size: DEFAULT_BATCH_SIZE,
            concurrency: 4,
            retry: RetryPolicy::default(),
            cache: Mutex::new(HashMap::new()),
            requests: AtomicUsize::new(0),
        }
    }

    /// Reads `IMPACT_EMBED_API_KEY` (required), `IMPACT_EMBED_ENDPOINT` and `IMPACT_EMBED_MODEL`.
    pub fn from_env(transport: Arc<dyn Transport>) -> Result<Self, EmbedError> {
        let key = std::env::var(ENV_EMBED_API_KEY)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| EmbedError::Auth(format!("{ENV_EMBED_API_KEY} is not set")))?;
        let endpoint = std::env::var(ENV_EMBED_ENDPOINT).unwrap_or_else(|_| DEFAULT_ENDPOINT.into());
        let model = std::env::var(ENV_EMBED_MODEL).unwrap_or_else(|_| DEFAULT_MODEL.into());
        Ok(Self::new(transport, endpoint, key, model, DEFAULT_REMOTE_DIM))
    }

    pub fn with_batch_size(mut self, n: usize) -> Self {
        self.batch_size = n.max(1);
        self
    }

    pub fn with_concurrency(mut self, n: usize) -> Self {
        self.concurrency = n.max(1);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    /// Requests sent so far, retries included.
    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    /// Loads previously embedded texts; lines for other models are kept but unused.
    pub fn load_cache(&self, path: &Path) -> Result<usize, EmbedError> {
        let content = match fs::read_to_string(path) {
            Ok(c) => c,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(0),
            Err(e) => return Err(e.into()),
        };
        let mut cache = self.cache.lock().expect("embedding cache poisoned");
        let mut n = 0;
        for (i, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let l: CacheLine = serde_json::from_str(line)
                .map_err(|e| EmbedError::Store(format!("embedding cache line {}: {e}", i + 1)))?;
            cache.entry((l.model, l.text_sha256)).or_insert(l.vector);
            n += 1;
        }
        Ok(n)
    }

    /// Appends every in-memory entry not already present in the file.
    pub fn save_cache(&self, path: &Path) -> Result<(), EmbedError> {
        let existing: std::collections::HashSet<(String, String)> = match fs::read_to_string(path) {
            Ok(c) => c
                .lines()
                .filter_map(|l| serde_json::from_str::<CacheLine>(l).ok())
                .map(|l| (l.model, l.text_sha256))
                .collect(),
            Err(_) => Default::default(),
        };
        let cache = self.cache.lock().expect("embedding cache poisoned");
        let mut keys: Vec<_> = cache.keys().filter(|k| !existing.contains(*k)).collect();
        keys.sort();
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut w = BufWriter::new(file);
        for k in keys {
            let line = CacheLine {
                model: k.0.clone(),
                text_sha256: k.1.clone(),
                vector: cache[k].clone(),
            };
            serde_json::to_writer(&mut w, &line).map_err(|e| EmbedError::Store(e.to_string()))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Embeds `texts` in input order. Texts already embedded under this
    /// model (in this call or earlier) are not re-sent.
    pub fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        if texts.is_empty() {
            return Err(EmbedError::Request("no texts to embed".into()));
        }
        let hashes: Vec<String> = texts.iter().map(|t| text_hash(t)).collect();
        let mut pending: Vec<(&str, &str)> = Vec::new();
        {
            let cache = self.cache.lock().expect("embedding cache poisoned");
            let mut queued = std::collections::HashSet::new();
            for (t, h) in texts.iter().zip(&hashes) {
                if !cache.contains_key(&(self.model.clone(), h.clone())) && queued.insert(h.as_str()) {
                    pending.push((t.as_str(), h.as_str()));
                }
            }
        }

        let batches: Vec<&[(&str, &str)]> = pending.chunks(self.batch_size).collect();
        let next = AtomicUsize::new(0);
        let workers = self.concurrency.min(batches.len());
        let results: Vec<Result<(), EmbedError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|_| {
                    scope.spawn(|| -> Result<(), EmbedError> {
                        loop {
                            let i = next.fetch_add(1, Ordering::SeqCst);
                            let Some(batch) = batches.get(i) else {
                                return Ok(());
                            };
                            let inputs: Vec<&str> = batch.iter().map(|(t, _)| *t).collect();
                            let vectors = self.send_batch(&inputs)?;
                            let mut cache = self.cache.lock().expect("embedding cache poisoned");
                            for ((_, h), v) in batch.iter().zip(vectors) {
                                cache.insert((self.model.clone(), h.to_string()), v);
                            }
                        }
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("embedding worker panicked"))
                .collect()
        });
        for r in results {
            r?;
        }

        let cache = self.cache.lock().expect("embedding cache poisoned");
        Ok(hashes
            .into_iter()
            .map(|h| cache[&(self.model.clone(), h)].clone())
            .collect())
    }

    fn send_batch(&self, inputs: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let body = serde_json::to_string(&EmbedRequest {
            model: &self.model,
            input: inputs,
        })
        .map_err(|e| EmbedError::Request(e.to_string()))?;
        let outcome = send_with_retry(&self.retry, || {
            self.requests.fetch_add(1, Ordering::SeqCst);
            self.transport
                .post_json(&self.endpoint, Some(&self.api_key), &body)
        });
        let resp = match outcome {
            RetryOutcome::Done(r) => r,
            RetryOutcome::Exhausted { last_error, .. } => return Err(EmbedError::Upstream(last_error)),
        };
        match resp.status {
            401 | 403 => return Err(EmbedError::Auth(format!("HTTP {}", resp.status))),
            s if !(200..300).contains(&s) => {
                return Err(EmbedError::Request(format!("HTTP {s}: {}", resp.body)))
            }
            _ => {}
        }
        let parsed: EmbedResponse =
            serde_json::from_str(&resp.body).map_err(|e| EmbedError::Upstream(format!("bad response: {e}")))?;
        if parsed.data.len() != inputs.len() {
            return Err(EmbedError::Upstream(format!(
                "expected {} embeddings, got {}",
                inputs.len(),
                parsed.data.len()
            )));
        }
        let mut out: Vec<Option<Vec<f32>>> = vec![None; inputs.len()];
        for d in parsed.data {
            if d.embedding.len() != self.dim {
                return Err(EmbedError::DimensionMismatch {
                    doi: None,
                    expected: self.dim,
                    actual: d.embedding.len(),
                });
            }
            if d.embedding.iter().any(|x| !x.is_finite()) {
                return Err(EmbedError::NonFinite(None));
            }
            let slot = out
                .get_mut(d.index)
                .ok_or_else(|| EmbedError::Upstream(format!("index {} out of range", d.index)))?;
            *slot = Some(d.embedding);
        }
        out.into_iter()
            .map(|v| v.ok_or_else(|| EmbedError::Upstream("missing index in response".into())))
            .collect()
    }

    /// Embeds texts of arbitrary length: any text over `max_chars` is split
    /// into halves recursively and the piece vectors are averaged.
    pub fn embed_long_texts(&self, texts: &[String], max_chars: usize) -> Result<Vec<Vec<f32>>, EmbedError> {
        let mut pieces = Vec::new();
        let mut spans = Vec::with_capacity(texts.len());
        for t in texts {
            let start = pieces.len();
            split_to_limit(t, max_chars.max(1), &mut pieces);
            if pieces.len() - start > 1 {
                log::info!("text of {} chars split into {} pieces", t.chars().count(), pieces.len() - start);
            }
            spans.push(start..pieces.len());
        }
        let vectors = self.embed_batch(&pieces)?;
        spans
            .into_iter()
            .map(|r| super::average_section_vectors(&vectors[r]))
            .collect()
    }
}

/// Halves `text` (at the whitespace nearest the middle when there is one)
/// until every piece has at most `max_chars` characters.
pub fn split_to_limit(text: &str, max_chars: usize, out: &mut Vec<String>) {
    let n = text.chars().count();
    if n <= max_chars {
        out.push(text.to_string());
        return;
    }
    let mid_char = n / 2;
    let mid = text.char_indices().nth(mid_char).map(|(i, _)| i).unwrap_or(text.len());
    let split = text[..mid]
        .rfind(char::is_whitespace)
        .filter(|&i| i > 0)
        .or_else(|| text[mid..].find(char::is_whitespace).map(|i| mid + i).filter(|&i| i < text.len()))
        .unwrap_or(mid);
    let (a, b) = text.split_at(split);
    if a.is_empty() || b.is_empty() {
        let (a, b) = text.split_at(mid);
        split_to_limit(a, max_chars, out);
        split_to_limit(b, max_chars, out);
    } else {
        split_to_limit(a, max_chars, out);
        split_to_limit(b, max_chars, out);
    }
}
