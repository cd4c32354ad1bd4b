use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::citations::{read_cache, write_cache, CitationSeries, OpenAlexClient};
use crate::classifiers::ClassifierSpec;
use crate::corpus::{corpus_stats, filter_valid, parse_corpus, strip_sections, write_jsonl, CorpusFormat, PaperRecord};
use crate::embedding::{
    average_section_vectors, embed_tfidf_svd, import_vectors, load_vectors, weighted_average_vectors, write_vectors_file,
    EmbedError, EmbeddingMatrix, RemoteEmbedder, DEFAULT_ENDPOINT, DEFAULT_MODEL, ENV_EMBED_API_KEY, ENV_EMBED_ENDPOINT,
};
use crate::evaluation::{
    aggregate_median, sweep, Axis, ExperimentData, ExperimentGrid, Score, ScopedEmbedding, SweepResult, TextScope,
};
use crate::labeling::{build_label_table, LabelTable, TargetMetric};
use crate::report::{
    read_csv, reference_bands, render_charts, report_rows, write_csv, write_json, JsonReport, ReportMetadata,
};
use crate::rng::derive_seed_tagged;

use super::config::{EmbeddingProvider, PipelineConfig, Pooling};
use super::{Pipeline, PipelineError, Stage};

/// File locations under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub out: PathBuf,
}

impl Layout {
    pub fn new(config: &PipelineConfig) -> Self {
        Self {
            out: config.out_dir.clone(),
        }
    }

    pub fn records(&self) -> PathBuf {
        self.out.join("corpus").join("records.jsonl")
    }
    pub fn parse_report(&self) -> PathBuf {
        self.out.join("corpus").join("parse_report.json")
    }
    pub fn corpus_stats(&self) -> PathBuf {
        self.out.join("corpus").join("stats.json")
    }
    pub fn series(&self) -> PathBuf {
        self.out.join("citations").join("series.jsonl")
    }
    pub fn missing(&self) -> PathBuf {
        self.out.join("citations").join("missing.json")
    }
    pub fn labels(&self, metric: TargetMetric, q: f64) -> PathBuf {
        self.out.join("labels").join(format!("{metric}_q{q}.csv"))
    }
    pub fn embedding_index(&self) -> PathBuf {
        self.out.join("embeddings").join("index.json")
    }
    pub fn embedding_file(&self, i: usize, p: &EmbeddingProvider) -> PathBuf {
        self.out
            .join("embeddings")
            .join(format!("{i:02}-{}-{}.emb", p.kind(), p.text_scope()))
    }
    pub fn remote_cache(&self) -> PathBuf {
        self.out.join("embeddings").join("remote-cache.jsonl")
    }
    pub fn sweep(&self) -> PathBuf {
        self.out.join("results").join("sweep.json")
    }
    pub fn report_dir(&self) -> PathBuf {
        self.out.join("report")
    }
    pub fn report_csv(&self) -> PathBuf {
        self.report_dir().join("results.csv")
    }
    pub fn report_json(&self) -> PathBuf {
        self.report_dir().join("results.json")
    }
    pub fn bands(&self) -> PathBuf {
        self.report_dir().join("reference_bands.txt")
    }
}

/// One line of `embeddings/index.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingIndexEntry {
    pub file: String,
    pub model_id: String,
    pub text_scope: TextScope,
    pub dim: usize,
    pub papers: usize,
}

pub(super) struct StageRun {
    pub outputs: Vec<PathBuf>,
    pub notes: Vec<String>,
}

/// Files a stage reads, each with the stage that produces it (`None` for user-supplied files).
pub(super) fn inputs_for(config: &PipelineConfig, layout: &Layout, stage: Stage) -> Vec<(PathBuf, Option<Stage>)> {
    let mut v = Vec::new();
    match stage {
        Stage::Ingest => v.push((config.corpus.path.clone(), None)),
        Stage::Citations => {
            v.push((layout.records(), Some(Stage::Ingest)));
            let cache = config.citation_cache_path();
            if config.citations.offline && cache.exists() {
                v.push((cache, None));
            }
        }
        Stage::Label => {
            v.push((layout.records(), Some(Stage::Ingest)));
            v.push((layout.series(), Some(Stage::Citations)));
        }
        Stage::Embed => {
            v.push((layout.records(), Some(Stage::Ingest)));
            for p in &config.embeddings {
                if let EmbeddingProvider::Import { path, .. } = p {
                    v.push((path.clone(), None));
                }
            }
        }
        Stage::TrainEval => {
            for &m in &config.labels.metrics {
                for &q in &config.labels.qs {
                    v.push((layout.labels(m, q), Some(Stage::Label)));
                }
            }
            v.push((layout.embedding_index(), Some(Stage::Embed)));
            for (i, p) in config.embeddings.iter().enumerate() {
                v.push((layout.embedding_file(i, p), Some(Stage::Embed)));
            }
        }
        Stage::Report => v.push((layout.sweep(), Some(Stage::TrainEval))),
    }
    v
}

pub(super) fn up_to_date_notes(layout: &Layout, stage: Stage) -> Vec<String> {
    match stage {
        Stage::Report => fs::read_to_string(layout.bands())
            .map(|t| t.lines().map(str::to_string).collect())
            .unwrap_or_default(),
        _ => Vec::new(),
    }
}

/// Embedding settings as hashed: import paths are left out (their content is hashed instead).
pub(super) fn embedding_settings(config: &PipelineConfig) -> serde_json::Value {
    config
        .embeddings
        .iter()
        .map(|p| {
            let mut v = serde_json::to_value(p).expect("config serializes");
            if let Some(o) = v.as_object_mut() {
                o.remove("path");
                if let Some(model) = p.remote_model() {
                    o.insert("model".into(), model.into());
                }
            }
            v
        })
        .collect()
}

pub(super) fn run(p: &Pipeline, layout: &Layout, stage: Stage) -> Result<StageRun, PipelineError> {
    match stage {
        Stage::Ingest => ingest(p.config(), layout),
        Stage::Citations => citations(p, layout),
        Stage::Label => label(p.config(), layout),
        Stage::Embed => embed(p, layout),
        Stage::TrainEval => train_eval(p.config(), layout),
        Stage::Report => report(p, layout),
    }
}

fn stage_err(stage: Stage) -> impl Fn(&dyn std::fmt::Display) -> PipelineError {
    move |e| PipelineError::Stage {
        stage,
        message: e.to_string(),
    }
}

fn create_parent(path: &Path) -> std::io::Result<()> {
    match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => fs::create_dir_all(d),
        _ => Ok(()),
    }
}

fn write_json_file<T: Serialize>(path: &Path, value: &T, stage: Stage) -> Result<(), PipelineError> {
    create_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).map_err(|e| stage_err(stage)(&e))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json_file<T: for<'de> Deserialize<'de>>(path: &Path, stage: Stage) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| stage_err(stage)(&format!("{}: {e}", path.display())))
}

fn read_records(layout: &Layout, stage: Stage) -> Result<Vec<PaperRecord>, PipelineError> {
    let (records, report) = parse_corpus(&layout.records(), CorpusFormat::JsonLines).map_err(|e| stage_err(stage)(&e))?;
    if !report.failures.is_empty() {
        return Err(stage_err(stage)(&format!(
            "{} is damaged ({} unreadable lines); rerun `ingest`",
            layout.records().display(),
            report.failures.len()
        )));
    }
    Ok(records)
}

fn ingest(config: &PipelineConfig, layout: &Layout) -> Result<StageRun, PipelineError> {
    let c = &config.corpus;
    let (records, mut report) = parse_corpus(&c.path, c.format).map_err(|e| stage_err(Stage::Ingest)(&e))?;
    let mut records = filter_valid(records, &(c.first_year..=c.last_year), c.strict, &mut report);
    if !c.drop_sections.is_empty() {
        for r in &mut records {
            strip_sections(r, &c.drop_sections);
        }
    }
    records.sort_by(|a, b| a.doi.cmp(&b.doi));
    let before = records.len();
    records.dedup_by(|b, a| a.doi == b.doi);
    if records.len() < before {
        log::warn!("ingest: dropped {} duplicate DOIs (first occurrence kept)", before - records.len());
    }
    if records.is_empty() {
        return Err(stage_err(Stage::Ingest)(&"no valid records in the corpus"));
    }

    create_parent(&layout.records())?;
    let mut w = BufWriter::new(fs::File::create(layout.records())?);
    write_jsonl(&records, &mut w)?;
    drop(w);
    write_json_file(&layout.parse_report(), &report, Stage::Ingest)?;
    write_json_file(&layout.corpus_stats(), &corpus_stats(&records), Stage::Ingest)?;
    Ok(StageRun {
        outputs: vec![layout.records(), layout.parse_report(), layout.corpus_stats()],
        notes: vec![format!(
            "{} records kept ({} abstract-only), {} excluded, {} unparsable",
            records.len(),
            report.abstract_only.len(),
            report.excluded,
            report.failures.len()
        )],
    })
}

fn citations(p: &Pipeline, layout: &Layout) -> Result<StageRun, PipelineError> {
    let stage = Stage::Citations;
    let c = &p.config().citations;
    let records = read_records(layout, stage)?;
    let dois: Vec<String> = records.iter().map(|r| r.doi.clone()).collect();
    let cache = p.config().citation_cache_path();
    let err = |e: crate::citations::CitationError| stage_err(stage)(&e);

    let mut missing: BTreeMap<String, String> = BTreeMap::new();
    let mut transient = 0usize;
    let series: BTreeMap<String, CitationSeries> = if c.offline {
        let cached = read_cache(&cache).map_err(err)?;
        let mut found = BTreeMap::new();
        for d in &dois {
            match cached.get(d) {
                Some(s) => {
                    found.insert(d.clone(), s.clone());
                }
                None => {
                    missing.insert(d.clone(), "not in cache (offline)".into());
                }
            }
        }
        found
    } else {
        create_parent(&cache)?;
        let mut client = OpenAlexClient::new(p.transport())
            .with_base_url(c.base_url.clone())
            .with_rate_limit(c.rate_limit)
            .with_concurrency(c.concurrency);
        if c.mailto.is_some() {
            client = client.with_mailto(c.mailto.clone());
        }
        let outcome = client.load_or_fetch(&dois, &cache, c.horizon_year).map_err(err)?;
        for (doi, reason) in &outcome.missing {
            if reason.is_transient() {
                transient += 1;
            }
            missing.insert(doi.clone(), format!("{reason:?}"));
        }
        outcome.series
    };

    if transient > 0 {
        // Successes are already in the cache; a rerun only retries the failures.
        return Err(PipelineError::Upstream {
            stage,
            message: format!("{transient} DOIs failed with transient errors; rerun `fetch-citations` to retry"),
        });
    }
    if series.is_empty() {
        return Err(stage_err(stage)(&"no citation series for any DOI"));
    }
    create_parent(&layout.series())?;
    let list: Vec<CitationSeries> = series.into_values().collect();
    write_cache(&layout.series(), &list).map_err(err)?;
    write_json_file(&layout.missing(), &missing, stage)?;
    Ok(StageRun {
        outputs: vec![layout.series(), layout.missing()],
        notes: vec![format!("{} series, {} DOIs missing", list.len(), missing.len())],
    })
}

fn label(config: &PipelineConfig, layout: &Layout) -> Result<StageRun, PipelineError> {
    let stage = Stage::Label;
    let records = read_records(layout, stage)?;
    let series = read_cache(&layout.series()).map_err(|e| stage_err(stage)(&e))?;
    let mut outputs = Vec::new();
    let mut notes = Vec::new();
    for &metric in &config.labels.metrics {
        for &q in &config.labels.qs {
            let table = build_label_table(
                &records,
                &series,
                metric,
                q,
                &config.labels.years_ahead,
                config.citations.horizon_year,
            )
            .map_err(|e| stage_err(stage)(&e))?;
            let path = layout.labels(metric, q);
            create_parent(&path)?;
            table
                .write_csv(BufWriter::new(fs::File::create(&path)?))
                .map_err(|e| stage_err(stage)(&e))?;
            notes.push(format!("{metric} q={q}: {} labelled (paper, t) pairs", table.entries.len()));
            outputs.push(path);
        }
    }
    Ok(StageRun { outputs, notes })
}

/// Texts that make up one paper under a scope: the abstract, or the body sections.
fn segments(r: &PaperRecord, scope: TextScope) -> Vec<String> {
    match scope {
        TextScope::Abstract => vec![r.abstract_text.clone()],
        TextScope::FullText => r
            .sections
            .iter()
            .filter(|s| !s.text.trim().is_empty())
            .map(|s| s.text.clone())
            .collect(),
    }
}

fn pool(vectors: &[Vec<f32>], texts: &[String], pooling: Pooling) -> Result<Vec<f32>, EmbedError> {
    match pooling {
        Pooling::Mean => average_section_vectors(vectors),
        Pooling::LengthWeighted => {
            let w: Vec<f64> = texts.iter().map(|t| t.chars().count().max(1) as f64).collect();
            weighted_average_vectors(vectors, &w)
        }
    }
}

/// Embeds every segment with `embed_all`, then pools segments back into paper vectors.
fn pooled_matrix(
    papers: &[(String, Vec<String>)],
    pooling: Pooling,
    embed_all: impl FnOnce(&[String]) -> Result<(String, usize, Vec<Vec<f32>>), EmbedError>,
) -> Result<EmbeddingMatrix, EmbedError> {
    let flat: Vec<String> = papers.iter().flat_map(|(_, s)| s.iter().cloned()).collect();
    let (model_id, dim, vectors) = embed_all(&flat)?;
    let mut out = BTreeMap::new();
    let mut at = 0;
    for (doi, segs) in papers {
        let v = pool(&vectors[at..at + segs.len()], segs, pooling)?;
        at += segs.len();
        out.insert(doi.clone(), v);
    }
    EmbeddingMatrix::new(model_id, dim, out)
}

fn remote_model_id(model: &str) -> String {
    if model == DEFAULT_MODEL {
        "remote-ada".to_string()
    } else {
        format!("remote-{model}")
    }
}

fn embed_one(
    p: &Pipeline,
    layout: &Layout,
    provider: &EmbeddingProvider,
    records: &[PaperRecord],
) -> Result<EmbeddingMatrix, PipelineError> {
    let stage = Stage::Embed;
    let scope = provider.text_scope();
    let papers: Vec<(String, Vec<String>)> = records
        .iter()
        .map(|r| (r.doi.clone(), segments(r, scope)))
        .filter(|(doi, segs)| {
            if segs.is_empty() {
                log::info!("{doi}: no {scope} text, left out of this embedding");
            }
            !segs.is_empty()
        })
        .collect();
    let embed_err = |e: EmbedError| match e {
        EmbedError::Auth(_) | EmbedError::Upstream(_) => PipelineError::Upstream {
            stage,
            message: e.to_string(),
        },
        other => stage_err(stage)(&other),
    };

    let seed = derive_seed_tagged(p.config().seed, "tfidf-svd");
    match provider {
        EmbeddingProvider::TfidfSvd { dim, pooling, .. } => {
            let m = pooled_matrix(&papers, *pooling, |texts| {
                let docs: Vec<(String, String)> = texts
                    .iter()
                    .enumerate()
                    .map(|(i, t)| (format!("segment-{i}"), t.clone()))
                    .collect();
                let (m, _, _) = embed_tfidf_svd(&docs, *dim, seed)?;
                let vectors = docs.iter().map(|(id, _)| m.vectors[id].clone()).collect();
                Ok((m.model_id, m.dim, vectors))
            })
            .map_err(embed_err)?;
            Ok(m)
        }
        EmbeddingProvider::Remote {
            endpoint,
            dim,
            pooling,
            batch_size,
            max_chars,
            ..
        } => {
            let key = std::env::var(ENV_EMBED_API_KEY)
                .ok()
                .filter(|k| !k.is_empty())
                .ok_or_else(|| PipelineError::Config(format!("remote embedding needs {ENV_EMBED_API_KEY}")))?;
            let endpoint = endpoint
                .clone()
                .or_else(|| std::env::var(ENV_EMBED_ENDPOINT).ok())
                .unwrap_or_else(|| DEFAULT_ENDPOINT.to_string());
            let model = provider.remote_model().expect("remote provider");
            let embedder = RemoteEmbedder::new(p.transport(), endpoint, key, model.clone(), *dim).with_batch_size(*batch_size);
            let cache = layout.remote_cache();
            if cache.exists() {
                embedder.load_cache(&cache).map_err(embed_err)?;
            }
            let result = pooled_matrix(&papers, *pooling, |texts| {
                let v = embedder.embed_long_texts(texts, *max_chars)?;
                Ok((remote_model_id(&model), *dim, v))
            });
            // Keep whatever was paid for, even when the stage fails.
            create_parent(&cache)?;
            embedder.save_cache(&cache).map_err(embed_err)?;
            log::info!("embed: {} remote requests", embedder.request_count());
            result.map_err(embed_err)
        }
        EmbeddingProvider::Import {
            path, model_id, dim, ..
        } => {
            let m = import_vectors(path, *dim).map_err(embed_err)?;
            if &m.model_id != model_id {
                log::warn!("{}: file model id {:?}, using {:?}", path.display(), m.model_id, model_id);
            }
            let mut vectors = m.vectors;
            let wanted: std::collections::BTreeSet<&str> = papers.iter().map(|(d, _)| d.as_str()).collect();
            vectors.retain(|doi, _| wanted.contains(doi.as_str()));
            let absent = wanted.len() - vectors.len();
            if absent > 0 {
                log::warn!("{}: no vector for {absent} corpus papers", path.display());
            }
            EmbeddingMatrix::new(model_id.clone(), *dim, vectors).map_err(embed_err)
        }
    }
}

fn embed(p: &Pipeline, layout: &Layout) -> Result<StageRun, PipelineError> {
    let stage = Stage::Embed;
    let records = read_records(layout, stage)?;
    let mut outputs = Vec::new();
    let mut index = Vec::new();
    let mut notes = Vec::new();
    for (i, provider) in p.config().embeddings.iter().enumerate() {
        let m = embed_one(p, layout, provider, &records)?;
        let path = layout.embedding_file(i, provider);
        create_parent(&path)?;
        write_vectors_file(&m, &path).map_err(|e| stage_err(stage)(&e))?;
        notes.push(format!("{} ({}): {} papers x {} dims", m.model_id, provider.text_scope(), m.len(), m.dim));
        index.push(EmbeddingIndexEntry {
            file: path.file_name().expect("file name").to_string_lossy().into_owned(),
            model_id: m.model_id.clone(),
            text_scope: provider.text_scope(),
            dim: m.dim,
            papers: m.len(),
        });
        outputs.push(path);
    }
    write_json_file(&layout.embedding_index(), &index, stage)?;
    outputs.push(layout.embedding_index());
    Ok(StageRun { outputs, notes })
}

pub(crate) fn classifier_specs(config: &PipelineConfig) -> Vec<ClassifierSpec> {
    let seed = derive_seed_tagged(config.seed, "classifier");
    config
        .experiment
        .classifiers
        .iter()
        .map(|h| ClassifierSpec {
            hyperparameters: h.clone(),
            seed,
        })
        .collect()
}

fn train_eval(config: &PipelineConfig, layout: &Layout) -> Result<StageRun, PipelineError> {
    let stage = Stage::TrainEval;
    let mut data = ExperimentData::default();
    for &m in &config.labels.metrics {
        for &q in &config.labels.qs {
            let file = fs::File::open(layout.labels(m, q))?;
            data.labels
                .push(LabelTable::read_csv(file).map_err(|e| stage_err(stage)(&e))?);
        }
    }
    let index: Vec<EmbeddingIndexEntry> = read_json_file(&layout.embedding_index(), stage)?;
    for entry in index {
        let path = layout.embedding_index().with_file_name(&entry.file);
        let matrix = load_vectors(&path).map_err(|e| stage_err(stage)(&e))?;
        data.embeddings.push(ScopedEmbedding {
            text_scope: entry.text_scope,
            matrix,
        });
    }
    let grid = ExperimentGrid {
        classifiers: classifier_specs(config),
        metrics: config.labels.metrics.clone(),
        qs: config.labels.qs.clone(),
        years_ahead: config.labels.years_ahead.clone(),
        balances: config.experiment.balances.clone(),
        split: config.experiment.split,
        seed: config.seed,
        permute_labels: config.experiment.permute_labels,
        workers: config.experiment.workers,
    };
    let result = sweep(&grid, &data);
    write_json_file(&layout.sweep(), &result, stage)?;
    Ok(StageRun {
        outputs: vec![layout.sweep()],
        notes: vec![format!(
            "{} records, {} skipped cells, {} (cohort, years ahead) pairs past the horizon",
            result.records.len(),
            result.skipped.len(),
            result.horizon_exclusions.len()
        )],
    })
}

fn report(p: &Pipeline, layout: &Layout) -> Result<StageRun, PipelineError> {
    let stage = Stage::Report;
    let config = p.config();
    let err = |e: crate::report::ReportError| stage_err(stage)(&e);
    let result: SweepResult = read_json_file(&layout.sweep(), stage)?;
    let dir = layout.report_dir();
    fs::create_dir_all(&dir)?;
    for entry in fs::read_dir(&dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "svg") {
            fs::remove_file(path)?;
        }
    }

    write_csv(&report_rows(&result), fs::File::create(layout.report_csv())?).map_err(err)?;
    // Charts and bands are drawn from the CSV alone.
    let rows = read_csv(fs::File::open(layout.report_csv())?).map_err(err)?;
    let mut outputs = vec![layout.report_csv()];
    for chart in render_charts(&rows) {
        let path = dir.join(&chart.file_name);
        fs::write(&path, chart.svg)?;
        outputs.push(path);
    }
    let bands = reference_bands(&rows);
    let band_lines: Vec<String> = bands.iter().map(|b| b.describe()).collect();
    fs::write(layout.bands(), band_lines.iter().map(|l| format!("{l}\n")).collect::<String>())?;
    outputs.push(layout.bands());

    let settings = serde_json::json!({
        "labels": config.labels,
        "horizon_year": config.citations.horizon_year,
        "corpus": {
            "first_year": config.corpus.first_year,
            "last_year": config.corpus.last_year,
            "strict": config.corpus.strict,
            "drop_sections": config.corpus.drop_sections,
        },
        "embeddings": embedding_settings(config),
        "balances": config.experiment.balances,
        "split": config.experiment.split,
        "permute_labels": config.experiment.permute_labels,
    });
    let mut metadata = ReportMetadata::new(config.seed, p.config_hash(), classifier_specs(config), settings);
    metadata.reference_bands = bands;
    let mut summaries = BTreeMap::new();
    for score in [Score::AucRoc, Score::AucPr] {
        for (name, axis) in [("embedding", Axis::EmbeddingId), ("classifier", Axis::ClassifierId)] {
            let group = [Axis::TargetMetric, Axis::Balance, Axis::TextScope, axis];
            summaries.insert(format!("{score}_by_{name}"), aggregate_median(&result.records, &group, score));
        }
    }
    let report = JsonReport {
        metadata,
        records: result.records,
        skipped: result.skipped,
        horizon_exclusions: result.horizon_exclusions,
        summaries,
    };
    write_json(&report, fs::File::create(layout.report_json())?).map_err(err)?;
    outputs.push(layout.report_json());

    let charts = outputs.len() - 3;
    let mut notes = vec![format!("{} rows, {charts} charts in {}", rows.len(), dir.display())];
    notes.extend(band_lines);
    Ok(StageRun { outputs, notes })
}
