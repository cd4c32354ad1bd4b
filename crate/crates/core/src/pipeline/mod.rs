//! End-to-end orchestration: six stages that read and write artifacts under
//! one output directory.
//!
//! Each stage records a manifest in `<out>/.manifests/<stage>.json` with a
//! hash of the configuration it used and content hashes of its inputs and
//! outputs. A stage whose manifest still matches is reported as up-to-date
//! and not recomputed. A stage whose configuration changed refuses to
//! overwrite its earlier outputs unless forced.

mod config;
mod manifest;
mod stages;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::http::Transport;

pub use config::{
    CitationsConfig, CorpusConfig, EmbeddingProvider, ExperimentConfig, LabelsConfig, PipelineConfig, Pooling,
    DEFAULT_SEED,
};
pub use manifest::{hash_path, sha256_hex, StageManifest};
pub use stages::{EmbeddingIndexEntry, Layout};

/// Bumped when artifact layouts change, so old manifests stop matching.
const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Citations,
    Label,
    Embed,
    TrainEval,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Ingest,
        Stage::Citations,
        Stage::Label,
        Stage::Embed,
        Stage::TrainEval,
        Stage::Report,
    ];

    /// The command-line subcommand that runs this stage.
    pub fn command(&self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Citations => "fetch-citations",
            Stage::Label => "label",
            Stage::Embed => "embed",
            Stage::TrainEval => "train-eval",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.command())
    }
}

impl FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "citations" => Ok(Stage::Citations),
            other => Stage::ALL
                .into_iter()
                .find(|st| st.command() == other)
                .ok_or_else(|| format!("unknown stage {other:?}")),
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(
        "{stage}: existing outputs were produced with a different configuration \
         (recorded {recorded}, current {current}); rerun with --force to overwrite"
    )]
    ConfigChanged {
        stage: Stage,
        recorded: String,
        current: String,
    },
    #[error("{needed_by}: missing {}; run `{producer}` first", .path.display())]
    MissingArtifact {
        needed_by: Stage,
        producer: Stage,
        path: PathBuf,
    },
    #[error("{stage}: upstream failure: {message}")]
    Upstream { stage: Stage, message: String },
    #[error("{stage}: {message}")]
    Stage { stage: Stage, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// Process exit status for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::ConfigChanged { .. } => 2,
            PipelineError::MissingArtifact { .. } => 3,
            PipelineError::Upstream { .. } => 4,
            PipelineError::Stage { .. } | PipelineError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    UpToDate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub stage: Stage,
    pub status: StageStatus,
    /// Short human-readable lines (counts, reference bands).
    pub notes: Vec<String>,
}

impl fmt::Display for StageOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.status {
            StageStatus::Ran => write!(f, "{}: done", self.stage)?,
            StageStatus::UpToDate => write!(f, "{}: up-to-date", self.stage)?,
        }
        for n in &self.notes {
            write!(f, "\n  {n}")?;
        }
        Ok(())
    }
}

pub struct Pipeline {
    config: PipelineConfig,
    force: bool,
    transport: Option<Arc<dyn Transport>>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        Ok(Self {
            config,
            force: false,
            transport: None,
        })
    }

    /// Recompute stages even when up-to-date, and overwrite outputs made under another configuration.
    pub fn with_force(mut self, force: bool) -> Self {
        self.force = force;
        self
    }

    /// HTTP transport for the citation and remote embedding clients (default: ureq).
    pub fn with_transport(mut self, transport: Arc<dyn Transport>) -> Self {
        self.transport = Some(transport);
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn layout(&self) -> Layout {
        Layout::new(&self.config)
    }

    /// Hash of every result-affecting setting. Paths, worker counts and
    /// network tuning are excluded, so moving a run does not change it.
    pub fn config_hash(&self) -> String {
        let all: serde_json::Map<String, serde_json::Value> = Stage::ALL
            .iter()
            .filter(|s| **s != Stage::Report)
            .map(|s| (s.command().to_string(), self.stage_settings(*s)))
            .collect();
        sha256_hex(serde_json::Value::Object(all).to_string().as_bytes())
    }

    fn stage_hash(&self, stage: Stage) -> String {
        let v = serde_json::json!({ "version": ARTIFACT_VERSION, "settings": self.stage_settings(stage) });
        sha256_hex(v.to_string().as_bytes())
    }

    fn stage_settings(&self, stage: Stage) -> serde_json::Value {
        use serde_json::json;
        let c = &self.config;
        match stage {
            Stage::Ingest => json!({
                "format": c.corpus.format,
                "first_year": c.corpus.first_year,
                "last_year": c.corpus.last_year,
                "strict": c.corpus.strict,
                "drop_sections": c.corpus.drop_sections,
            }),
            Stage::Citations => json!({
                "base_url": c.citations.base_url,
                "horizon_year": c.citations.horizon_year,
            }),
            Stage::Label => json!({ "labels": c.labels, "horizon_year": c.citations.horizon_year }),
            Stage::Embed => json!({ "seed": c.seed, "embeddings": stages::embedding_settings(c) }),
            Stage::TrainEval => {
                let mut exp = serde_json::to_value(&c.experiment).expect("config serializes");
                exp.as_object_mut().map(|o| o.remove("workers"));
                json!({ "seed": c.seed, "experiment": exp, "labels": c.labels })
            }
            Stage::Report => json!({ "config_hash": self.config_hash() }),
        }
    }

    pub fn run_all(&self) -> Result<Vec<StageOutcome>, PipelineError> {
        self.run_stages(&Stage::ALL)
    }

    /// Runs the given stages in pipeline order.
    pub fn run_stages(&self, stages: &[Stage]) -> Result<Vec<StageOutcome>, PipelineError> {
        let mut wanted = stages.to_vec();
        wanted.sort();
        wanted.dedup();
        wanted.into_iter().map(|s| self.run_stage(s)).collect()
    }

    pub fn run_stage(&self, stage: Stage) -> Result<StageOutcome, PipelineError> {
        let layout = self.layout();
        let inputs = stages::inputs_for(&self.config, &layout, stage);
        for (path, producer) in &inputs {
            if !path.exists() {
                return Err(match producer {
                    Some(p) => PipelineError::MissingArtifact {
                        needed_by: stage,
                        producer: *p,
                        path: path.clone(),
                    },
                    None => PipelineError::Config(format!("{stage}: input {} does not exist", path.display())),
                });
            }
        }
        let input_paths: Vec<PathBuf> = inputs.into_iter().map(|(p, _)| p).collect();
        let input_hashes = manifest::hash_all(&layout.out, &input_paths)?;
        let config_hash = self.stage_hash(stage);

        if let Some(m) = manifest::read_manifest(&layout.out, stage)? {
            if m.config_hash != config_hash && !self.force {
                return Err(PipelineError::ConfigChanged {
                    stage,
                    recorded: m.config_hash[..12.min(m.config_hash.len())].to_string(),
                    current: config_hash[..12].to_string(),
                });
            }
            if !self.force && m.config_hash == config_hash && m.inputs == input_hashes && outputs_match(&layout.out, &m) {
                log::info!("{stage}: up-to-date");
                return Ok(StageOutcome {
                    stage,
                    status: StageStatus::UpToDate,
                    notes: stages::up_to_date_notes(&layout, stage),
                });
            }
        }

        log::info!("{stage}: running");
        let run = stages::run(self, &layout, stage)?;
        let manifest = StageManifest {
            stage: stage.command().to_string(),
            config_hash,
            inputs: input_hashes,
            outputs: manifest::hash_all(&layout.out, &run.outputs)?,
        };
        manifest::write_manifest(&layout.out, &manifest, stage)?;
        Ok(StageOutcome {
            stage,
            status: StageStatus::Ran,
            notes: run.notes,
        })
    }

    pub(crate) fn transport(&self) -> Arc<dyn Transport> {
        self.transport
            .clone()
            .unwrap_or_else(|| Arc::new(crate::http::UreqTransport::from_env()))
    }
}

fn outputs_match(out: &Path, m: &StageManifest) -> bool {
    !m.outputs.is_empty()
        && m.outputs.iter().all(|(key, hash)| {
            let p = Path::new(key);
            let full = if p.is_absolute() { p.to_path_buf() } else { out.join(p) };
            hash_path(&full).map(|h| &h == hash).unwrap_or(false)
        })
}

#[cfg(test)]
mod tests;
