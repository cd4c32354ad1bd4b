use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use impact_core::citations::write_cache;
use impact_core::corpus::write_jsonl;
use impact_core::pipeline::{Pipeline, PipelineConfig, PipelineError, Stage};
use impact_core::synthetic::{generate, SyntheticConfig};

/// Configuration written next to a generated synthetic corpus.
const DEMO_CONFIG: &str = include_str!("demo.toml");
const DEFAULT_CONFIG_FILE: &str = "impact.toml";

/// Predict whether papers will be highly cited from their text.
#[derive(Debug, Parser)]
#[command(name = "impact", version, about)]
struct Cli {
    /// Pipeline configuration (TOML). Defaults to ./impact.toml.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Recompute stages and overwrite outputs made under a different configuration.
    #[arg(long, global = true)]
    force: bool,
    /// Log progress (RUST_LOG takes precedence).
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and validate the corpus.
    Ingest,
    /// Fetch yearly citation counts (cached).
    FetchCitations,
    /// Build top-q labels per cohort and years ahead.
    Label,
    /// Compute paper embeddings.
    Embed,
    /// Train and evaluate every cell of the experiment grid.
    TrainEval,
    /// Write CSV/JSON tables and SVG charts.
    Report,
    /// Run every stage in order.
    All,
    /// Write a synthetic corpus, citation cache and config into a directory.
    Synth {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 25)]
        papers_per_year: usize,
        /// Make labels independent of the text.
        #[arg(long)]
        null: bool,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let path = match &cli.config {
        Some(p) => p.clone(),
        None if Path::new(DEFAULT_CONFIG_FILE).exists() => PathBuf::from(DEFAULT_CONFIG_FILE),
        None => {
            return Err(PipelineError::Config(format!(
                "no --config given and no {DEFAULT_CONFIG_FILE} here; `impact synth --dir demo` writes a runnable example"
            )))
        }
    };
    let mut cfg = PipelineConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn synth(dir: &Path, papers_per_year: usize, null: bool, seed: Option<u64>) -> Result<(), PipelineError> {
    let mut cfg = SyntheticConfig {
        papers_per_year,
        ..SyntheticConfig::demo()
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if null {
        cfg = cfg.null();
    }
    let corpus = generate(&cfg);
    fs::create_dir_all(dir)?;
    write_jsonl(&corpus.records, BufWriter::new(fs::File::create(dir.join("corpus.jsonl"))?))?;
    let series: Vec<_> = corpus.citations.into_values().collect();
    write_cache(&dir.join("citations.jsonl"), &series).map_err(|e| PipelineError::Config(e.to_string()))?;
    fs::write(dir.join(DEFAULT_CONFIG_FILE), DEMO_CONFIG)?;
    println!(
        "wrote {} papers ({} in the top group) to {}",
        corpus.records.len(),
        corpus.top.len(),
        dir.display()
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let stages: Vec<Stage> = match &cli.command {
        Command::Synth {
            dir,
            papers_per_year,
            null,
        } => return synth(dir, *papers_per_year, *null, cli.seed),
        Command::Ingest => vec![Stage::Ingest],
        Command::FetchCitations => vec![Stage::Citations],
        Command::Label => vec![Stage::Label],
        Command::Embed => vec![Stage::Embed],
        Command::TrainEval => vec![Stage::TrainEval],
        Command::Report => vec![Stage::Report],
        Command::All => Stage::ALL.to_vec(),
    };
    let pipeline = Pipeline::new(load_config(cli)?)?.with_force(cli.force);
    log::info!("config hash {}", pipeline.config_hash());
    for stage in stages {
        let outcome = pipeline.run_stage(stage)?;
        // A closed stdout (e.g. piped into `head`) must not abort the run.
        let _ = writeln!(std::io::stdout(), "{outcome}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(
        env_logger::Env::default().default_filter_or(if cli.verbose { "info" } else { "warn" }),
    )
    .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
