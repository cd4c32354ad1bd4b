use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::*;
use crate::citations::write_cache;
use crate::corpus::write_jsonl;
use crate::http::{HttpResponse, TransportError};
use crate::synthetic::{generate, SyntheticConfig};

fn fixture(dir: &Path) -> PipelineConfig {
    let synth = generate(&SyntheticConfig {
        years: 2016..=2019,
        papers_per_year: 15,
        ..SyntheticConfig::default()
    });
    write_jsonl(&synth.records, fs::File::create(dir.join("corpus.jsonl")).unwrap()).unwrap();
    let series: Vec<_> = synth.citations.into_values().collect();
    write_cache(&dir.join("cache.jsonl"), &series).unwrap();
    let mut cfg = PipelineConfig::from_toml(
        r#"
        seed = 5
        [citations]
        offline = true
        cache = "cache.jsonl"
        [labels]
        metrics = ["ACC"]
        years_ahead = [0, 2, 5]
        [[embeddings]]
        provider = "tfidf-svd"
        dim = 8
        [[embeddings]]
        provider = "tfidf-svd"
        dim = 8
        text_scope = "full-text"
        [[experiment.classifiers]]
        variant = "random-forest"
        n_trees = 15
        [[experiment.classifiers]]
        variant = "logistic-regression"
        "#,
    )
    .unwrap();
    cfg.resolve_paths(dir);
    cfg
}

#[test]
fn full_run_then_rerun_is_up_to_date() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path());
    let p = Pipeline::new(cfg.clone()).unwrap();
    let first = p.run_all().unwrap();
    assert_eq!(first.len(), 6);
    assert!(first.iter().all(|o| o.status == StageStatus::Ran));

    let layout = p.layout();
    let svgs = fs::read_dir(layout.report_dir())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "svg"))
        .count();
    assert!(svgs >= 4, "{svgs} charts");
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(layout.report_json()).unwrap()).unwrap();
    assert_eq!(json["metadata"]["config_hash"], p.config_hash());
    // Two embeddings x two classifiers x three offsets x two balances, one of
    // the offsets past the horizon for the 2019 cohort only.
    assert_eq!(json["records"].as_array().unwrap().len(), 24);

    let second = p.run_all().unwrap();
    assert!(second.iter().all(|o| o.status == StageStatus::UpToDate), "{second:?}");
    assert!(!second[5].notes.is_empty(), "report notes carry the reference bands");
}

#[test]
fn identical_configs_give_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fixture(dir.path());
    cfg.out_dir = dir.path().join("a");
    let a = Pipeline::new(cfg.clone()).unwrap();
    a.run_all().unwrap();
    cfg.out_dir = dir.path().join("b");
    cfg.experiment.workers = Some(1);
    let b = Pipeline::new(cfg).unwrap();
    b.run_all().unwrap();
    for f in ["results.csv", "results.json"] {
        let x = fs::read(a.layout().report_dir().join(f)).unwrap();
        let y = fs::read(b.layout().report_dir().join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
}

#[test]
fn missing_upstream_artifact_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(fixture(dir.path())).unwrap();
    let e = p.run_stage(Stage::Report).unwrap_err();
    assert_eq!(e.exit_code(), 3);
    assert!(e.to_string().contains("`train-eval`"), "{e}");
    let e = p.run_stage(Stage::Label).unwrap_err();
    assert!(e.to_string().contains("`ingest`"), "{e}");
}

#[test]
fn changed_config_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fixture(dir.path());
    Pipeline::new(cfg.clone()).unwrap().run_stages(&[Stage::Ingest, Stage::Citations, Stage::Label]).unwrap();
    cfg.labels.years_ahead = vec![0, 1];
    let e = Pipeline::new(cfg.clone()).unwrap().run_stage(Stage::Label).unwrap_err();
    assert!(matches!(e, PipelineError::ConfigChanged { stage: Stage::Label, .. }), "{e}");
    assert_eq!(e.exit_code(), 2);
    // Unrelated stages are unaffected.
    let ok = Pipeline::new(cfg.clone()).unwrap().run_stage(Stage::Ingest).unwrap();
    assert_eq!(ok.status, StageStatus::UpToDate);
    let forced = Pipeline::new(cfg).unwrap().with_force(true).run_stage(Stage::Label).unwrap();
    assert_eq!(forced.status, StageStatus::Ran);
}

#[test]
fn changed_input_reruns_downstream() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path());
    let p = Pipeline::new(cfg).unwrap();
    p.run_stages(&[Stage::Ingest, Stage::Embed]).unwrap();
    let corpus = fs::read_to_string(dir.path().join("corpus.jsonl")).unwrap();
    let trimmed: String = corpus.lines().skip(1).map(|l| format!("{l}\n")).collect();
    fs::write(dir.path().join("corpus.jsonl"), trimmed).unwrap();
    let again = p.run_stages(&[Stage::Ingest, Stage::Embed]).unwrap();
    assert!(again.iter().all(|o| o.status == StageStatus::Ran));
}

#[test]
fn missing_corpus_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fixture(dir.path());
    cfg.corpus.path = dir.path().join("nope.jsonl");
    let e = Pipeline::new(cfg).unwrap().run_stage(Stage::Ingest).unwrap_err();
    assert_eq!(e.exit_code(), 2, "{e}");
}

struct Unavailable(AtomicUsize);

impl Transport for Unavailable {
    fn get(&self, _url: &str) -> Result<HttpResponse, TransportError> {
        self.0.fetch_add(1, Ordering::SeqCst);
        Ok(HttpResponse {
            status: 503,
            body: String::new(),
        })
    }
    fn post_json(&self, _url: &str, _bearer: Option<&str>, _body: &str) -> Result<HttpResponse, TransportError> {
        unreachable!()
    }
}

#[test]
fn transient_citation_failures_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fixture(dir.path());
    // Online, with every DOI but one already cached.
    cfg.citations.offline = false;
    let cache = cfg.citation_cache_path();
    let text = fs::read_to_string(&cache).unwrap();
    fs::write(&cache, text.lines().skip(1).map(|l| format!("{l}\n")).collect::<String>()).unwrap();
    let transport = Arc::new(Unavailable(AtomicUsize::new(0)));
    let p = Pipeline::new(cfg).unwrap().with_transport(transport.clone());
    p.run_stage(Stage::Ingest).unwrap();
    let e = p.run_stage(Stage::Citations).unwrap_err();
    assert_eq!(e.exit_code(), 4, "{e}");
    assert!(transport.0.load(Ordering::SeqCst) >= 1);
    assert!(!manifest::manifest_path(&p.layout().out, Stage::Citations).exists());
}

#[test]
fn stage_names_round_trip() {
    for s in Stage::ALL {
        assert_eq!(s.command().parse::<Stage>().unwrap(), s);
    }
    assert_eq!("citations".parse::<Stage>().unwrap(), Stage::Citations);
    assert!("all".parse::<Stage>().is_err());
}
