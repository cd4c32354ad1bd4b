use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PipelineError, Stage};

pub(crate) const MANIFEST_DIR: &str = ".manifests";

/// Record of one successful stage run: its configuration hash and the
/// content hashes of everything it read and wrote.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Content hash of a file, or of every file under a directory (names and
/// contents, in sorted order).
pub fn hash_path(path: &Path) -> std::io::Result<String> {
    let mut h = Sha256::new();
    if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, &mut files)?;
        files.sort();
        for f in files {
            let rel = f.strip_prefix(path).unwrap_or(&f);
            h.update(rel.to_string_lossy().as_bytes());
            h.update([0]);
            h.update(fs::read(&f)?);
            h.update([0]);
        }
    } else {
        let mut file = fs::File::open(path)?;
        let mut buf = vec![0u8; 1 << 16];
        loop {
            let n = file.read(&mut buf)?;
            if n == 0 {
                break;
            }
            h.update(&buf[..n]);
        }
    }
    Ok(hex(&h.finalize()))
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

pub(crate) fn manifest_path(out_dir: &Path, stage: Stage) -> PathBuf {
    out_dir.join(MANIFEST_DIR).join(format!("{}.json", stage.command()))
}

pub(crate) fn read_manifest(out_dir: &Path, stage: Stage) -> Result<Option<StageManifest>, PipelineError> {
    let path = manifest_path(out_dir, stage);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path)?;
    // An unreadable manifest only costs a rerun.
    Ok(serde_json::from_str(&text).ok())
}

pub(crate) fn write_manifest(out_dir: &Path, m: &StageManifest, stage: Stage) -> Result<(), PipelineError> {
    let path = manifest_path(out_dir, stage);
    fs::create_dir_all(path.parent().expect("manifest path has a parent"))?;
    let mut text = serde_json::to_string_pretty(m).map_err(|e| PipelineError::Stage {
        stage,
        message: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Keys are paths relative to `out_dir` when possible, so an output tree can be moved.
pub(crate) fn key_for(out_dir: &Path, path: &Path) -> String {
    path.strip_prefix(out_dir)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}

pub(crate) fn hash_all(out_dir: &Path, paths: &[PathBuf]) -> std::io::Result<BTreeMap<String, String>> {
    paths.iter().map(|p| Ok((key_for(out_dir, p), hash_path(p)?))).collect()
}
