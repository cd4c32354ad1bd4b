//! Model files: `IMPM` magic, u16 LE format version, u32 LE header length,
//! a JSON header (spec, feature dimension, training report), then the
//! JSON-encoded model state.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClassifierError, ClassifierSpec, ModelState, TrainedModel, TrainingReport};

pub const MODEL_MAGIC: &[u8; 4] = b"IMPM";
pub const MODEL_FORMAT_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    spec: ClassifierSpec,
    feature_dim: usize,
    training_report: TrainingReport,
}

pub fn write_model<W: Write>(model: &TrainedModel, out: W) -> Result<(), ClassifierError> {
    let mut w = BufWriter::new(out);
    let header = serde_json::to_vec(&Header {
        spec: model.spec.clone(),
        feature_dim: model.feature_dim,
        training_report: model.training_report.clone(),
    })
    .map_err(|e| ClassifierError::Format(e.to_string()))?;
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&MODEL_FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    serde_json::to_writer(&mut w, &model.state).map_err(|e| ClassifierError::Format(e.to_string()))?;
    w.flush()?;
    Ok(())
}

pub fn read_model<R: Read>(input: R) -> Result<TrainedModel, ClassifierError> {
    let mut r = BufReader::new(input);
    let mut fixed = [0u8; 10];
    r.read_exact(&mut fixed)
        .map_err(|_| ClassifierError::Format("file too short".into()))?;
    if &fixed[..4] != MODEL_MAGIC {
        return Err(ClassifierError::Format("not a model file".into()));
    }
    let version = u16::from_le_bytes([fixed[4], fixed[5]]);
    if version != MODEL_FORMAT_VERSION {
        return Err(ClassifierError::Format(format!("unsupported format version {version}")));
    }
    let len = u32::from_le_bytes([fixed[6], fixed[7], fixed[8], fixed[9]]) as usize;
    let mut header = vec![0u8; len];
    r.read_exact(&mut header)
        .map_err(|_| ClassifierError::Format("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&header).map_err(|e| ClassifierError::Format(e.to_string()))?;
    let state: ModelState = serde_json::from_reader(r).map_err(|e| ClassifierError::Format(e.to_string()))?;
    Ok(TrainedModel {
        spec: header.spec,
        feature_dim: header.feature_dim,
        state,
        training_report: header.training_report,
    })
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<(), ClassifierError> {
    write_model(model, File::create(path)?)
}

pub fn load_model(path: &Path) -> Result<TrainedModel, ClassifierError> {
    read_model(File::open(path)?)
}
