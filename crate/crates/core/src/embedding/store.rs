//! Binary vector store.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "EMB1"                      4 bytes
//! model_id_len: u16, model_id UTF-8
//! dim: u32
//! count: u64
//! count x { doi_len: u16, doi UTF-8, dim x f32 }
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{EmbedError, EmbeddingMatrix};

pub const MAGIC: &[u8; 4] = b"EMB1";

pub fn write_vectors<W: Write>(m: &EmbeddingMatrix, out: W) -> Result<(), EmbedError> {
    let mut w = BufWriter::new(out);
    w.write_all(MAGIC)?;
    write_str(&mut w, &m.model_id)?;
    w.write_all(&(m.dim as u32).to_le_bytes())?;
    w.write_all(&(m.vectors.len() as u64).to_le_bytes())?;
    for (doi, v) in &m.vectors {
        write_str(&mut w, doi)?;
        for x in v {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_vectors_file(m: &EmbeddingMatrix, path: &Path) -> Result<(), EmbedError> {
    write_vectors(m, File::create(path)?)
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<(), EmbedError> {
    let len = u16::try_from(s.len()).map_err(|_| EmbedError::Store(format!("string too long: {s:?}")))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<(), EmbedError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => EmbedError::Truncated(what.to_string()),
        _ => EmbedError::Io(e),
    })
}

fn read_str<R: Read>(r: &mut R, what: &str) -> Result<String, EmbedError> {
    let mut len = [0u8; 2];
    read_exact(r, &mut len, what)?;
    let mut buf = vec![0u8; u16::from_le_bytes(len) as usize];
    read_exact(r, &mut buf, what)?;
    String::from_utf8(buf).map_err(|_| EmbedError::Store(format!("{what} is not UTF-8")))
}

/// Reads a store and checks every row against `expected_dim`.
pub fn read_vectors<R: Read>(input: R, expected_dim: usize) -> Result<EmbeddingMatrix, EmbedError> {
    let mut r = BufReader::new(input);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "header")?;
    if &magic != MAGIC {
        return Err(EmbedError::Store("bad magic, expected EMB1".into()));
    }
    let model_id = read_str(&mut r, "model id")?;
    let mut b4 = [0u8; 4];
    read_exact(&mut r, &mut b4, "dim")?;
    let dim = u32::from_le_bytes(b4) as usize;
    let mut b8 = [0u8; 8];
    read_exact(&mut r, &mut b8, "count")?;
    let count = u64::from_le_bytes(b8);
    if dim != expected_dim {
        return Err(EmbedError::DimensionMismatch {
            doi: None,
            expected: expected_dim,
            actual: dim,
        });
    }

    let mut vectors = BTreeMap::new();
    let mut row = vec![0u8; dim * 4];
    for i in 0..count {
        let doi = read_str(&mut r, &format!("record {i} doi"))?;
        read_exact(&mut r, &mut row, &format!("vector for {doi}"))?;
        let v: Vec<f32> = row
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if vectors.insert(doi.clone(), v).is_some() {
            return Err(EmbedError::DuplicateDoi(doi));
        }
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(EmbedError::Store("trailing bytes after last record".into()));
    }
    EmbeddingMatrix::new(model_id, dim, vectors)
}

pub fn import_vectors(path: &Path, expected_dim: usize) -> Result<EmbeddingMatrix, EmbedError> {
    read_vectors(File::open(path)?, expected_dim)
}

/// Reads a store at whatever dimension its header declares.
pub fn load_vectors(path: &Path) -> Result<EmbeddingMatrix, EmbedError> {
    let bytes = std::fs::read(path)?;
    let dim_at = |off: usize| -> Option<usize> {
        let b = bytes.get(off..off + 4)?;
        Some(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    };
    let id_len = bytes
        .get(4..6)
        .map(|b| u16::from_le_bytes([b[0], b[1]]) as usize)
        .ok_or_else(|| EmbedError::Truncated("header".into()))?;
    let dim = dim_at(6 + id_len).ok_or_else(|| EmbedError::Truncated("dim".into()))?;
    read_vectors(bytes.as_slice(), dim)
}
