//! Checkpoint format: one line of JSON header, then the flat parameter
//! vector as little-endian f64.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Classifier, ClassifierSpec};
use crate::error::{RafniError, Result};

const FORMAT: &str = "rafni-checkpoint-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub spec: ClassifierSpec,
    pub shapes: Vec<Vec<usize>>,
    pub updates: u64,
}

pub fn write_checkpoint<W: Write>(model: &Classifier, w: &mut W) -> Result<()> {
    let header = CheckpointHeader {
        format: FORMAT.into(),
        spec: model.spec().clone(),
        shapes: model.spec().shapes(),
        updates: model.updates(),
    };
    serde_json::to_writer(&mut *w, &header)?;
    w.write_all(b"\n")?;
    for p in model.params() {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<Classifier> {
    let mut r = BufReader::new(r);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: CheckpointHeader = serde_json::from_str(line.trim_end())?;
    if header.format != FORMAT {
        return Err(RafniError::Checkpoint(format!("unknown format `{}`", header.format)));
    }
    if header.shapes != header.spec.shapes() {
        return Err(RafniError::Checkpoint("parameter shapes disagree with the model spec".into()));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let n = header.spec.n_params();
    if bytes.len() != n * 8 {
        return Err(RafniError::Checkpoint(format!("expected {} parameter bytes, found {}", n * 8, bytes.len())));
    }
    let params = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Classifier::from_parts(header.spec, params, header.updates)
}

pub fn save_checkpoint(model: &Classifier, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Classifier> {
    read_checkpoint(File::open(path)?)
}
