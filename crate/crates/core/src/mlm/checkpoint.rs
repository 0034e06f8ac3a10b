//! JSON checkpoints. Floats are written in shortest round-trip form, so a
//! reloaded model predicts bit-identically.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlm::model::{ModelConfig, Params, TinyMlm};
use crate::mlm::vocab::Vocabulary;

const FORMAT: &str = "melm-checkpoint";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    config: ModelConfig,
    vocab: Vec<String>,
    reserved: usize,
    steps: u64,
    loss_history: Vec<f64>,
    tensors: Vec<Vec<f64>>,
}

pub fn write_checkpoint<W: Write>(model: &TinyMlm, out: W) -> Result<()> {
    let file = CheckpointFile {
        format: FORMAT.to_string(),
        version: VERSION,
        config: model.config,
        vocab: model.vocab.tokens().to_vec(),
        reserved: model.vocab.reserved(),
        steps: model.steps,
        loss_history: model.loss_history.clone(),
        tensors: model.params.slices().iter().map(|s| s.to_vec()).collect(),
    };
    serde_json::to_writer(out, &file).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn read_checkpoint<R: Read>(input: R) -> Result<TinyMlm> {
    let file: CheckpointFile =
        serde_json::from_reader(input).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if file.format != FORMAT || file.version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint {} v{}",
            file.format, file.version
        )));
    }
    file.config.validate()?;
    if file.reserved > file.vocab.len() {
        return Err(Error::Checkpoint("reserved ids exceed vocabulary".into()));
    }
    let vocab = Vocabulary::from_parts(file.vocab, file.reserved);
    let mut params = Params::zeros(vocab.len(), &file.config);
    let slots = params.slices_mut();
    if slots.len() != file.tensors.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, found {}",
            slots.len(),
            file.tensors.len()
        )));
    }
    for (i, (slot, data)) in slots.into_iter().zip(&file.tensors).enumerate() {
        if slot.len() != data.len() {
            return Err(Error::Checkpoint(format!(
                "tensor {i}: expected {} values, found {}",
                slot.len(),
                data.len()
            )));
        }
        slot.copy_from_slice(data);
    }
    Ok(TinyMlm {
        vocab,
        config: file.config,
        params,
        steps: file.steps,
        loss_history: file.loss_history,
    })
}

pub fn save_checkpoint(model: &TinyMlm, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_checkpoint(model, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<TinyMlm> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(f))
}
