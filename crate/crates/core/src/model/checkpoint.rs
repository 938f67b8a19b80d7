//! Checkpoint format: a version line, a JSON metadata line (model config
//! plus the number of completed training epochs), then the flat tensor map
//! of `crate::numerics::param_map`:
//!
//! ```text
//! pcgan-checkpoint v1
//! meta {"config":{...},"trained_epochs":100}
//! tensor-map v1
//! generator.input_embedding.weight 2 2 16 ...
//! ```
//!
//! Loading validates the config, then fills a freshly shaped parameter set
//! by name, rejecting unknown names, missing names and shape mismatches.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numerics::{read_tensor_map, write_tensor_map};

use super::{ModelConfig, ModelError, ModelParams, Result};

const HEADER: &str = "pcgan-checkpoint v1";

#[derive(Serialize, Deserialize)]
struct Meta {
    config: ModelConfig,
    trained_epochs: usize,
}

/// Serializes a checkpoint to any writer.
pub fn write_checkpoint<W: Write>(
    w: &mut W,
    params: &ModelParams,
    trained_epochs: usize,
) -> Result<()> {
    let meta = Meta {
        config: params.config.clone(),
        trained_epochs,
    };
    let io_err = |source: std::io::Error| ModelError::Io {
        path: "<writer>".into(),
        source,
    };
    writeln!(w, "{}", HEADER).map_err(io_err)?;
    writeln!(
        w,
        "meta {}",
        serde_json::to_string(&meta).expect("meta serializes")
    )
    .map_err(io_err)?;
    let mut entries: Vec<(String, &crate::numerics::Tensor)> = params.generator.fields();
    entries.extend(params.discriminator.fields());
    write_tensor_map(w, &entries).map_err(io_err)?;
    Ok(())
}

pub fn save_checkpoint(path: &Path, params: &ModelParams, trained_epochs: usize) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, params, trained_epochs)?;
    fs::write(path, buf).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads a checkpoint, returning the parameters and the number of epochs
/// the checkpoint had completed.
pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, usize)> {
    let file = fs::File::open(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    let io_err = |source: std::io::Error| ModelError::Io {
        path: path.display().to_string(),
        source,
    };
    reader.read_line(&mut line).map_err(io_err)?;
    if line.trim() != HEADER {
        return Err(ModelError::Checkpoint(format!(
            "expected header {:?}, got {:?}",
            HEADER,
            line.trim()
        )));
    }
    line.clear();
    reader.read_line(&mut line).map_err(io_err)?;
    let meta_json = line
        .trim()
        .strip_prefix("meta ")
        .ok_or_else(|| ModelError::Checkpoint("missing meta line".into()))?;
    let meta: Meta = serde_json::from_str(meta_json)
        .map_err(|e| ModelError::Checkpoint(format!("bad meta line: {}", e)))?;
    meta.config.validate()?;

    let tensors = read_tensor_map(&mut reader)?;
    let mut by_name: HashMap<String, crate::numerics::Tensor> = tensors.into_iter().collect();

    // Shape a parameter set from the config, then fill every field by name.
    let mut params = ModelParams::init(&meta.config, 0);
    let mut fields = params.generator.fields_mut();
    fields.extend(params.discriminator.fields_mut());
    for (name, slot) in fields {
        let tensor = by_name
            .remove(&name)
            .ok_or_else(|| ModelError::Checkpoint(format!("missing tensor {}", name)))?;
        if tensor.shape() != slot.shape() {
            return Err(ModelError::Checkpoint(format!(
                "tensor {} has shape {:?}, expected {:?}",
                name,
                tensor.shape(),
                slot.shape()
            )));
        }
        *slot = tensor;
    }
    if let Some(extra) = by_name.keys().next() {
        return Err(ModelError::Checkpoint(format!("unknown tensor {}", extra)));
    }
    Ok((params, meta.trained_epochs))
}
