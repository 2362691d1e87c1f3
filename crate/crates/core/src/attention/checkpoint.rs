//! Model checkpoints: a JSON header plus one tensor file per parameter.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::head::ClassifierParams;
use super::AttentionConfig;
use crate::error::{Error, Result};
use crate::ingest::json::{check_version, read_json, write_json};
use crate::ingest::{load_tensor, save_tensor, DType, TensorFile};

pub const HEADER_FILE: &str = "checkpoint.json";
const WEIGHTS_FILE: &str = "weights.tensor";
const BIAS_FILE: &str = "bias.tensor";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub attention: AttentionConfig,
    pub classes: Vec<String>,
    pub params: ClassifierParams,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    attention: AttentionConfig,
    classes: Vec<String>,
    weights: String,
    bias: String,
}

/// Writes `checkpoint.json`, `weights.tensor` and `bias.tensor` into `dir`.
pub fn save_checkpoint(dir: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let dir = dir.as_ref();
    write_json(
        &dir.join(HEADER_FILE),
        &Header {
            format_version: 1,
            attention: ckpt.attention.clone(),
            classes: ckpt.classes.clone(),
            weights: WEIGHTS_FILE.into(),
            bias: BIAS_FILE.into(),
        },
    )?;
    for (name, t) in [(WEIGHTS_FILE, &ckpt.params.weights), (BIAS_FILE, &ckpt.params.bias)] {
        save_tensor(
            dir.join(name),
            &TensorFile {
                tensor: t.clone(),
                dtype: DType::F64,
                spatial_scale: None,
            },
        )?;
    }
    Ok(())
}

/// Reads a checkpoint directory, or a path to its `checkpoint.json`.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let header_path = if path.is_dir() {
        path.join(HEADER_FILE)
    } else {
        path.to_path_buf()
    };
    let dir = header_path.parent().unwrap_or(Path::new("."));
    let header: Header = read_json(&header_path)?;
    check_version(header.format_version, &header_path)?;
    let load = |name: &str| -> Result<_> {
        let p = dir.join(name);
        if !p.exists() {
            return Err(Error::MissingFile(p));
        }
        Ok(load_tensor(p)?.tensor)
    };
    let params = ClassifierParams::new(load(&header.weights)?, load(&header.bias)?)
        .map_err(|e| Error::validation(&header_path, e.to_string()))?;
    if params.classes() != header.classes.len() {
        return Err(Error::validation(
            &header_path,
            format!("{} classes listed, bias has {}", header.classes.len(), params.classes()),
        ));
    }
    if params.inputs() % (header.attention.grid_x * header.attention.grid_y).max(1) != 0 {
        return Err(Error::validation(
            &header_path,
            "weight rows do not match the grid size",
        ));
    }
    Ok(Checkpoint {
        attention: header.attention,
        classes: header.classes,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ckpt = Checkpoint {
            attention: AttentionConfig {
                num_classes: 3,
                ..Default::default()
            },
            classes: vec!["a".into(), "b".into(), "c".into()],
            params: ClassifierParams::xavier(50, 3, &mut rng),
        };
        save_checkpoint(dir.path(), &ckpt).unwrap();
        assert_eq!(load_checkpoint(dir.path()).unwrap(), ckpt);
        assert_eq!(load_checkpoint(dir.path().join(HEADER_FILE)).unwrap(), ckpt);
        std::fs::remove_file(dir.path().join(BIAS_FILE)).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::MissingFile(_))));
    }
}
