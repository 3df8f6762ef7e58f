use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ProjectorConfig, ProjectorError, ProjectorParams, TokenMatrix};

pub const CHECKPOINT_FORMAT: &str = "unison-projector/1";

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    config: ProjectorConfig,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    w3: Vec<f64>,
    b3: Vec<f64>,
}

/// Writes config plus flat row-major weight arrays as JSON.
pub fn save_checkpoint(params: &ProjectorParams, path: impl AsRef<Path>) -> Result<(), ProjectorError> {
    params.validate()?;
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        config: params.config,
        w1: params.w1.data().to_vec(),
        b1: params.b1.clone(),
        w2: params.w2.data().to_vec(),
        b2: params.b2.clone(),
        w3: params.w3.data().to_vec(),
        b3: params.b3.clone(),
    };
    let text = serde_json::to_string(&file).map_err(|e| ProjectorError::Checkpoint(e.to_string()))?;
    std::fs::write(path.as_ref(), text)
        .map_err(|e| ProjectorError::Checkpoint(format!("{}: {e}", path.as_ref().display())))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ProjectorParams, ProjectorError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| ProjectorError::Checkpoint(format!("{}: {e}", path.display())))?;
    let file: CheckpointFile =
        serde_json::from_str(&text).map_err(|e| ProjectorError::Checkpoint(e.to_string()))?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(ProjectorError::Checkpoint(format!("unsupported format {:?}", file.format)));
    }
    let c = file.config;
    c.validate()?;
    let params = ProjectorParams {
        config: c,
        w1: TokenMatrix::new(c.d_in, c.d_hidden, file.w1)?,
        b1: file.b1,
        w2: TokenMatrix::new(c.d_hidden, c.d_hidden, file.w2)?,
        b2: file.b2,
        w3: TokenMatrix::new(c.d_hidden, c.d_out, file.w3)?,
        b3: file.b3,
    };
    params.validate()?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projector::init;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        let p = init(&ProjectorConfig { seed: 3, ..ProjectorConfig::new(5, 7) }).unwrap();
        save_checkpoint(&p, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), p);

        std::fs::write(&path, r#"{"format":"other"}"#).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap_err().code(), "Checkpoint");
    }
}
