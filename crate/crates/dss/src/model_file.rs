//! JSON model files.

use std::fs;
use std::path::Path;

use dss_core::DssModel;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    /// Divergences computed against this model are reported in this unit.
    pub divergence_unit: String,
    pub model: DssModel,
}

impl ModelFile {
    pub fn new(model: DssModel) -> Self {
        Self {
            schema_version: MODEL_SCHEMA_VERSION,
            divergence_unit: "nats".into(),
            model,
        }
    }
}

pub fn save_model(path: &Path, model: &DssModel) -> Result<()> {
    let file = ModelFile::new(model.clone());
    let text = serde_json::to_string(&file).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<DssModel> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let file: ModelFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if file.schema_version != MODEL_SCHEMA_VERSION {
        return Err(CliError::Data(format!(
            "{}: unsupported model schema version {}",
            path.display(),
            file.schema_version
        )));
    }
    Ok(file.model)
}
