use std::path::{Path, PathBuf};

use rir_core::pipeline::Combination;
use rir_core::tsrirgan::{DiscriminatorConfig, GeneratorConfig, TrainingConfig};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub combination: Option<Combination>,
    pub checkpoint: Option<PathBuf>,
    pub gmm: Option<PathBuf>,
    pub num_taps: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    pub snr_min_db: Option<f64>,
    pub snr_max_db: Option<f64>,
}

/// Contents of `--config`; every field is optional and command-line flags
/// take precedence.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub training: TrainingConfig,
    pub pipeline: PipelineSection,
    pub augment: AugmentSection,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let parsed = if is_json {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}
