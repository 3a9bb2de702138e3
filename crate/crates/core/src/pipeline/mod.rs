//! Manifests, the four post-processing combinations, corpus reports and
//! spectrogram export.

mod manifest;
mod report;
mod run;
mod spectro;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use manifest::{
    build_manifest, build_manifest_with_ratios, split_sizes, DatasetManifest, ManifestEntry, RoomMeta, Split,
    DEFAULT_SPLIT_RATIOS, MANIFEST_VERSION,
};
pub use report::{
    load_entry, params_csv, read_params_csv, report_params, write_params_csv, CorpusMeans, EntryFailure,
    MeanDifference, ParamRow, ParamsReport,
};
pub use run::{output_name, run_pipeline, EntryRecord, PipelineReport, StageHashes, StageSummary, REPORT_NAME};
pub use spectro::{
    export_spectrograms, read_matrix_csv, render_pgm, write_matrix_csv, SpectrogramFiles, DEFAULT_HOP,
    DEFAULT_WINDOW,
};

use crate::acoustics::AcousticsError;
use crate::audio::AudioError;
use crate::equalization::{EqError, DEFAULT_TAPS};
use crate::tsrirgan::GanError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no WAV files in {0}")]
    EmptyDirectory(PathBuf),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("bad sidecar {path}: {reason}")]
    InvalidSidecar { path: PathBuf, reason: String },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("plan needs a {0} but none was found")]
    MissingArtifact(String),
    #[error("{0}")]
    Io(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Acoustics(#[from] AcousticsError),
    #[error(transparent)]
    Eq(#[from] EqError),
    #[error(transparent)]
    Gan(#[from] GanError),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Combination {
    /// EQ applied to the synthetic RIR.
    EqOnly,
    /// Translation of the equalized RIR.
    TranslateAfterEq,
    TranslateOnly,
    /// Translation followed by EQ.
    EqAfterTranslate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Eq,
    Translate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Eq => "eq",
            Stage::Translate => "translate",
        })
    }
}

impl Combination {
    pub const ALL: [Combination; 4] = [
        Combination::EqOnly,
        Combination::TranslateAfterEq,
        Combination::TranslateOnly,
        Combination::EqAfterTranslate,
    ];

    pub fn stages(self) -> &'static [Stage] {
        match self {
            Combination::EqOnly => &[Stage::Eq],
            Combination::TranslateAfterEq => &[Stage::Eq, Stage::Translate],
            Combination::TranslateOnly => &[Stage::Translate],
            Combination::EqAfterTranslate => &[Stage::Translate, Stage::Eq],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Combination::EqOnly => "EQ_ONLY",
            Combination::TranslateAfterEq => "TRANSLATE_AFTER_EQ",
            Combination::TranslateOnly => "TRANSLATE_ONLY",
            Combination::EqAfterTranslate => "EQ_AFTER_TRANSLATE",
        }
    }
}

impl fmt::Display for Combination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Combination {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Combination::ALL
            .into_iter()
            .find(|c| c.as_str() == norm)
            .ok_or_else(|| format!("unknown combination `{s}`"))
    }
}

fn default_taps() -> usize {
    DEFAULT_TAPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelinePlan {
    pub combination: Combination,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub gmm: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_taps")]
    pub num_taps: usize,
}

impl PipelinePlan {
    pub fn new(combination: Combination, checkpoint: Option<PathBuf>, gmm: Option<PathBuf>, seed: u64) -> Self {
        PipelinePlan {
            combination,
            checkpoint,
            gmm,
            seed,
            num_taps: DEFAULT_TAPS,
        }
    }

    /// Checks that every artifact the combination reads exists on disk.
    pub fn validate(&self) -> Result<()> {
        let stages = self.combination.stages();
        let need = |p: &Option<PathBuf>, what: &str| match p {
            Some(p) if p.is_file() => Ok(()),
            Some(p) => Err(PipelineError::MissingArtifact(format!("{what} ({})", p.display()))),
            None => Err(PipelineError::MissingArtifact(what.to_string())),
        };
        if stages.contains(&Stage::Translate) {
            need(&self.checkpoint, "checkpoint")?;
        }
        if stages.contains(&Stage::Eq) {
            need(&self.gmm, "gmm")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combination_names_round_trip() {
        for c in Combination::ALL {
            assert_eq!(c.to_string().parse::<Combination>().unwrap(), c);
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(json, format!("\"{c}\""));
        }
        assert_eq!("eq-after-translate".parse::<Combination>().unwrap(), Combination::EqAfterTranslate);
        assert!("EQ_TWICE".parse::<Combination>().is_err());
    }

    #[test]
    fn stage_order() {
        assert_eq!(Combination::EqAfterTranslate.stages(), &[Stage::Translate, Stage::Eq]);
        assert_eq!(Combination::TranslateAfterEq.stages(), &[Stage::Eq, Stage::Translate]);
    }

    #[test]
    fn plan_requires_artifacts() {
        let plan = PipelinePlan::new(Combination::EqOnly, None, None, 0);
        assert!(matches!(plan.validate(), Err(PipelineError::MissingArtifact(_))));
        let dir = tempfile::tempdir().unwrap();
        let gmm = dir.path().join("g.json");
        std::fs::write(&gmm, "{}").unwrap();
        let plan = PipelinePlan::new(Combination::EqOnly, None, Some(gmm.clone()), 0);
        assert!(plan.validate().is_ok());
        let plan = PipelinePlan::new(Combination::EqAfterTranslate, None, Some(gmm.clone()), 0);
        assert!(matches!(plan.validate(), Err(PipelineError::MissingArtifact(m)) if m == "checkpoint"));
        let plan = PipelinePlan::new(Combination::TranslateOnly, Some(dir.path().join("nope.ckpt")), None, 0);
        assert!(plan.validate().is_err());
    }
}
