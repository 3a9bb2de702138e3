use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PipelineError, Result};
use crate::audio::Domain;
use crate::augmentation::sorted_wavs;

/// Train/dev/test weights; 1209 files split exactly into these counts.
pub const DEFAULT_SPLIT_RATIOS: [u64; 3] = [773, 194, 242];
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

/// Geometry documented next to a recorded RIR, read from `<stem>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomMeta {
    pub dimensions: [f64; 3],
    pub speaker_pos: [f64; 3],
    pub mic_pos: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub wav_path: PathBuf,
    pub domain: Domain,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub room_meta: Option<RoomMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub entries: Vec<ManifestEntry>,
}

/// Split sizes for `n` items by largest-remainder rounding of `ratios`.
/// Ties in the fractional part go to the earlier split.
pub fn split_sizes(n: usize, ratios: [u64; 3]) -> [usize; 3] {
    let total: u64 = ratios.iter().sum();
    if total == 0 {
        return [n, 0, 0];
    }
    let n128 = n as u128;
    let mut sizes = [0usize; 3];
    let mut rem = [0u128; 3];
    for i in 0..3 {
        let q = n128 * ratios[i] as u128;
        sizes[i] = (q / total as u128) as usize;
        rem[i] = q % total as u128;
    }
    let mut left = n - sizes.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| rem[b].cmp(&rem[a]).then(a.cmp(&b)));
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[i] += 1;
        left -= 1;
    }
    sizes
}

fn read_sidecar(wav: &Path) -> Result<Option<RoomMeta>> {
    let side = wav.with_extension("json");
    if !side.is_file() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&side).map_err(|e| PipelineError::Io(format!("{}: {e}", side.display())))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| PipelineError::InvalidSidecar {
            path: side,
            reason: e.to_string(),
        })
}

pub fn build_manifest(dir: &Path, domain: Domain, split_seed: u64) -> Result<DatasetManifest> {
    build_manifest_with_ratios(dir, domain, split_seed, DEFAULT_SPLIT_RATIOS)
}

/// Lists `dir/*.wav` (sorted, id = file stem) and assigns splits by a
/// seeded shuffle. WAV contents are not read here.
pub fn build_manifest_with_ratios(dir: &Path, domain: Domain, split_seed: u64, ratios: [u64; 3]) -> Result<DatasetManifest> {
    let wavs = sorted_wavs(dir).map_err(|e| PipelineError::Io(format!("{}: {e}", dir.display())))?;
    if wavs.is_empty() {
        return Err(PipelineError::EmptyDirectory(dir.to_path_buf()));
    }
    let mut seen = BTreeSet::new();
    let mut entries = Vec::with_capacity(wavs.len());
    for wav in wavs {
        let id = wav
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        if !seen.insert(id.clone()) {
            return Err(PipelineError::DuplicateId(id));
        }
        entries.push(ManifestEntry {
            id,
            room_meta: read_sidecar(&wav)?,
            wav_path: wav,
            domain,
            split: Split::Train,
        });
    }
    entries.sort_by(|a, b| a.id.cmp(&b.id));

    let [n_train, n_dev, _] = split_sizes(entries.len(), ratios);
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(split_seed));
    for (rank, &i) in order.iter().enumerate() {
        entries[i].split = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_dev {
            Split::Dev
        } else {
            Split::Test
        };
    }
    Ok(DatasetManifest {
        version: MANIFEST_VERSION,
        entries,
    })
}

impl DatasetManifest {
    pub fn split_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for e in &self.entries {
            c[e.split as usize] += 1;
        }
        c
    }

    pub fn of_domain(&self, domain: Domain) -> Vec<ManifestEntry> {
        self.entries.iter().filter(|e| e.domain == domain).cloned().collect()
    }

    /// Concatenates two manifests, keeping entries sorted by id.
    pub fn merge(mut self, other: DatasetManifest) -> Result<DatasetManifest> {
        let mut seen: BTreeSet<String> = self.entries.iter().map(|e| e.id.clone()).collect();
        for e in other.entries {
            if !seen.insert(e.id.clone()) {
                return Err(PipelineError::DuplicateId(e.id));
            }
            self.entries.push(e);
        }
        self.entries.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(self)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| PipelineError::Format(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
        let m: DatasetManifest = serde_json::from_str(&text).map_err(|e| PipelineError::Format(e.to_string()))?;
        if m.version != MANIFEST_VERSION {
            return Err(PipelineError::Format(format!("manifest version {}", m.version)));
        }
        Ok(m)
    }
}
