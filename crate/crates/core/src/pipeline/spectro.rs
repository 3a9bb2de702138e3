use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{load_entry, ManifestEntry, PipelineError, Result};
use crate::audio::{spectrogram, Spectrogram, SPEC_FLOOR_DB};

pub const DEFAULT_WINDOW: usize = 512;
pub const DEFAULT_HOP: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramFiles {
    pub id: String,
    pub csv: PathBuf,
    pub pgm: PathBuf,
    pub bins: usize,
    pub frames: usize,
}

fn io_err(path: &Path, e: std::io::Error) -> PipelineError {
    PipelineError::Io(format!("{}: {e}", path.display()))
}

/// One CSV line per frequency bin (DC first), one column per frame.
pub fn write_matrix_csv(m: &[Vec<f64>], path: &Path) -> Result<()> {
    let mut s = String::new();
    for row in m {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| io_err(path, e))
}

pub fn read_matrix_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(',')
                .map(|f| f.parse::<f64>().map_err(|_| PipelineError::Format(format!("bad number `{f}`"))))
                .collect()
        })
        .collect()
}

/// Binary greyscale PGM (P5): frames left to right, low frequencies at
/// the bottom, `SPEC_FLOOR_DB..=max` mapped linearly onto `0..=255`.
pub fn render_pgm(spec: &Spectrogram) -> Vec<u8> {
    let (h, w) = (spec.bins(), spec.frames());
    let max = spec
        .magnitudes
        .iter()
        .flatten()
        .fold(SPEC_FLOOR_DB, |a, &b| a.max(b));
    let span = max - SPEC_FLOOR_DB;
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for row in spec.magnitudes.iter().rev() {
        out.extend(row.iter().map(|&db| {
            if span > 0.0 {
                ((db - SPEC_FLOOR_DB) / span * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        }));
    }
    out
}

/// Writes `<id>.spec.csv` and `<id>.spec.pgm` for each entry. The first
/// unreadable entry aborts the export.
pub fn export_spectrograms(
    entries: &[ManifestEntry],
    out_dir: &Path,
    window_size: usize,
    hop: usize,
) -> Result<Vec<SpectrogramFiles>> {
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    entries
        .iter()
        .map(|e| {
            let spec = spectrogram(&load_entry(e)?, window_size, hop)?;
            let csv = out_dir.join(format!("{}.spec.csv", e.id));
            let pgm = out_dir.join(format!("{}.spec.pgm", e.id));
            write_matrix_csv(&spec.magnitudes, &csv)?;
            std::fs::write(&pgm, render_pgm(&spec)).map_err(|err| io_err(&pgm, err))?;
            Ok(SpectrogramFiles {
                id: e.id.clone(),
                csv,
                pgm,
                bins: spec.bins(),
                frames: spec.frames(),
            })
        })
        .collect()
}
