//! Far-field speech synthesis: clean speech convolved with an RIR plus
//! looped noise scaled to a target SNR.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{self, load_waveform, normalize_rir, peak, resample, AudioError, Domain, ImpulseResponse, SAMPLE_RATE};

/// Shortest accepted noise recording.
pub const MIN_NOISE_LEN: usize = SAMPLE_RATE as usize;
pub const DEFAULT_SNR_RANGE_DB: (f64, f64) = (1.0, 2.0);
pub const MANIFEST_NAME: &str = "manifest.jsonl";

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("empty input sequence")]
    EmptyInput,
    #[error("reverberant signal has zero power")]
    ZeroPowerSignal,
    #[error("noise segment has zero power")]
    ZeroPowerNoise,
    #[error("invalid noise spec: {0}")]
    InvalidSpec(String),
    #[error("no .wav files in {0}")]
    EmptyDirectory(PathBuf),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

pub type Result<T> = std::result::Result<T, AugmentError>;

/// Linear convolution via FFT; output length `len(x) + len(h) - 1`.
pub fn convolve_full(x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() || h.is_empty() {
        return Err(AugmentError::EmptyInput);
    }
    let out_len = x.len() + h.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let pad = |s: &[f64]| {
        let mut v: Vec<Complex<f64>> = s.iter().map(|&r| Complex::new(r, 0.0)).collect();
        v.resize(n, Complex::new(0.0, 0.0));
        v
    };
    let mut a = pad(x);
    let mut b = pad(h);
    fwd.process(&mut a);
    fwd.process(&mut b);
    a.iter_mut().zip(&b).for_each(|(p, q)| *p *= q);
    inv.process(&mut a);
    let scale = 1.0 / n as f64;
    Ok(a[..out_len].iter().map(|c| c.re * scale).collect())
}

/// `noise` repeated from `offset_l` to fill `target_len` samples.
pub fn loop_noise(noise: &[f64], offset_l: usize, target_len: usize) -> Result<Vec<f64>> {
    if noise.is_empty() {
        return Err(AugmentError::EmptyInput);
    }
    Ok((0..target_len).map(|t| noise[(offset_l + t) % noise.len()]).collect())
}

pub fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// `10 log10(P_signal / P_noise)` with mean-square powers.
pub fn snr_db(signal: &[f64], noise: &[f64]) -> f64 {
    10.0 * (mean_power(signal) / mean_power(noise)).log10()
}

/// Noise gain that puts `noise_segment` at `snr_db` below `reverberant`.
pub fn compute_lambda(reverberant: &[f64], noise_segment: &[f64], snr_db: f64) -> Result<f64> {
    let p_rev = mean_power(reverberant);
    let p_noise = mean_power(noise_segment);
    if p_rev == 0.0 {
        return Err(AugmentError::ZeroPowerSignal);
    }
    if p_noise == 0.0 {
        return Err(AugmentError::ZeroPowerNoise);
    }
    Ok((p_rev / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub noise: Vec<f64>,
    pub noise_id: String,
    pub offset_l: usize,
    pub snr_db: f64,
}

impl NoiseSpec {
    pub fn new(noise: Vec<f64>, noise_id: impl Into<String>, offset_l: usize, snr_db: f64) -> Result<Self> {
        if noise.len() < MIN_NOISE_LEN {
            return Err(AugmentError::InvalidSpec(format!(
                "noise has {} samples, need at least {MIN_NOISE_LEN}",
                noise.len()
            )));
        }
        if offset_l >= noise.len() {
            return Err(AugmentError::InvalidSpec(format!(
                "offset {offset_l} outside noise of length {}",
                noise.len()
            )));
        }
        if !snr_db.is_finite() {
            return Err(AugmentError::InvalidSpec("snr_db must be finite".into()));
        }
        Ok(NoiseSpec {
            noise,
            noise_id: noise_id.into(),
            offset_l,
            snr_db,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceMeta {
    pub rir_id: String,
    pub noise_id: String,
    pub offset_l: usize,
    pub snr_db: f64,
    pub lambda: f64,
    /// Global gain applied to keep the mixture within [-1, 1]; 1 when unused.
    pub rescale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FarFieldUtterance {
    /// `rescale * (reverberant + noise)`.
    pub samples: Vec<f64>,
    /// Truncated convolution of the clean speech with the RIR.
    pub reverberant: Vec<f64>,
    /// `lambda` times the looped noise.
    pub noise: Vec<f64>,
    pub sample_rate: u32,
    pub meta: UtteranceMeta,
}

pub fn augment(clean: &[f64], rir: &ImpulseResponse, spec: &NoiseSpec) -> Result<FarFieldUtterance> {
    let reverberant = reverberate(clean, rir)?;
    let segment = loop_noise(&spec.noise, spec.offset_l, clean.len())?;
    let lambda = compute_lambda(&reverberant, &segment, spec.snr_db)?;
    Ok(mix(reverberant, segment, rir, spec, lambda))
}

/// Same as [`augment`] with a caller-chosen noise gain.
pub fn augment_with_lambda(clean: &[f64], rir: &ImpulseResponse, spec: &NoiseSpec, lambda: f64) -> Result<FarFieldUtterance> {
    let reverberant = reverberate(clean, rir)?;
    let segment = loop_noise(&spec.noise, spec.offset_l, clean.len())?;
    Ok(mix(reverberant, segment, rir, spec, lambda))
}

fn reverberate(clean: &[f64], rir: &ImpulseResponse) -> Result<Vec<f64>> {
    let mut y = convolve_full(clean, rir.samples())?;
    y.truncate(clean.len());
    Ok(y)
}

fn mix(reverberant: Vec<f64>, segment: Vec<f64>, rir: &ImpulseResponse, spec: &NoiseSpec, lambda: f64) -> FarFieldUtterance {
    let noise: Vec<f64> = segment.iter().map(|n| lambda * n).collect();
    let mut samples: Vec<f64> = reverberant.iter().zip(&noise).map(|(r, n)| r + n).collect();
    let p = peak(&samples);
    let rescale = if p > 1.0 { 1.0 / p } else { 1.0 };
    if rescale != 1.0 {
        log::info!("{}: mixture peak {p:.3}, rescaled by {rescale:.4}", rir.source_id());
        samples.iter_mut().for_each(|s| *s *= rescale);
    }
    FarFieldUtterance {
        samples,
        reverberant,
        noise,
        sample_rate: SAMPLE_RATE,
        meta: UtteranceMeta {
            rir_id: rir.source_id().to_string(),
            noise_id: spec.noise_id.clone(),
            offset_l: spec.offset_l,
            snr_db: spec.snr_db,
            lambda,
            rescale,
        },
    }
}

/// One line of the corpus manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub clean_path: String,
    pub rir_id: String,
    pub noise_id: String,
    pub offset_l: usize,
    pub snr_db: f64,
    pub lambda: f64,
    pub rescale: f64,
    pub out_path: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusConfig {
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            snr_min_db: DEFAULT_SNR_RANGE_DB.0,
            snr_max_db: DEFAULT_SNR_RANGE_DB.1,
            seed: 0,
        }
    }
}

/// Random choices for utterance `index`. Each utterance draws from its own
/// ChaCha stream so the result does not depend on processing order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Draw {
    pub rir: usize,
    pub noise: usize,
    pub offset_l: usize,
    pub snr_db: f64,
}

pub fn draw_for(cfg: &CorpusConfig, index: u64, n_rirs: usize, noise_lens: &[usize]) -> Draw {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let rir = rng.random_range(0..n_rirs);
    let noise = rng.random_range(0..noise_lens.len());
    let offset_l = rng.random_range(0..noise_lens[noise]);
    let snr_db = if cfg.snr_max_db > cfg.snr_min_db {
        rng.random_range(cfg.snr_min_db..cfg.snr_max_db)
    } else {
        cfg.snr_min_db
    };
    Draw {
        rir,
        noise,
        offset_l,
        snr_db,
    }
}

pub(crate) fn sorted_wavs(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .collect();
    v.sort();
    Ok(v)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn load_16k(path: &Path) -> Result<Vec<f64>> {
    let (x, sr) = load_waveform(path)?;
    Ok(resample(&x, sr, SAMPLE_RATE)?)
}

fn wavs_in(dir: &Path) -> Result<Vec<PathBuf>> {
    let v = sorted_wavs(dir).map_err(|e| AugmentError::Io(format!("{}: {e}", dir.display())))?;
    if v.is_empty() {
        return Err(AugmentError::EmptyDirectory(dir.to_path_buf()));
    }
    Ok(v)
}

/// Augments every clean utterance in `clean_dir`, writing `<stem>.wav`
/// files and a JSON-lines manifest into `out_dir`.
pub fn generate_corpus(
    clean_dir: &Path,
    rir_dir: &Path,
    noise_dir: &Path,
    out_dir: &Path,
    cfg: &CorpusConfig,
) -> Result<Vec<ManifestRecord>> {
    if !(cfg.snr_min_db.is_finite() && cfg.snr_max_db.is_finite() && cfg.snr_min_db <= cfg.snr_max_db) {
        return Err(AugmentError::InvalidSpec(format!(
            "snr range [{}, {}]",
            cfg.snr_min_db, cfg.snr_max_db
        )));
    }
    let clean = wavs_in(clean_dir)?;
    let rirs: Vec<ImpulseResponse> = wavs_in(rir_dir)?
        .iter()
        .map(|p| {
            let (x, sr) = load_waveform(p)?;
            Ok(normalize_rir(&x, sr, Domain::Synthetic, stem(p))?)
        })
        .collect::<Result<_>>()?;
    let noises: Vec<(String, Vec<f64>)> = wavs_in(noise_dir)?
        .iter()
        .map(|p| Ok((stem(p), load_16k(p)?)))
        .collect::<Result<_>>()?;
    let noise_lens: Vec<usize> = noises.iter().map(|(_, n)| n.len()).collect();
    fs::create_dir_all(out_dir).map_err(|e| AugmentError::Io(format!("{}: {e}", out_dir.display())))?;

    let records: Vec<ManifestRecord> = clean
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let d = draw_for(cfg, i as u64, rirs.len(), &noise_lens);
            let (noise_id, noise) = &noises[d.noise];
            let spec = NoiseSpec::new(noise.clone(), noise_id.clone(), d.offset_l, d.snr_db)?;
            let x = load_16k(path)?;
            let utt = augment(&x, &rirs[d.rir], &spec)?;
            let out_path = out_dir.join(format!("{}.wav", stem(path)));
            audio::write_waveform(&out_path, &utt.samples, SAMPLE_RATE)?;
            Ok(ManifestRecord {
                clean_path: path.display().to_string(),
                rir_id: utt.meta.rir_id,
                noise_id: utt.meta.noise_id,
                offset_l: utt.meta.offset_l,
                snr_db: utt.meta.snr_db,
                lambda: utt.meta.lambda,
                rescale: utt.meta.rescale,
                out_path: out_path.display().to_string(),
            })
        })
        .collect::<Result<_>>()?;

    let manifest = out_dir.join(MANIFEST_NAME);
    let io = |e: std::io::Error| AugmentError::Io(format!("{}: {e}", manifest.display()));
    let mut f = fs::File::create(&manifest).map_err(io)?;
    for r in &records {
        let line = serde_json::to_string(r).map_err(|e| AugmentError::Io(e.to_string()))?;
        writeln!(f, "{line}").map_err(io)?;
    }
    Ok(records)
}
