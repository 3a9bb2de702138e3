//! Waveform I/O, resampling, length normalization and spectral analysis.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Working sample rate of every RIR.
pub const SAMPLE_RATE: u32 = 16_000;
/// Fixed RIR length in samples (1.024 s at 16 kHz).
pub const RIR_LEN: usize = 16_384;
/// Linear magnitude floor applied before taking logs.
pub const MAG_FLOOR: f64 = 1e-10;
/// Spectrogram floor in dB.
pub const SPEC_FLOOR_DB: f64 = -120.0;

const KAISER_BETA: f64 = 8.6;
const TAPS_PER_PHASE: usize = 64;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("cannot read {path}: {reason}")]
    UnreadableFile { path: PathBuf, reason: String },
    #[error("unsupported encoding in {path}: {reason}")]
    UnsupportedEncoding { path: PathBuf, reason: String },
    #[error("no audio samples")]
    EmptyAudio,
    #[error("signal is all zeros")]
    AllZeroInput,
    #[error("signal contains NaN or infinite samples")]
    NonFinite,
    #[error("invalid sample rate {0}")]
    InvalidSampleRate(u32),
    #[error("impulse responses hold exactly {RIR_LEN} samples, got {0}")]
    InvalidLength(usize),
    #[error("fft size {0} must be a power of two >= {RIR_LEN}")]
    InvalidFftSize(usize),
    #[error("invalid windowing: window {window}, hop {hop}")]
    InvalidWindowing { window: usize, hop: usize },
    #[error("cannot write {path}: {reason}")]
    WriteFailed { path: PathBuf, reason: String },
}

pub type Result<T> = std::result::Result<T, AudioError>;

/// Where an impulse response came from, or what has been done to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Synthetic,
    Real,
    Translated,
    Equalized,
    TranslatedEqualized,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Domain::Synthetic => "synthetic",
            Domain::Real => "real",
            Domain::Translated => "translated",
            Domain::Equalized => "equalized",
            Domain::TranslatedEqualized => "translated_equalized",
        };
        f.write_str(s)
    }
}

impl FromStr for Domain {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "synthetic" => Ok(Domain::Synthetic),
            "real" => Ok(Domain::Real),
            "translated" => Ok(Domain::Translated),
            "equalized" => Ok(Domain::Equalized),
            "translated_equalized" => Ok(Domain::TranslatedEqualized),
            other => Err(format!("unknown domain `{other}`")),
        }
    }
}

/// A mono RIR of exactly [`RIR_LEN`] samples at [`SAMPLE_RATE`].
///
/// Construction checks length and finiteness. Peak normalization is the
/// job of [`normalize_rir`] and of every stage that emits an RIR, so
/// arbitrary-gain test signals can still be wrapped here.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    samples: Vec<f64>,
    domain: Domain,
    source_id: String,
}

impl ImpulseResponse {
    pub fn new(samples: Vec<f64>, domain: Domain, source_id: impl Into<String>) -> Result<Self> {
        if samples.len() != RIR_LEN {
            return Err(AudioError::InvalidLength(samples.len()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(AudioError::NonFinite);
        }
        Ok(ImpulseResponse {
            samples,
            domain,
            source_id: source_id.into(),
        })
    }

    /// Zero-pads or truncates `samples` to [`RIR_LEN`] without rescaling.
    pub fn from_prefix(samples: &[f64], domain: Domain, source_id: impl Into<String>) -> Result<Self> {
        Self::new(fit_length(samples, RIR_LEN), domain, source_id)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE
    }

    pub fn peak(&self) -> f64 {
        peak(&self.samples)
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }
}

pub(crate) fn peak(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn fit_length(x: &[f64], len: usize) -> Vec<f64> {
    let mut out = x[..x.len().min(len)].to_vec();
    out.resize(len, 0.0);
    out
}

/// Reads the first channel of a PCM (8/16/24/32-bit) or float32 WAV file
/// as linear amplitudes. Integer PCM is scaled so that full scale maps to
/// `[-1, 1)`.
pub fn load_waveform(path: &Path) -> Result<(Vec<f64>, u32)> {
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::Unsupported => AudioError::UnsupportedEncoding {
            path: path.to_path_buf(),
            reason: "not PCM or IEEE float".into(),
        },
        other => AudioError::UnreadableFile {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let unreadable = |e: hound::Error| AudioError::UnreadableFile {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(unreadable)?,
        (hound::SampleFormat::Int, bits @ 8..=32) => {
            let full_scale = (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / full_scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(unreadable)?
        }
        (fmt, bits) => {
            return Err(AudioError::UnsupportedEncoding {
                path: path.to_path_buf(),
                reason: format!("{fmt:?} with {bits} bits"),
            })
        }
    };
    let samples: Vec<f64> = interleaved.into_iter().step_by(channels).collect();
    if samples.is_empty() {
        return Err(AudioError::EmptyAudio);
    }
    Ok((samples, spec.sample_rate))
}

/// Writes mono float32 WAV.
pub fn write_waveform(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let fail = |e: hound::Error| AudioError::WriteFailed {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(fail)?;
    for &s in samples {
        w.write_sample(s as f32).map_err(fail)?;
    }
    w.finalize().map_err(fail)
}

/// Rounds every sample to the nearest `f32`, which is what a write/read
/// cycle through [`write_waveform`] does.
pub fn quantize_f32(samples: &mut [f64]) {
    for s in samples {
        *s = *s as f32 as f64;
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Rational-ratio windowed-sinc resampler (Kaiser window, beta 8.6, 64
/// taps per polyphase branch). Identity when the rates match.
pub fn resample(x: &[f64], from: u32, to: u32) -> Result<Vec<f64>> {
    if from == 0 {
        return Err(AudioError::InvalidSampleRate(from));
    }
    if to == 0 {
        return Err(AudioError::InvalidSampleRate(to));
    }
    if from == to || x.is_empty() {
        return Ok(x.to_vec());
    }
    let g = gcd(from as u64, to as u64);
    let up = (to as u64 / g) as usize;
    let down = (from as u64 / g) as usize;
    let cutoff = (up as f64 / down as f64).min(1.0);
    let half = (TAPS_PER_PHASE / 2) as isize;
    let i0_beta = bessel_i0(KAISER_BETA);

    // table[p][m] weights input sample base + m - (half - 1) for phase p
    let table: Vec<Vec<f64>> = (0..up)
        .map(|p| {
            let frac = p as f64 / up as f64;
            let mut row: Vec<f64> = (0..TAPS_PER_PHASE)
                .map(|m| {
                    let tau = frac + (half - 1) as f64 - m as f64;
                    let u = tau / half as f64;
                    let win = if u.abs() <= 1.0 {
                        bessel_i0(KAISER_BETA * (1.0 - u * u).sqrt()) / i0_beta
                    } else {
                        0.0
                    };
                    cutoff * sinc(cutoff * tau) * win
                })
                .collect();
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
            row
        })
        .collect();

    let out_len = (x.len() * up).div_ceil(down);
    let n_in = x.len() as isize;
    let out = (0..out_len)
        .map(|n| {
            let pos = n * down;
            let base = (pos / up) as isize;
            let row = &table[pos % up];
            let first = base - (half - 1);
            row.iter()
                .enumerate()
                .filter_map(|(m, &w)| {
                    let j = first + m as isize;
                    (0..n_in).contains(&j).then(|| w * x[j as usize])
                })
                .sum()
        })
        .collect();
    Ok(out)
}

/// Resamples to 16 kHz, truncates or zero-pads the tail to [`RIR_LEN`]
/// and scales so that the largest magnitude is exactly 1.
pub fn normalize_rir(
    samples: &[f64],
    sample_rate: u32,
    domain: Domain,
    source_id: impl Into<String>,
) -> Result<ImpulseResponse> {
    if samples.is_empty() {
        return Err(AudioError::EmptyAudio);
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(AudioError::NonFinite);
    }
    let resampled = resample(samples, sample_rate, SAMPLE_RATE)?;
    let mut x = fit_length(&resampled, RIR_LEN);
    peak_normalize(&mut x)?;
    ImpulseResponse::new(x, domain, source_id)
}

/// Divides by the largest magnitude. Applying it twice is exact identity
/// the second time since the peak is then exactly 1.
pub fn peak_normalize(x: &mut [f64]) -> Result<()> {
    let p = peak(x);
    if p == 0.0 {
        return Err(AudioError::AllZeroInput);
    }
    x.iter_mut().for_each(|v| *v /= p);
    Ok(())
}

/// Linear FFT magnitudes `|X[k]|` for `k` in `0..=fft_size/2` of `x`
/// zero-padded (or truncated) to `fft_size`.
pub fn spectrum_magnitudes(x: &[f64], fft_size: usize) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .take(fft_size)
        .map(|&v| Complex::new(v, 0.0))
        .collect();
    buf.resize(fft_size, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(fft_size).process(&mut buf);
    buf[..=fft_size / 2].iter().map(|c| c.norm()).collect()
}

pub(crate) fn magnitude_db(x: &[f64], fft_size: usize) -> Vec<f64> {
    spectrum_magnitudes(x, fft_size)
        .into_iter()
        .map(|m| 20.0 * m.max(MAG_FLOOR).log10())
        .collect()
}

/// Per-bin gain in dB for bins `0..=fft_size/2`.
pub fn magnitude_response(rir: &ImpulseResponse, fft_size: usize) -> Result<Vec<f64>> {
    if fft_size < RIR_LEN || !fft_size.is_power_of_two() {
        return Err(AudioError::InvalidFftSize(fft_size));
    }
    Ok(magnitude_db(rir.samples(), fft_size))
}

/// Hann-windowed STFT magnitudes in dB.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// `magnitudes[bin][frame]`, floored at [`SPEC_FLOOR_DB`].
    pub magnitudes: Vec<Vec<f64>>,
    pub window_size: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn bins(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn frames(&self) -> usize {
        self.magnitudes.first().map_or(0, Vec::len)
    }
}

pub fn spectrogram(rir: &ImpulseResponse, window_size: usize, hop: usize) -> Result<Spectrogram> {
    if hop == 0 || hop > window_size || window_size > RIR_LEN {
        return Err(AudioError::InvalidWindowing {
            window: window_size,
            hop,
        });
    }
    let x = rir.samples();
    let frames = (RIR_LEN - window_size) / hop + 1;
    let bins = window_size / 2 + 1;
    // Hann sampled at half-sample offsets: symmetric and nonzero at both
    // ends, so a frame sees an impulse on its first sample
    let window: Vec<f64> = (0..window_size)
        .map(|n| (PI * (n as f64 + 0.5) / window_size as f64).sin().powi(2))
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(window_size);

    let mut magnitudes = vec![vec![0.0; frames]; bins];
    let mut buf = vec![Complex::new(0.0, 0.0); window_size];
    for f in 0..frames {
        let start = f * hop;
        for (n, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(x[start + n] * window[n], 0.0);
        }
        fft.process(&mut buf);
        for (k, row) in magnitudes.iter_mut().enumerate() {
            let db = 20.0 * buf[k].norm().max(MAG_FLOOR).log10();
            row[f] = db.max(SPEC_FLOOR_DB);
        }
    }
    Ok(Spectrogram {
        magnitudes,
        window_size,
        hop,
        sample_rate: SAMPLE_RATE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn delta(scale: f64) -> ImpulseResponse {
        let mut x = vec![0.0; RIR_LEN];
        x[0] = scale;
        ImpulseResponse::new(x, Domain::Synthetic, "d").unwrap()
    }

    fn peak_bin(mags: &[f64]) -> usize {
        mags.iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0
    }

    #[test]
    fn zero_pads_short_input() {
        let x: Vec<f64> = (0..8000).map(|i| ((i % 7) as f64 - 3.0) / 3.0).collect();
        let ir = normalize_rir(&x, SAMPLE_RATE, Domain::Real, "a").unwrap();
        assert_eq!(ir.samples().len(), RIR_LEN);
        assert!(ir.samples()[8000..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn truncates_long_input() {
        let x = vec![0.5; RIR_LEN + 100];
        let ir = normalize_rir(&x, SAMPLE_RATE, Domain::Real, "a").unwrap();
        assert_eq!(ir.samples().len(), RIR_LEN);
    }

    #[test]
    fn peak_is_scaled_to_one() {
        let mut x = vec![0.0; 100];
        x[3] = 0.25;
        x[9] = -0.125;
        let ir = normalize_rir(&x, SAMPLE_RATE, Domain::Real, "a").unwrap();
        assert_eq!(ir.peak(), 1.0);
        assert_eq!(ir.samples()[9], -0.5);
    }

    #[test]
    fn all_zero_input_is_an_error() {
        let r = normalize_rir(&[0.0; 10], SAMPLE_RATE, Domain::Real, "a");
        assert!(matches!(r, Err(AudioError::AllZeroInput)));
        assert!(matches!(
            normalize_rir(&[], SAMPLE_RATE, Domain::Real, "a"),
            Err(AudioError::EmptyAudio)
        ));
    }

    #[test]
    fn resampled_sine_keeps_its_frequency() {
        let x: Vec<f64> = (0..48_000)
            .map(|n| (2.0 * PI * 1000.0 * n as f64 / 48_000.0).sin())
            .collect();
        let ir = normalize_rir(&x, 48_000, Domain::Real, "s").unwrap();
        let mags = spectrum_magnitudes(ir.samples(), RIR_LEN);
        let expected = 1000.0 * RIR_LEN as f64 / SAMPLE_RATE as f64;
        assert!((peak_bin(&mags) as f64 - expected).abs() <= 1.0);
    }

    #[test]
    fn upsampling_keeps_sine_frequency() {
        let x: Vec<f64> = (0..8_000)
            .map(|n| (2.0 * PI * 500.0 * n as f64 / 8_000.0).sin())
            .collect();
        let y = resample(&x, 8_000, 16_000).unwrap();
        assert_eq!(y.len(), 16_000);
        // interior samples match the analytic sine closely
        for n in 1000..1100 {
            let want = (2.0 * PI * 500.0 * n as f64 / 16_000.0).sin();
            assert!((y[n] - want).abs() < 1e-3, "{n}: {} vs {want}", y[n]);
        }
    }

    #[test]
    fn delta_has_flat_zero_db_response() {
        let r = magnitude_response(&delta(1.0), 16_384).unwrap();
        assert_eq!(r.len(), 8193);
        assert!(r.iter().all(|&v| v.abs() < 1e-12));
        let r2 = magnitude_response(&delta(2.0), 32_768).unwrap();
        assert!(r2.iter().all(|&v| (v - 6.020599913279624).abs() < 1e-9));
    }

    #[test]
    fn fft_size_is_validated() {
        assert!(matches!(
            magnitude_response(&delta(1.0), 8192),
            Err(AudioError::InvalidFftSize(8192))
        ));
        assert!(magnitude_response(&delta(1.0), 20_000).is_err());
    }

    #[test]
    fn sine_peaks_at_its_bin() {
        let x: Vec<f64> = (0..RIR_LEN)
            .map(|n| {
                let w = 0.5 - 0.5 * (2.0 * PI * n as f64 / RIR_LEN as f64).cos();
                w * (2.0 * PI * 1000.0 * n as f64 / 16_000.0).sin()
            })
            .collect();
        let ir = ImpulseResponse::new(x, Domain::Real, "s").unwrap();
        let r = magnitude_response(&ir, 16_384).unwrap();
        assert!((peak_bin(&r) as f64 - 1024.0).abs() <= 1.0);
    }

    #[test]
    fn spectrogram_of_silence_is_floor() {
        let ir = ImpulseResponse::new(vec![0.0; RIR_LEN], Domain::Real, "z").unwrap();
        let s = spectrogram(&ir, 512, 256).unwrap();
        assert_eq!(s.frames(), (RIR_LEN - 512) / 256 + 1);
        assert_eq!(s.bins(), 257);
        assert!(s.magnitudes.iter().flatten().all(|&v| v == SPEC_FLOOR_DB));
    }

    #[test]
    fn spectrogram_localizes_impulse() {
        for at in [0, 100] {
            let mut x = vec![0.0; RIR_LEN];
            x[at] = 1.0;
            let ir = ImpulseResponse::new(x, Domain::Real, "d").unwrap();
            let s = spectrogram(&ir, 512, 256).unwrap();
            for row in &s.magnitudes {
                assert!(row[0] > SPEC_FLOOR_DB);
                assert!(row[1..].iter().all(|&v| v == SPEC_FLOOR_DB));
            }
        }
    }

    #[test]
    fn stationary_sine_has_constant_peak_bin() {
        let x: Vec<f64> = (0..RIR_LEN)
            .map(|n| 0.5 * (2.0 * PI * 1000.0 * n as f64 / 16_000.0).sin())
            .collect();
        let ir = ImpulseResponse::new(x, Domain::Real, "s").unwrap();
        let s = spectrogram(&ir, 512, 128).unwrap();
        for f in 0..s.frames() {
            let col: Vec<f64> = s.magnitudes.iter().map(|r| r[f]).collect();
            assert_eq!(peak_bin(&col), 32); // 1000 Hz * 512 / 16000
        }
    }

    #[test]
    fn bad_windowing_rejected() {
        let ir = delta(1.0);
        assert!(spectrogram(&ir, 512, 0).is_err());
        assert!(spectrogram(&ir, 256, 512).is_err());
        assert!(spectrogram(&ir, RIR_LEN + 1, 1).is_err());
    }

    #[test]
    fn wav_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        let x = vec![0.25, -0.5, 0.125, 1.0 / 3.0];
        write_waveform(&p, &x, SAMPLE_RATE).unwrap();
        let (y, sr) = load_waveform(&p).unwrap();
        assert_eq!(sr, SAMPLE_RATE);
        let mut q = x.clone();
        quantize_f32(&mut q);
        assert_eq!(y, q);
    }

    #[test]
    fn pcm16_full_scale_mapping() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        for v in [0i16, 32767, -32768] {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
        let (y, _) = load_waveform(&p).unwrap();
        assert_eq!(y, vec![0.0, 32767.0 / 32768.0, -1.0]);
    }

    #[test]
    fn stereo_returns_first_channel() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16_000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        for i in 0..5 {
            w.write_sample(i as f32 * 0.1).unwrap();
            w.write_sample(-0.9f32).unwrap();
        }
        w.finalize().unwrap();
        let (y, _) = load_waveform(&p).unwrap();
        let want: Vec<f64> = (0..5).map(|i| (i as f32 * 0.1) as f64).collect();
        assert_eq!(y, want);
    }

    #[test]
    fn load_errors() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.wav");
        assert!(matches!(
            load_waveform(&missing),
            Err(AudioError::UnreadableFile { .. })
        ));
        let junk = dir.path().join("junk.wav");
        std::fs::write(&junk, b"definitely not RIFF").unwrap();
        assert!(load_waveform(&junk).is_err());
        let empty = dir.path().join("empty.wav");
        write_waveform(&empty, &[], SAMPLE_RATE).unwrap();
        assert!(matches!(load_waveform(&empty), Err(AudioError::EmptyAudio)));
    }
}
