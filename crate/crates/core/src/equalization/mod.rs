//! Sub-band room equalization: 7-band relative gains, a Gaussian mixture
//! over them, and window-method FIR matching.

mod fir;
mod gains;
mod gmm;

pub use fir::{design_fir, FirFilter, DEFAULT_TAPS, MIN_TAPS};
pub use gains::{
    relative_gains, relative_gains_of, RelativeGainVector, BAND_CENTERS_HZ, GAIN_FFT_SIZE, N_BANDS,
    REFERENCE_HZ,
};
pub use gmm::{
    fit_gmm, fit_gmm_traced, sample_gains, GmmComponent, GmmFit, GmmModel, DEFAULT_COMPONENTS,
    GMM_FORMAT_VERSION,
};

use crate::audio::{peak_normalize, AudioError, Domain, ImpulseResponse, RIR_LEN};
use crate::augmentation::convolve_full;

/// Largest per-band correction applied; larger requests are clipped.
pub const MAX_CORRECTION_DB: f64 = 12.0;

#[derive(Debug, thiserror::Error)]
pub enum EqError {
    #[error("signal has zero energy")]
    ZeroEnergy,
    #[error("need at least {need} gain vectors, got {got}")]
    TooFewSamples { got: usize, need: usize },
    #[error("gain vectors have zero variance in every band")]
    DegenerateData,
    #[error("invalid mixture model: {0}")]
    InvalidModel(String),
    #[error("tap count must be odd and at least 127, got {0}")]
    InvalidTapCount(usize),
    #[error("non-finite gain value")]
    NonFinite,
    #[error("model format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("malformed model document: {0}")]
    Format(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

pub type Result<T> = std::result::Result<T, EqError>;

/// Result of [`equalize_detailed`].
#[derive(Debug, Clone)]
pub struct Equalization {
    pub output: ImpulseResponse,
    /// Correction actually realized, after clipping.
    pub correction: RelativeGainVector,
    /// Indices of bands whose correction was clipped.
    pub clipped_bands: Vec<usize>,
}

pub fn equalize(rir: &ImpulseResponse, target: &RelativeGainVector, num_taps: usize) -> Result<ImpulseResponse> {
    equalize_detailed(rir, target, num_taps).map(|e| e.output)
}

/// Filters `rir` so that its band gains approach `target`.
///
/// The filtered response is truncated to the RIR length without removing
/// the filter's group delay, then peak-normalized.
pub fn equalize_detailed(rir: &ImpulseResponse, target: &RelativeGainVector, num_taps: usize) -> Result<Equalization> {
    let current = relative_gains(rir)?;
    let mut correction = target.sub(&current);
    let mut clipped_bands = Vec::new();
    for (b, c) in correction.gains_db.iter_mut().enumerate() {
        if c.abs() > MAX_CORRECTION_DB {
            log::warn!(
                "{}: band {} Hz correction {:.2} dB clipped to ±{MAX_CORRECTION_DB} dB",
                rir.source_id(),
                BAND_CENTERS_HZ[b],
                c
            );
            *c = c.clamp(-MAX_CORRECTION_DB, MAX_CORRECTION_DB);
            clipped_bands.push(b);
        }
    }
    let filter = design_fir(&correction, num_taps)?;
    let mut y = convolve_full(rir.samples(), &filter.taps).map_err(|_| EqError::ZeroEnergy)?;
    y.truncate(RIR_LEN);
    peak_normalize(&mut y).map_err(|_| EqError::ZeroEnergy)?;
    let domain = match rir.domain() {
        Domain::Translated | Domain::TranslatedEqualized => Domain::TranslatedEqualized,
        _ => Domain::Equalized,
    };
    let output = ImpulseResponse::new(y, domain, rir.source_id())?;
    Ok(Equalization {
        output,
        correction,
        clipped_bands,
    })
}
