use serde::{Deserialize, Serialize};

use super::{EqError, Result};
use crate::audio::{magnitude_db, peak, ImpulseResponse, SAMPLE_RATE};

/// Band centers of a [`RelativeGainVector`], in order.
pub const BAND_CENTERS_HZ: [f64; 7] = [62.5, 125.0, 250.0, 500.0, 2000.0, 4000.0, 8000.0];
/// Every gain is relative to the band around this frequency.
pub const REFERENCE_HZ: f64 = 1000.0;
pub const N_BANDS: usize = 7;
/// FFT length used to measure band gains.
pub const GAIN_FFT_SIZE: usize = 32_768;

/// Per-band gains in dB relative to the 1 kHz band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelativeGainVector {
    pub gains_db: [f64; N_BANDS],
}

impl RelativeGainVector {
    pub fn new(gains_db: [f64; N_BANDS]) -> Result<Self> {
        if gains_db.iter().any(|g| !g.is_finite()) {
            return Err(EqError::NonFinite);
        }
        Ok(RelativeGainVector { gains_db })
    }

    pub fn zeros() -> Self {
        RelativeGainVector { gains_db: [0.0; N_BANDS] }
    }

    pub fn sub(&self, other: &RelativeGainVector) -> RelativeGainVector {
        let mut g = self.gains_db;
        g.iter_mut().zip(other.gains_db).for_each(|(a, b)| *a -= b);
        RelativeGainVector { gains_db: g }
    }

    pub fn max_abs_diff(&self, other: &RelativeGainVector) -> f64 {
        self.gains_db
            .iter()
            .zip(other.gains_db)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Mean dB gain of the bins inside the 1/3-octave band around `center`,
/// capped at Nyquist.
fn band_average(db: &[f64], fft_size: usize, center: f64) -> f64 {
    let fs = SAMPLE_RATE as f64;
    let nyquist = fs / 2.0;
    let lo = center * 2f64.powf(-1.0 / 6.0);
    let hi = (center * 2f64.powf(1.0 / 6.0)).min(nyquist);
    let bin_hz = fs / fft_size as f64;
    let k_lo = (lo / bin_hz).ceil() as usize;
    let k_hi = ((hi / bin_hz).floor() as usize).min(db.len() - 1);
    let band = &db[k_lo..=k_hi];
    band.iter().sum::<f64>() / band.len() as f64
}

/// Relative band gains of an arbitrary-length signal (at most
/// [`GAIN_FFT_SIZE`] samples are used).
pub fn relative_gains_of(x: &[f64]) -> Result<RelativeGainVector> {
    if x.iter().all(|&v| v == 0.0) {
        return Err(EqError::ZeroEnergy);
    }
    // peak normalization first makes power-of-two rescaling bit-exact
    let p = peak(x);
    let x: Vec<f64> = x.iter().map(|v| v / p).collect();
    let db = magnitude_db(&x, GAIN_FFT_SIZE);
    let reference = band_average(&db, GAIN_FFT_SIZE, REFERENCE_HZ);
    let mut gains_db = [0.0; N_BANDS];
    for (g, &c) in gains_db.iter_mut().zip(&BAND_CENTERS_HZ) {
        *g = band_average(&db, GAIN_FFT_SIZE, c) - reference;
    }
    RelativeGainVector::new(gains_db)
}

pub fn relative_gains(rir: &ImpulseResponse) -> Result<RelativeGainVector> {
    relative_gains_of(rir.samples())
}
