//! Reverberation time, early decay time, direct-to-reverberant ratio and
//! early-to-late index of an RIR.
//!
//! T60 and EDT come from least-squares line fits to the Schroeder
//! backward-integrated energy decay curve (T30 range −5..−35 dB for T60,
//! 0..−10 dB for EDT). DRR and CTE are energy ratios measured from the
//! largest-magnitude sample, which is taken as the direct-path onset.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::ImpulseResponse;

/// Floor of the decay curve, reached once all remaining energy is zero.
pub const EDC_FLOOR_DB: f64 = -300.0;
/// DRR and CTE are clamped to ±this many dB.
pub const RATIO_CLAMP_DB: f64 = 60.0;
/// Half-width of the direct-path window.
pub const DIRECT_HALF_WINDOW_S: f64 = 0.0025;
/// Early/late split time for CTE.
pub const EARLY_S: f64 = 0.050;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcousticsError {
    #[error("impulse response has zero energy")]
    ZeroEnergy,
    #[error("decay curve never reaches {needed_db} dB")]
    InsufficientDecay { needed_db: f64 },
}

pub type Result<T> = std::result::Result<T, AcousticsError>;

/// Schroeder energy decay curve in dB, `edc_db[0] == 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayCurve {
    pub edc_db: Vec<f64>,
    pub sample_rate: u32,
}

impl DecayCurve {
    /// Wraps an arbitrary curve (for instance a measured one). Values are
    /// shifted so that the first is 0 dB.
    pub fn from_db(mut edc_db: Vec<f64>, sample_rate: u32) -> Self {
        if let Some(&first) = edc_db.first() {
            edc_db.iter_mut().for_each(|v| *v -= first);
        }
        DecayCurve { edc_db, sample_rate }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcousticParams {
    /// Seconds; `None` when the decay never reaches −35 dB.
    pub t60: Option<f64>,
    pub drr: f64,
    /// Seconds; `None` when the decay never reaches −10 dB.
    pub edt: Option<f64>,
    pub cte: f64,
}

pub fn schroeder_curve(rir: &ImpulseResponse) -> Result<DecayCurve> {
    schroeder_of(rir.samples(), rir.sample_rate())
}

pub(crate) fn schroeder_of(x: &[f64], sample_rate: u32) -> Result<DecayCurve> {
    let mut tail = vec![0.0; x.len()];
    let mut acc = 0.0;
    for (t, v) in tail.iter_mut().zip(x).rev() {
        acc += v * v;
        *t = acc;
    }
    let total = acc;
    if total == 0.0 {
        return Err(AcousticsError::ZeroEnergy);
    }
    let mut edc_db: Vec<f64> = tail
        .iter()
        .map(|&e| {
            if e > 0.0 {
                (10.0 * (e / total).log10()).max(EDC_FLOOR_DB)
            } else {
                EDC_FLOOR_DB
            }
        })
        .collect();
    edc_db[0] = 0.0;
    Ok(DecayCurve {
        edc_db,
        sample_rate,
    })
}

/// Least-squares slope (dB per second) over the first stretch of the curve
/// with `start_db >= edc >= end_db`.
fn fit_slope(curve: &DecayCurve, start_db: f64, end_db: f64) -> Result<f64> {
    let edc = &curve.edc_db;
    let reaches = edc.iter().any(|&v| v <= end_db);
    if !reaches {
        return Err(AcousticsError::InsufficientDecay { needed_db: end_db });
    }
    let first = edc.iter().position(|&v| v <= start_db).unwrap_or(0);
    let last = edc.iter().position(|&v| v < end_db).unwrap_or(edc.len());
    let fs = curve.sample_rate as f64;
    let pts: Vec<(f64, f64)> = (first..last).map(|n| (n as f64 / fs, edc[n])).collect();
    if pts.len() < 2 {
        return Err(AcousticsError::InsufficientDecay { needed_db: end_db });
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let md = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - md)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(AcousticsError::InsufficientDecay { needed_db: end_db });
    }
    Ok(slope)
}

/// T30-based reverberation time: fit −5..−35 dB and extrapolate to 60 dB.
pub fn estimate_t60(curve: &DecayCurve) -> Result<f64> {
    let slope = fit_slope(curve, -5.0, -35.0)?;
    Ok(2.0 * (-30.0 / slope))
}

/// Early decay time: fit 0..−10 dB, six times the time to fall 10 dB.
pub fn estimate_edt(curve: &DecayCurve) -> Result<f64> {
    let slope = fit_slope(curve, 0.0, -10.0)?;
    Ok(6.0 * (-10.0 / slope))
}

fn ratio_db(num: f64, den: f64) -> f64 {
    let db = if den == 0.0 {
        RATIO_CLAMP_DB
    } else if num == 0.0 {
        -RATIO_CLAMP_DB
    } else {
        10.0 * (num / den).log10()
    };
    db.clamp(-RATIO_CLAMP_DB, RATIO_CLAMP_DB)
}

fn onset(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if v.abs() > x[best].abs() {
            best = i;
        }
    }
    best
}

fn nonzero(x: &[f64]) -> Result<()> {
    if x.iter().all(|&v| v == 0.0) {
        return Err(AcousticsError::ZeroEnergy);
    }
    Ok(())
}

pub fn estimate_drr(rir: &ImpulseResponse) -> Result<f64> {
    drr_of(rir.samples(), rir.sample_rate())
}

pub(crate) fn drr_of(x: &[f64], sample_rate: u32) -> Result<f64> {
    nonzero(x)?;
    let peak = onset(x);
    let half = (DIRECT_HALF_WINDOW_S * sample_rate as f64).round() as usize;
    let lo = peak.saturating_sub(half);
    let hi = (peak + half + 1).min(x.len());
    let mut direct = 0.0;
    let mut rest = 0.0;
    for (i, v) in x.iter().enumerate() {
        if (lo..hi).contains(&i) {
            direct += v * v;
        } else {
            rest += v * v;
        }
    }
    Ok(ratio_db(direct, rest))
}

/// Early-to-late index. Time runs from the direct-path peak; samples
/// before the peak are not counted.
pub fn estimate_cte(rir: &ImpulseResponse) -> Result<f64> {
    cte_of(rir.samples(), rir.sample_rate())
}

pub(crate) fn cte_of(x: &[f64], sample_rate: u32) -> Result<f64> {
    nonzero(x)?;
    let start = onset(x);
    let split = (start + (EARLY_S * sample_rate as f64).round() as usize).min(x.len());
    let early: f64 = x[start..split].iter().map(|v| v * v).sum();
    let late: f64 = x[split..].iter().map(|v| v * v).sum();
    Ok(ratio_db(early, late))
}

pub fn acoustic_params(rir: &ImpulseResponse) -> Result<AcousticParams> {
    let curve = schroeder_curve(rir)?;
    Ok(AcousticParams {
        t60: estimate_t60(&curve).ok(),
        drr: estimate_drr(rir)?,
        edt: estimate_edt(&curve).ok(),
        cte: estimate_cte(rir)?,
    })
}

/// Arithmetic mean of each parameter over a corpus. Missing T60/EDT
/// entries are left out of their own mean.
pub fn corpus_mean(params: &[AcousticParams]) -> Option<AcousticParams> {
    if params.is_empty() {
        return None;
    }
    let mean_opt = |f: &dyn Fn(&AcousticParams) -> Option<f64>| {
        let vals: Vec<f64> = params.iter().filter_map(f).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    let n = params.len() as f64;
    Some(AcousticParams {
        t60: mean_opt(&|p| p.t60),
        drr: params.iter().map(|p| p.drr).sum::<f64>() / n,
        edt: mean_opt(&|p| p.edt),
        cte: params.iter().map(|p| p.cte).sum::<f64>() / n,
    })
}
