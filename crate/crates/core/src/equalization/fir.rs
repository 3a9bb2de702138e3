use rustfft::{num_complex::Complex, FftPlanner};

use super::gains::{relative_gains_of, RelativeGainVector, BAND_CENTERS_HZ, N_BANDS, REFERENCE_HZ};
use super::{EqError, Result};
use crate::audio::SAMPLE_RATE;

pub const DEFAULT_TAPS: usize = 1023;
pub const MIN_TAPS: usize = 127;
/// Dense grid on which the target magnitude is sampled before the inverse DFT.
const DESIGN_GRID: usize = 16_384;
const MAX_REFINEMENTS: usize = 30;
const REFINE_TOL_DB: f64 = 0.02;

/// Linear-phase (type I) FIR correction filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    pub taps: Vec<f64>,
    /// Per-band corrections the filter was requested to realize.
    pub design_grid: RelativeGainVector,
}

impl FirFilter {
    pub fn delay(&self) -> usize {
        (self.taps.len() - 1) / 2
    }
}

/// Monotone cubic (Fritsch-Carlson) interpolant on uniformly spaced knots,
/// clamped flat outside them.
struct Pchip {
    x0: f64,
    step: f64,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl Pchip {
    fn new(x0: f64, step: f64, y: Vec<f64>) -> Self {
        let n = y.len();
        let d: Vec<f64> = y.windows(2).map(|w| (w[1] - w[0]) / step).collect();
        let mut m = vec![0.0; n];
        for k in 1..n - 1 {
            if d[k - 1] * d[k] > 0.0 {
                m[k] = 2.0 / (1.0 / d[k - 1] + 1.0 / d[k]);
            }
        }
        // end slopes stay 0 so the flat extension joins smoothly
        Pchip { x0, step, y, m }
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.y.len();
        let t = (x - self.x0) / self.step;
        if t <= 0.0 {
            return self.y[0];
        }
        if t >= (n - 1) as f64 {
            return self.y[n - 1];
        }
        let k = t.floor() as usize;
        let s = t - k as f64;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[k] + h10 * self.step * self.m[k] + h01 * self.y[k + 1] + h11 * self.step * self.m[k + 1]
    }
}

/// Anchors in log2-frequency order: the 7 bands with 0 dB spliced in at 1 kHz.
fn anchor_curve(bands_db: &[f64; N_BANDS]) -> Pchip {
    let mut y = Vec::with_capacity(N_BANDS + 1);
    y.extend_from_slice(&bands_db[..4]);
    y.push(0.0);
    y.extend_from_slice(&bands_db[4..]);
    debug_assert_eq!(BAND_CENTERS_HZ[4] / REFERENCE_HZ, 2.0);
    Pchip::new(BAND_CENTERS_HZ[0].log2(), 1.0, y)
}

fn hamming(n: usize, len: usize) -> f64 {
    0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (len - 1) as f64).cos()
}

/// One pass of the window method for the given anchor gains.
fn window_design(bands_db: &[f64; N_BANDS], num_taps: usize) -> Vec<f64> {
    let curve = anchor_curve(bands_db);
    let fs = SAMPLE_RATE as f64;
    let n = DESIGN_GRID;
    let mut spec = vec![Complex::new(0.0, 0.0); n];
    for k in 0..=n / 2 {
        let f = k as f64 * fs / n as f64;
        // DC has no log-frequency; it takes the lowest anchor like all of 0..62.5 Hz
        let db = if k == 0 { curve.y[0] } else { curve.eval(f.log2()) };
        let mag = 10f64.powf(db / 20.0);
        spec[k] = Complex::new(mag, 0.0);
        if k > 0 && k < n / 2 {
            spec[n - k] = Complex::new(mag, 0.0);
        }
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut spec);
    let half = (num_taps - 1) / 2;
    (0..num_taps)
        .map(|i| {
            let lag = (i + n - half) % n;
            spec[lag].re / n as f64 * hamming(i, num_taps)
        })
        .collect()
}

/// Designs a linear-phase FIR whose 7-band relative gains match
/// `correction`. The anchor gains are refined against the measured response
/// so that window smearing does not bias the band averages.
pub fn design_fir(correction: &RelativeGainVector, num_taps: usize) -> Result<FirFilter> {
    if num_taps < MIN_TAPS || num_taps % 2 == 0 {
        return Err(EqError::InvalidTapCount(num_taps));
    }
    if correction.gains_db.iter().any(|g| !g.is_finite()) {
        return Err(EqError::NonFinite);
    }
    let target = correction.gains_db;
    let mut anchors = target;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..MAX_REFINEMENTS {
        let taps = window_design(&anchors, num_taps);
        let measured = relative_gains_of(&taps)?.gains_db;
        let err = (0..N_BANDS).fold(0.0f64, |m, b| m.max((target[b] - measured[b]).abs()));
        if best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, taps));
        }
        if err < REFINE_TOL_DB {
            break;
        }
        for b in 0..N_BANDS {
            anchors[b] += target[b] - measured[b];
        }
    }
    let (_, taps) = best.expect("at least one design pass");
    Ok(FirFilter {
        taps,
        design_grid: *correction,
    })
}
