#![allow(dead_code)]

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rir_core::audio::{write_waveform, Domain, ImpulseResponse, RIR_LEN, SAMPLE_RATE};
use rir_core::equalization::{GmmComponent, GmmModel, N_BANDS};
use rir_core::tsrirgan::{
    BatchSampler, Checkpoint, DiscriminatorConfig, GeneratorConfig, TrainState, TrainingConfig,
};

/// `ln(10^3)`: amplitude envelope `exp(-LN1000 t / t60)` gives a 60 dB
/// energy drop after `t60` seconds.
pub const LN1000: f64 = 6.907755278982137;

pub fn ir(x: Vec<f64>, domain: Domain, id: &str) -> ImpulseResponse {
    ImpulseResponse::new(x, domain, id).unwrap()
}

pub fn delta(at: usize) -> Vec<f64> {
    let mut x = vec![0.0; RIR_LEN];
    x[at] = 1.0;
    x
}

/// Deterministic exponential decay `exp(-LN1000 n / (fs t60))`.
pub fn exponential(t60: f64) -> Vec<f64> {
    let fs = SAMPLE_RATE as f64;
    (0..RIR_LEN).map(|n| (-LN1000 * n as f64 / fs / t60).exp()).collect()
}

/// Exponentially decaying white noise after a unit direct impulse at
/// `delay`; peak normalized.
pub fn noisy_rir(t60: f64, seed: u64, delay: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = SAMPLE_RATE as f64;
    let mut x = vec![0.0; RIR_LEN];
    for (n, v) in x.iter_mut().enumerate().skip(delay + 1) {
        let t = (n - delay) as f64 / fs;
        *v = 0.5 * rng.random_range(-1.0..1.0) * (-LN1000 * t / t60).exp();
    }
    x[delay] = 1.0;
    x
}

pub fn random_signal(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn write_dir(dir: &Path, items: &[(&str, &[f64])]) {
    std::fs::create_dir_all(dir).unwrap();
    for (name, x) in items {
        write_waveform(&dir.join(format!("{name}.wav")), x, SAMPLE_RATE).unwrap();
    }
}

/// A single-component mixture with diagonal covariance `var`.
pub fn one_component(mean: [f64; N_BANDS], var: f64) -> GmmModel {
    let mut covariance = [[0.0; N_BANDS]; N_BANDS];
    for (i, row) in covariance.iter_mut().enumerate() {
        row[i] = var;
    }
    GmmModel {
        components: vec![GmmComponent {
            weight: 1.0,
            mean,
            covariance,
        }],
        fitted_on: 0,
    }
}

pub fn tiny_generator(len: usize) -> GeneratorConfig {
    GeneratorConfig {
        base_channels: 1,
        encoder_downsamples: 4,
        n_residual_blocks: 1,
        signal_len: len,
        ..GeneratorConfig::default()
    }
}

pub fn tiny_discriminator(len: usize) -> DiscriminatorConfig {
    DiscriminatorConfig {
        base_channels: 2,
        signal_len: len,
        ..DiscriminatorConfig::default()
    }
}

/// Freshly initialized (untrained) full-length model, wide enough that
/// its output still depends on the input.
pub fn untrained_checkpoint(seed: u64) -> Checkpoint {
    let training = TrainingConfig {
        seed,
        ..TrainingConfig::default()
    };
    let g = GeneratorConfig {
        base_channels: 4,
        ..tiny_generator(RIR_LEN)
    };
    let state = TrainState::<f32>::new(g, tiny_discriminator(RIR_LEN), &training).unwrap();
    Checkpoint::capture(&state, &training, &BatchSampler::new(seed, 1, 1))
}
