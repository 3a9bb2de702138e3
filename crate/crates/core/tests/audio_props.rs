mod common;

use common::ir;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rir_core::audio::{
    load_waveform, magnitude_response, normalize_rir, spectrogram, spectrum_magnitudes, write_waveform, Domain,
    RIR_LEN, SAMPLE_RATE,
};

fn signal(seed: u64, len: usize) -> Vec<f64> {
    common::random_signal(&mut ChaCha8Rng::seed_from_u64(seed), len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn normalize_is_idempotent(seed in any::<u64>(), len in 1usize..20_000, sr in prop::sample::select(vec![8000u32, 16000, 22050, 44100, 48000])) {
        let x = signal(seed, len);
        let once = normalize_rir(&x, sr, Domain::Real, "x").unwrap();
        let twice = normalize_rir(once.samples(), SAMPLE_RATE, Domain::Real, "x").unwrap();
        prop_assert_eq!(once.samples(), twice.samples());
        prop_assert_eq!(once.peak(), 1.0);
    }

    #[test]
    fn magnitude_scales_by_gain_in_db(seed in any::<u64>(), k in 1e-3f64..1e3) {
        let x = signal(seed, RIR_LEN);
        let scaled: Vec<f64> = x.iter().map(|v| v * k).collect();
        let a = magnitude_response(&ir(x, Domain::Synthetic, "a"), RIR_LEN).unwrap();
        let b = magnitude_response(&ir(scaled, Domain::Synthetic, "b"), RIR_LEN).unwrap();
        let g = 20.0 * k.log10();
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((v - u - g).abs() < 1e-9, "{} vs {}", v - u, g);
        }
    }

    #[test]
    fn parseval(seed in any::<u64>(), log_n in 4u32..13) {
        let n = 1usize << log_n;
        let x = signal(seed, n);
        let mags = spectrum_magnitudes(&x, n);
        prop_assert_eq!(mags.len(), n / 2 + 1);
        let interior: f64 = mags[1..n / 2].iter().map(|m| m * m).sum();
        let freq = (mags[0] * mags[0] + mags[n / 2] * mags[n / 2] + 2.0 * interior) / n as f64;
        let time: f64 = x.iter().map(|v| v * v).sum();
        prop_assert!(((freq - time) / time).abs() < 1e-9);
    }

    #[test]
    fn float_wav_round_trip_is_exact(seed in any::<u64>(), len in 1usize..4000) {
        let x: Vec<f64> = signal(seed, len).iter().map(|&v| v as f32 as f64).collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        write_waveform(&p, &x, 22050).unwrap();
        let (y, sr) = load_waveform(&p).unwrap();
        prop_assert_eq!(sr, 22050);
        prop_assert_eq!(y, x);
    }

    #[test]
    fn spectrogram_dimensions(window_pow in 5u32..11, hop_div in 1usize..5) {
        let window = 1usize << window_pow;
        let hop = (window / hop_div).max(1);
        let s = spectrogram(&ir(common::delta(0), Domain::Synthetic, "d"), window, hop).unwrap();
        prop_assert_eq!(s.bins(), window / 2 + 1);
        prop_assert_eq!(s.frames(), (RIR_LEN - window) / hop + 1);
    }
}

#[test]
fn pcm16_round_trip_within_one_lsb() {
    let x = signal(7, 3000);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("pcm.wav");
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(&p, spec).unwrap();
    for v in &x {
        w.write_sample((v * 32767.0).round() as i16).unwrap();
    }
    w.finalize().unwrap();
    let (y, _) = load_waveform(&p).unwrap();
    for (a, b) in x.iter().zip(&y) {
        assert!((a - b).abs() <= 1.0 / 32768.0 + 1e-12 + a.abs() / 32768.0);
    }
}
