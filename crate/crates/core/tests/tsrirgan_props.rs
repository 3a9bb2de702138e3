mod common;

use common::{ir, noisy_rir, tiny_discriminator, tiny_generator};
use proptest::prelude::*;
use rir_core::audio::{Domain, ImpulseResponse, RIR_LEN};
use rir_core::tsrirgan::{
    discriminator_phase, full_objective, generator_phase, load_checkpoint, save_checkpoint, train_step, translate,
    Fakes, GanError, Generator, GeneratorNet, TrainState, Trainer, TrainingConfig, TsRirGan,
};
use rir_neural::{Parameter, Tensor};

/// Phase-level tests use the first `LEN` samples; the trainer needs full RIRs.
const LEN: usize = 256;

fn pool(t60: f64, n: usize, seed: u64) -> Vec<ImpulseResponse> {
    (0..n)
        .map(|i| {
            let x = noisy_rir(t60, seed + i as u64, 3 * i);
            ImpulseResponse::new(x, Domain::Synthetic, format!("p{i}")).unwrap()
        })
        .collect()
}

fn batch(rirs: &[ImpulseResponse]) -> Tensor<f32> {
    let data: Vec<f32> = rirs.iter().flat_map(|r| r.samples()[..LEN].iter().map(|&v| v as f32)).collect();
    Tensor::new(vec![rirs.len(), 1, LEN], data).unwrap()
}

fn snapshot(params: &[Parameter<f32>]) -> Vec<Vec<f32>> {
    params.iter().map(|p| p.tensor.to_vec()).collect()
}

fn config(lr: f64) -> TrainingConfig {
    TrainingConfig {
        learning_rate: lr,
        seed: 3,
        batch_size: 2,
        ..TrainingConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn generator_keeps_shape(batch in 1usize..4, seed in any::<u64>()) {
        let gan = TsRirGan::<f32>::new(tiny_generator(LEN), tiny_discriminator(LEN), seed).unwrap();
        let x = Tensor::new(vec![batch, 1, LEN], vec![0.1f32; batch * LEN]).unwrap();
        for g in [&gan.g_sr, &gan.g_rs] {
            let y = g.forward(&x).unwrap();
            prop_assert_eq!(y.shape(), &[batch, 1, LEN]);
        }
    }
}

#[test]
fn phases_touch_only_their_own_networks() {
    let cfg = config(1e-2);
    let mut state = TrainState::<f32>::new(tiny_generator(LEN), tiny_discriminator(LEN), &cfg).unwrap();
    let (s, r) = (batch(&pool(0.3, 2, 0)), batch(&pool(0.8, 2, 10)));
    for _ in 0..2 {
        let g0 = snapshot(&state.gan.generator_parameters());
        let d0 = snapshot(&state.gan.discriminator_parameters());
        let fakes = Fakes::new(&state.gan, &s, &r).unwrap();
        discriminator_phase(&mut state, &s, &r, &fakes).unwrap();
        assert_eq!(snapshot(&state.gan.generator_parameters()), g0);
        let d1 = snapshot(&state.gan.discriminator_parameters());
        assert_ne!(d1, d0);
        generator_phase(&mut state, &s, &r, &fakes, &cfg).unwrap();
        assert_eq!(snapshot(&state.gan.discriminator_parameters()), d1);
        assert_ne!(snapshot(&state.gan.generator_parameters()), g0);
    }
}

#[test]
fn zero_learning_rate_freezes_parameters() {
    let cfg = config(0.0);
    let mut state = TrainState::<f32>::new(tiny_generator(LEN), tiny_discriminator(LEN), &cfg).unwrap();
    let before = snapshot(&state.gan.parameters());
    let (s, r) = (batch(&pool(0.3, 2, 0)), batch(&pool(0.8, 2, 10)));
    let m1 = train_step(&mut state, &s, &r, &cfg).unwrap();
    let m2 = train_step(&mut state, &s, &r, &cfg).unwrap();
    assert_eq!(snapshot(&state.gan.parameters()), before);
    assert_eq!(m1, m2);
    assert_eq!(state.step, 2);
}

#[test]
fn adversarial_terms_ignore_loss_weights() {
    let gan = TsRirGan::<f64>::new(tiny_generator(LEN), tiny_discriminator(LEN), 1).unwrap();
    let to64 = |t: Tensor<f32>| Tensor::new(t.shape().to_vec(), t.values().iter().map(|&v| v as f64).collect()).unwrap();
    let (s, r) = (to64(batch(&pool(0.3, 2, 0))), to64(batch(&pool(0.8, 2, 10))));
    let a = full_objective(&s, &r, &gan.models(), 10.0, 5.0).unwrap().metrics();
    let b = full_objective(&s, &r, &gan.models(), 0.5, 123.0).unwrap().metrics();
    assert_eq!((a.adv_sr, a.adv_rs, a.cyc, a.id), (b.adv_sr, b.adv_rs, b.cyc, b.id));
    assert!((a.total - (a.adv_sr + a.adv_rs + 10.0 * a.cyc + 5.0 * a.id)).abs() < 1e-9);
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let (syn, real) = (pool(0.3, 3, 0), pool(0.8, 3, 10));
    let cfg = config(1e-3);
    let (g, d) = (tiny_generator(RIR_LEN), tiny_discriminator(RIR_LEN));
    let mut straight = Trainer::<f32>::new(g, d, cfg, &syn, &real).unwrap();
    let full = straight.run(5, None).unwrap();

    let mut first = Trainer::<f32>::new(g, d, cfg, &syn, &real).unwrap();
    let head = first.run(3, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&first.checkpoint(), &path).unwrap();
    let mut resumed = Trainer::<f32>::from_checkpoint(&load_checkpoint(&path).unwrap(), &syn, &real).unwrap();
    let tail = resumed.run(2, None).unwrap();

    assert_eq!([head, tail].concat(), full);
    assert_eq!(snapshot(&resumed.state.gan.parameters()), snapshot(&straight.state.gan.parameters()));
    assert_eq!(resumed.state.step, 5);
}

#[test]
fn non_finite_input_is_reported_as_nan_loss() {
    let cfg = config(1e-3);
    let mut state = TrainState::<f32>::new(tiny_generator(LEN), tiny_discriminator(LEN), &cfg).unwrap();
    let s = Tensor::new(vec![1, 1, LEN], vec![f32::NAN; LEN]).unwrap();
    let r = batch(&pool(0.8, 1, 10));
    assert!(matches!(train_step(&mut state, &s, &r, &cfg), Err(GanError::NaNLoss { .. })));
}

#[test]
fn translation_is_deterministic_and_normalized() {
    let ckpt = common::untrained_checkpoint(5);
    let x = ir(noisy_rir(0.4, 1, 20), Domain::Synthetic, "syn");
    let a = translate(&x, &ckpt).unwrap();
    let b = translate(&x, &ckpt).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.samples().len(), RIR_LEN);
    assert_eq!(a.peak(), 1.0);
    assert_eq!(a.domain(), Domain::Translated);
    assert_eq!(a.source_id(), "syn");
    let g: Generator<f32> = ckpt.generator_sr().unwrap();
    assert_eq!(g.config().signal_len, RIR_LEN);
    let eq = translate(&x.clone().with_domain(Domain::Equalized), &ckpt).unwrap();
    assert_eq!(eq.domain(), Domain::TranslatedEqualized);
    assert_eq!(eq.samples(), a.samples());
}
