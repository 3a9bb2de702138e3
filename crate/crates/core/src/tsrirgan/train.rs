use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rir_neural::{adam_step, AdamState, Parameter, Scalar, Tensor};
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::loss::{adversarial_loss, cycle_from, l1, LossMetrics, Models};
use super::model::{init_rng, Discriminator, DiscriminatorNet, Generator, GeneratorNet};
use super::{DiscriminatorConfig, GanError, GeneratorConfig, GeneratorLoss, Result, TrainingConfig};
use crate::audio::{peak_normalize, Domain, ImpulseResponse};

/// Both generators and both discriminators.
#[derive(Debug, Clone)]
pub struct TsRirGan<T: Scalar> {
    pub g_sr: Generator<T>,
    pub g_rs: Generator<T>,
    pub d_r: Discriminator<T>,
    pub d_s: Discriminator<T>,
}

impl<T: Scalar> TsRirGan<T> {
    /// Each network draws its initial weights from its own ChaCha stream.
    pub fn new(g: GeneratorConfig, d: DiscriminatorConfig, seed: u64) -> Result<Self> {
        if g.signal_len != d.signal_len {
            return Err(GanError::Config("generator and discriminator lengths differ".into()));
        }
        Ok(TsRirGan {
            g_sr: Generator::new("G_SR", g, &mut init_rng(seed, 0))?,
            g_rs: Generator::new("G_RS", g, &mut init_rng(seed, 1))?,
            d_r: Discriminator::new("D_R", d, &mut init_rng(seed, 2))?,
            d_s: Discriminator::new("D_S", d, &mut init_rng(seed, 3))?,
        })
    }

    pub fn generator_parameters(&self) -> Vec<Parameter<T>> {
        let mut v = self.g_sr.parameters();
        v.extend(self.g_rs.parameters());
        v
    }

    pub fn discriminator_parameters(&self) -> Vec<Parameter<T>> {
        let mut v = self.d_r.parameters();
        v.extend(self.d_s.parameters());
        v
    }

    pub fn parameters(&self) -> Vec<Parameter<T>> {
        let mut v = self.generator_parameters();
        v.extend(self.discriminator_parameters());
        v
    }

    pub fn models(&self) -> Models<'_, T> {
        Models {
            g_sr: &self.g_sr,
            g_rs: &self.g_rs,
            d_r: &self.d_r,
            d_s: &self.d_s,
        }
    }
}

/// Networks, optimizer moments and the step counter.
#[derive(Debug, Clone)]
pub struct TrainState<T: Scalar> {
    pub gan: TsRirGan<T>,
    pub opt_g: AdamState<T>,
    pub opt_d: AdamState<T>,
    pub step: u64,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(g: GeneratorConfig, d: DiscriminatorConfig, cfg: &TrainingConfig) -> Result<Self> {
        cfg.validate()?;
        let gan = TsRirGan::new(g, d, cfg.seed)?;
        let opt_g = AdamState::new(&gan.generator_parameters(), cfg.adam());
        let opt_d = AdamState::new(&gan.discriminator_parameters(), cfg.adam());
        Ok(TrainState { gan, opt_g, opt_d, step: 0 })
    }

    fn zero_grads(&self) {
        self.gan.parameters().iter().for_each(|p| p.tensor.zero_grad());
    }
}

/// Generator outputs of one step, with their graphs.
pub struct Fakes<T: Scalar> {
    /// `G_SR(s)`
    pub fake_r: Tensor<T>,
    /// `G_RS(r)`
    pub fake_s: Tensor<T>,
}

impl<T: Scalar> Fakes<T> {
    pub fn new(gan: &TsRirGan<T>, s: &Tensor<T>, r: &Tensor<T>) -> Result<Self> {
        Ok(Fakes {
            fake_r: gan.g_sr.forward(s)?,
            fake_s: gan.g_rs.forward(r)?,
        })
    }
}

fn nan_error(step: u64, parts: &[(&str, f64)]) -> GanError {
    let components = parts.iter().map(|(n, v)| format!("{n}={v}")).collect::<Vec<_>>().join(" ");
    log::error!("step {step}: non-finite loss, {components}");
    GanError::NaNLoss { step, components }
}

/// Discriminators ascend both adversarial terms on detached fakes.
/// Returns `(L_adv_SR, L_adv_RS)` before the update.
pub fn discriminator_phase<T: Scalar>(
    state: &mut TrainState<T>,
    s: &Tensor<T>,
    r: &Tensor<T>,
    fakes: &Fakes<T>,
) -> Result<(f64, f64)> {
    state.zero_grads();
    let gan = &state.gan;
    let adv_sr = adversarial_loss(&gan.d_r.forward(r)?, &gan.d_r.forward(&fakes.fake_r.detach())?)?;
    let adv_rs = adversarial_loss(&gan.d_s.forward(s)?, &gan.d_s.forward(&fakes.fake_s.detach())?)?;
    let (a, b) = (adv_sr.item().f64(), adv_rs.item().f64());
    if !(a.is_finite() && b.is_finite()) {
        return Err(nan_error(state.step, &[("L_adv_SR", a), ("L_adv_RS", b)]));
    }
    adv_sr.add(&adv_rs)?.neg().backward()?;
    adam_step(&gan.discriminator_parameters(), &mut state.opt_d)?;
    Ok((a, b))
}

/// Generators descend the adversarial, cycle and identity terms with the
/// discriminators held fixed. Returns `(L_cyc, L_id)`.
pub fn generator_phase<T: Scalar>(
    state: &mut TrainState<T>,
    s: &Tensor<T>,
    r: &Tensor<T>,
    fakes: &Fakes<T>,
    cfg: &TrainingConfig,
) -> Result<(f64, f64)> {
    state.zero_grads();
    let gan = &state.gan;
    let p_r = gan.d_r.forward(&fakes.fake_r)?;
    let p_s = gan.d_s.forward(&fakes.fake_s)?;
    let adv = match cfg.generator_loss {
        GeneratorLoss::NonSaturating => p_r.log().mean().add(&p_s.log().mean())?.neg(),
        GeneratorLoss::Saturating => p_r.one_minus().log().mean().add(&p_s.one_minus().log().mean())?,
    };
    let cyc = cycle_from(s, r, &fakes.fake_r, &fakes.fake_s, &gan.g_sr, &gan.g_rs)?;
    let id = l1(&gan.g_rs.forward(s)?, s)?.add(&l1(&gan.g_sr.forward(r)?, r)?)?;
    let loss = adv
        .add(&cyc.scale(T::of(cfg.lambda_cyc)))?
        .add(&id.scale(T::of(cfg.lambda_id)))?;
    let (a, c, i) = (adv.item().f64(), cyc.item().f64(), id.item().f64());
    if !(a.is_finite() && c.is_finite() && i.is_finite()) {
        return Err(nan_error(state.step, &[("L_adv_G", a), ("L_cyc", c), ("L_id", i)]));
    }
    loss.backward()?;
    adam_step(&gan.generator_parameters(), &mut state.opt_g)?;
    Ok((c, i))
}

/// One alternating update. The reported metrics are the objective at the
/// parameters the step started from.
pub fn train_step<T: Scalar>(
    state: &mut TrainState<T>,
    s: &Tensor<T>,
    r: &Tensor<T>,
    cfg: &TrainingConfig,
) -> Result<LossMetrics> {
    let fakes = Fakes::new(&state.gan, s, r)?;
    let (adv_sr, adv_rs) = discriminator_phase(state, s, r, &fakes)?;
    let (cyc, id) = generator_phase(state, s, r, &fakes, cfg)?;
    state.zero_grads();
    state.step += 1;
    Ok(LossMetrics {
        total: adv_sr + adv_rs + cfg.lambda_cyc * cyc + cfg.lambda_id * id,
        adv_sr,
        adv_rs,
        cyc,
        id,
    })
}

/// Independent seeded shuffles of the synthetic and real pools; each pool
/// is reshuffled when exhausted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSampler {
    pub seed: u64,
    pub pool_sizes: [usize; 2],
    pub epochs: [u64; 2],
    pub positions: [usize; 2],
}

impl BatchSampler {
    pub fn new(seed: u64, n_synthetic: usize, n_real: usize) -> Self {
        BatchSampler {
            seed,
            pool_sizes: [n_synthetic, n_real],
            epochs: [0, 0],
            positions: [0, 0],
        }
    }

    fn order(&self, pool: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.pool_sizes[pool]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(2 * self.epochs[pool] + pool as u64 + 16);
        idx.shuffle(&mut rng);
        idx
    }

    fn take(&mut self, pool: usize, n: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        let mut order = self.order(pool);
        while out.len() < n {
            if self.positions[pool] == self.pool_sizes[pool] {
                self.epochs[pool] += 1;
                self.positions[pool] = 0;
                order = self.order(pool);
            }
            out.push(order[self.positions[pool]]);
            self.positions[pool] += 1;
        }
        out
    }

    /// Indices of the next synthetic and real batches.
    pub fn next_batch(&mut self, batch_size: usize) -> (Vec<usize>, Vec<usize>) {
        let s = self.take(0, batch_size);
        let r = self.take(1, batch_size);
        (s, r)
    }
}

/// Drives [`train_step`] over in-memory synthetic and real pools.
pub struct Trainer<T: Scalar> {
    pub state: TrainState<T>,
    pub config: TrainingConfig,
    pub sampler: BatchSampler,
    synthetic: Vec<Vec<T>>,
    real: Vec<Vec<T>>,
}

fn to_rows<T: Scalar>(rirs: &[ImpulseResponse], len: usize) -> Result<Vec<Vec<T>>> {
    if rirs.is_empty() {
        return Err(GanError::Config("training pools must be non-empty".into()));
    }
    rirs.iter()
        .map(|r| {
            if r.samples().len() != len {
                return Err(GanError::ShapeMismatch(format!("{} has {} samples", r.source_id(), r.samples().len())));
            }
            Ok(r.samples().iter().map(|&v| T::of(v)).collect())
        })
        .collect()
}

impl<T: Scalar> Trainer<T> {
    pub fn new(
        g: GeneratorConfig,
        d: DiscriminatorConfig,
        config: TrainingConfig,
        synthetic: &[ImpulseResponse],
        real: &[ImpulseResponse],
    ) -> Result<Self> {
        let state = TrainState::new(g, d, &config)?;
        Self::with_state(state, config, None, synthetic, real)
    }

    pub(crate) fn with_state(
        state: TrainState<T>,
        config: TrainingConfig,
        sampler: Option<BatchSampler>,
        synthetic: &[ImpulseResponse],
        real: &[ImpulseResponse],
    ) -> Result<Self> {
        let len = state.gan.g_sr.config().signal_len;
        let synthetic = to_rows(synthetic, len)?;
        let real = to_rows(real, len)?;
        let sampler = match sampler {
            Some(s) if s.pool_sizes == [synthetic.len(), real.len()] => s,
            Some(_) => return Err(GanError::InvalidCheckpoint("pool sizes differ from checkpoint".into())),
            None => BatchSampler::new(config.seed, synthetic.len(), real.len()),
        };
        Ok(Trainer {
            state,
            config,
            sampler,
            synthetic,
            real,
        })
    }

    /// Resumes from `ckpt` with the same pools it was trained on.
    pub fn from_checkpoint(ckpt: &Checkpoint, synthetic: &[ImpulseResponse], real: &[ImpulseResponse]) -> Result<Self> {
        let state = ckpt.train_state()?;
        Self::with_state(state, ckpt.meta.training, Some(ckpt.meta.sampler.clone()), synthetic, real)
    }

    fn batch(pool: &[Vec<T>], idx: &[usize]) -> Result<Tensor<T>> {
        let len = pool[0].len();
        let data: Vec<T> = idx.iter().flat_map(|&i| pool[i].iter().copied()).collect();
        Ok(Tensor::new(vec![idx.len(), 1, len], data)?)
    }

    pub fn step(&mut self) -> Result<LossMetrics> {
        let (si, ri) = self.sampler.next_batch(self.config.batch_size);
        let s = Self::batch(&self.synthetic, &si)?;
        let r = Self::batch(&self.real, &ri)?;
        train_step(&mut self.state, &s, &r, &self.config)
    }

    /// Runs `steps` updates, writing one CSV row per step to `log` if given.
    pub fn run(&mut self, steps: u64, mut log: Option<&mut dyn Write>) -> Result<Vec<LossMetrics>> {
        let io = |e: std::io::Error| GanError::Io(e.to_string());
        let mut out = Vec::with_capacity(steps as usize);
        for _ in 0..steps {
            let m = self.step()?;
            if let Some(w) = log.as_deref_mut() {
                writeln!(w, "{}", m.csv_row(self.state.step)).map_err(io)?;
            }
            log::debug!("step {}: {m}", self.state.step);
            out.push(m);
        }
        Ok(out)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::capture(&self.state, &self.config, &self.sampler)
    }
}

/// Runs `generator` on one impulse response and re-normalizes the peak.
pub fn translate_with<T: Scalar>(generator: &Generator<T>, rir: &ImpulseResponse) -> Result<ImpulseResponse> {
    let len = generator.config().signal_len;
    let x: Vec<T> = rir.samples().iter().map(|&v| T::of(v)).collect();
    let x = Tensor::new(vec![1, 1, len], x).map_err(|_| {
        GanError::ShapeMismatch(format!("expected {len} samples, got {}", rir.samples().len()))
    })?;
    let y = generator.forward(&x)?;
    let mut out: Vec<f64> = y.values().iter().map(|v| v.f64()).collect();
    peak_normalize(&mut out)?;
    let domain = match rir.domain() {
        Domain::Equalized | Domain::TranslatedEqualized => Domain::TranslatedEqualized,
        _ => Domain::Translated,
    };
    Ok(ImpulseResponse::new(out, domain, rir.source_id())?)
}

/// Translates with the checkpoint's `G_SR`.
pub fn translate(rir: &ImpulseResponse, ckpt: &Checkpoint) -> Result<ImpulseResponse> {
    translate_with(&ckpt.generator_sr::<f32>()?, rir)
}
