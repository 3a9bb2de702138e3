//! Cycle-consistent translation between synthetic and real impulse
//! responses on raw waveforms.

mod checkpoint;
mod loss;
mod model;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, TensorRecord, CHECKPOINT_VERSION};
pub use loss::{
    adversarial_loss, adversarial_loss_strict, cycle_loss, full_objective, identity_loss, LossMetrics, Models,
    Objective,
};
pub use model::{Discriminator, DiscriminatorNet, Generator, GeneratorNet};
pub use train::{
    discriminator_phase, generator_phase, train_step, translate, translate_with, BatchSampler, Fakes, Trainer,
    TrainState, TsRirGan,
};

use rir_neural::NeuralError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{AudioError, RIR_LEN};

pub const KERNEL_LENGTH: usize = 25;
pub(crate) const PADDING: usize = 12;
pub(crate) const DISC_STRIDE: usize = 4;
pub(crate) const LOGIT_CLAMP: f64 = 30.0;

#[derive(Debug, Error)]
pub enum GanError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("non-finite loss at step {step}: {components}")]
    NaNLoss { step: u64, components: String },
    #[error("checkpoint version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptFile(String),
    #[error("invalid checkpoint: {0}")]
    InvalidCheckpoint(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

pub type Result<T> = std::result::Result<T, GanError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub base_channels: usize,
    pub encoder_downsamples: usize,
    pub n_residual_blocks: usize,
    pub kernel_length: usize,
    pub signal_len: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            base_channels: 64,
            encoder_downsamples: 4,
            n_residual_blocks: 4,
            kernel_length: KERNEL_LENGTH,
            signal_len: RIR_LEN,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel_length != KERNEL_LENGTH {
            return Err(GanError::Config(format!("kernel length must be {KERNEL_LENGTH}")));
        }
        if self.base_channels == 0 || self.signal_len == 0 {
            return Err(GanError::Config("channels and length must be positive".into()));
        }
        if self.encoder_downsamples >= usize::BITS as usize - 1
            || self.signal_len % (1usize << self.encoder_downsamples) != 0
        {
            return Err(GanError::Config(format!(
                "length {} not divisible by 2^{}",
                self.signal_len, self.encoder_downsamples
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscriminatorConfig {
    pub base_channels: usize,
    pub n_layers: usize,
    pub kernel_length: usize,
    pub leaky_slope: f64,
    pub signal_len: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            base_channels: 64,
            n_layers: 6,
            kernel_length: KERNEL_LENGTH,
            leaky_slope: 0.2,
            signal_len: RIR_LEN,
        }
    }
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel_length != KERNEL_LENGTH {
            return Err(GanError::Config(format!("kernel length must be {KERNEL_LENGTH}")));
        }
        if self.base_channels == 0 || self.signal_len == 0 || self.n_layers == 0 {
            return Err(GanError::Config("channels, layers and length must be positive".into()));
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return Err(GanError::Config("leaky slope must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Feature length after the strided stack.
    pub fn final_len(&self) -> usize {
        (0..self.n_layers).fold(self.signal_len, |l, _| (l + 2 * PADDING - self.kernel_length) / DISC_STRIDE + 1)
    }
}

/// Which adversarial term the generators descend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorLoss {
    /// Minimize `-log D(G(x))`.
    #[default]
    NonSaturating,
    /// Minimize `log(1 - D(G(x)))` as written in the objective.
    Saturating,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub lambda_cyc: f64,
    pub lambda_id: f64,
    pub batch_size: usize,
    pub total_steps: u64,
    pub seed: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub generator_loss: GeneratorLoss,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let adam = rir_neural::AdamConfig::default();
        TrainingConfig {
            lambda_cyc: 10.0,
            lambda_id: 5.0,
            batch_size: 4,
            total_steps: 1000,
            seed: 0,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            generator_loss: GeneratorLoss::NonSaturating,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.lambda_cyc) || !finite_nonneg(self.lambda_id) {
            return Err(GanError::Config("loss weights must be finite and non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(GanError::Config("batch size must be positive".into()));
        }
        if !finite_nonneg(self.learning_rate)
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.epsilon > 0.0)
        {
            return Err(GanError::Config("invalid optimizer hyperparameters".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> rir_neural::AdamConfig {
        rir_neural::AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}
