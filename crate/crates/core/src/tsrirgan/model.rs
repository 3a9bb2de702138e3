use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rir_neural::{Parameter, Scalar, Tensor};

use super::{DiscriminatorConfig, GanError, GeneratorConfig, Result, DISC_STRIDE, LOGIT_CLAMP, PADDING};

/// Anything that maps a `[B, 1, L]` batch to a `[B, 1, L]` batch.
pub trait GeneratorNet<T: Scalar> {
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>>;
}

/// Anything that scores a `[B, 1, L]` batch with probabilities `[B, 1]`.
pub trait DiscriminatorNet<T: Scalar> {
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>>;
}

#[derive(Debug, Clone)]
struct Layer<T: Scalar> {
    weight: Parameter<T>,
    bias: Parameter<T>,
}

impl<T: Scalar> Layer<T> {
    /// Uniform in `±1/sqrt(fan_in)` for both weight and bias.
    fn new(name: String, shape: [usize; 3], fan_in: usize, bias_len: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut draw = |n: usize| -> Vec<T> { (0..n).map(|_| T::of(rng.random_range(-bound..bound))).collect() };
        let weight = Parameter::new(format!("{name}.weight"), shape.to_vec(), draw(shape.iter().product()))?;
        let bias = Parameter::new(format!("{name}.bias"), vec![bias_len], draw(bias_len))?;
        Ok(Layer { weight, bias })
    }

    fn conv(&self, x: &Tensor<T>, stride: usize, padding: usize) -> Result<Tensor<T>> {
        Ok(x.conv1d(&self.weight.tensor, stride, padding)?.bias_add(&self.bias.tensor)?)
    }

    fn conv_t(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(x.conv_transpose1d(&self.weight.tensor, 2, PADDING, 1)?.bias_add(&self.bias.tensor)?)
    }

    fn push_params(&self, out: &mut Vec<Parameter<T>>) {
        out.push(self.weight.clone());
        out.push(self.bias.clone());
    }
}

fn check_input<T: Scalar>(x: &Tensor<T>, len: usize) -> Result<()> {
    match x.shape() {
        [_, 1, l] if *l == len => Ok(()),
        s => Err(GanError::ShapeMismatch(format!("expected [B, 1, {len}], got {s:?}"))),
    }
}

pub(crate) fn init_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Encoder / residual transformer / decoder over raw waveforms.
#[derive(Debug, Clone)]
pub struct Generator<T: Scalar> {
    config: GeneratorConfig,
    encoder: Vec<Layer<T>>,
    residual: Vec<(Layer<T>, Layer<T>)>,
    decoder: Vec<Layer<T>>,
    output: Layer<T>,
}

impl<T: Scalar> Generator<T> {
    pub fn new(prefix: &str, config: GeneratorConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let k = config.kernel_length;
        let d = config.encoder_downsamples;
        let enc_ch = |i: usize| config.base_channels << i;
        let mut encoder = Vec::with_capacity(d);
        let mut c_in = 1;
        for i in 0..d {
            let c_out = enc_ch(i);
            encoder.push(Layer::new(format!("{prefix}.enc.{i}"), [c_out, c_in, k], c_in * k, c_out, rng)?);
            c_in = c_out;
        }
        let mut residual = Vec::with_capacity(config.n_residual_blocks);
        for i in 0..config.n_residual_blocks {
            let a = Layer::new(format!("{prefix}.res.{i}.conv1"), [c_in, c_in, k], c_in * k, c_in, rng)?;
            let b = Layer::new(format!("{prefix}.res.{i}.conv2"), [c_in, c_in, k], c_in * k, c_in, rng)?;
            residual.push((a, b));
        }
        let mut decoder = Vec::with_capacity(d);
        for i in 0..d {
            let c_out = config.base_channels << (d.saturating_sub(2 + i));
            // transposed weights are [c_in, c_out, k]
            decoder.push(Layer::new(format!("{prefix}.dec.{i}"), [c_in, c_out, k], c_out * k, c_out, rng)?);
            c_in = c_out;
        }
        let output = Layer::new(format!("{prefix}.out"), [1, c_in, k], c_in * k, 1, rng)?;
        Ok(Generator {
            config,
            encoder,
            residual,
            decoder,
            output,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn parameters(&self) -> Vec<Parameter<T>> {
        let mut v = Vec::new();
        self.encoder.iter().for_each(|l| l.push_params(&mut v));
        for (a, b) in &self.residual {
            a.push_params(&mut v);
            b.push_params(&mut v);
        }
        self.decoder.iter().for_each(|l| l.push_params(&mut v));
        self.output.push_params(&mut v);
        v
    }
}

impl<T: Scalar> GeneratorNet<T> for Generator<T> {
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        check_input(x, self.config.signal_len)?;
        let mut h = x.clone();
        for l in &self.encoder {
            h = l.conv(&h, 2, PADDING)?.relu();
        }
        for (a, b) in &self.residual {
            let r = b.conv(&a.conv(&h, 1, PADDING)?.relu(), 1, PADDING)?;
            h = h.add(&r)?;
        }
        for l in &self.decoder {
            h = l.conv_t(&h)?.relu();
        }
        Ok(self.output.conv(&h, 1, PADDING)?.tanh())
    }
}

/// Strided convolution stack ending in a dense logit and a sigmoid.
#[derive(Debug, Clone)]
pub struct Discriminator<T: Scalar> {
    config: DiscriminatorConfig,
    layers: Vec<Layer<T>>,
    dense: Layer<T>,
}

impl<T: Scalar> Discriminator<T> {
    pub fn new(prefix: &str, config: DiscriminatorConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let k = config.kernel_length;
        let mut layers = Vec::with_capacity(config.n_layers);
        let mut c_in = 1;
        for i in 0..config.n_layers {
            let c_out = config.base_channels << i.min(4);
            layers.push(Layer::new(format!("{prefix}.conv.{i}"), [c_out, c_in, k], c_in * k, c_out, rng)?);
            c_in = c_out;
        }
        let flat = config.final_len();
        // the dense layer is a convolution spanning the whole feature map
        let dense = Layer::new(format!("{prefix}.dense"), [1, c_in, flat], c_in * flat, 1, rng)?;
        Ok(Discriminator { config, layers, dense })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    pub fn parameters(&self) -> Vec<Parameter<T>> {
        let mut v = Vec::new();
        self.layers.iter().for_each(|l| l.push_params(&mut v));
        self.dense.push_params(&mut v);
        v
    }

    /// Pre-sigmoid scores `[B, 1]`, clamped to `±30`.
    pub fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        check_input(x, self.config.signal_len)?;
        let slope = T::of(self.config.leaky_slope);
        let mut h = x.clone();
        for l in &self.layers {
            h = l.conv(&h, DISC_STRIDE, PADDING)?.leaky_relu(slope);
        }
        let b = x.shape()[0];
        let z = self.dense.conv(&h, 1, 0)?.reshape(vec![b, 1])?;
        Ok(z.clamp(T::of(-LOGIT_CLAMP), T::of(LOGIT_CLAMP)))
    }
}

impl<T: Scalar> DiscriminatorNet<T> for Discriminator<T> {
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.logits(x)?.sigmoid())
    }
}
