//! Differentiable primitives and their backward rules.

use crate::conv::{self, ConvGeom};
use crate::{NeuralError, Result, Scalar, Tensor};

/// Smallest argument [`Tensor::log`] evaluates; smaller inputs are clamped.
pub const LOG_CLAMP: f64 = 1e-12;

pub(crate) enum Op<T: Scalar> {
    Add,
    Sub,
    Mul,
    AddScalar,
    Scale(T),
    BiasAdd,
    Relu,
    LeakyRelu(T),
    Tanh,
    Sigmoid,
    Abs,
    Log { clamp: Option<T> },
    Clamp(T, T),
    Mean,
    Sum,
    Reshape,
    Concat(Vec<usize>),
    Slice { start: usize },
    Conv1d(ConvGeom),
    ConvTranspose1d(ConvGeom),
}

fn same_shape<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(NeuralError::ShapeMismatch(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn three_d(shape: &[usize], what: &str) -> Result<(usize, usize, usize)> {
    match *shape {
        [b, c, l] => Ok((b, c, l)),
        _ => Err(NeuralError::ShapeMismatch(format!(
            "{what} expects [batch, channels, length], got {shape:?}"
        ))),
    }
}

impl<T: Scalar> Tensor<T> {
    fn map(&self, op: Op<T>, f: impl Fn(T) -> T) -> Tensor<T> {
        let data = self.values().iter().map(|&v| f(v)).collect();
        Tensor::from_op(self.shape().to_vec(), data, op, vec![self.clone()])
    }

    fn zip(&self, other: &Tensor<T>, op: Op<T>, what: &str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        same_shape(self, other, what)?;
        let data = {
            let a = self.values();
            let b = other.values();
            a.iter().zip(b.iter()).map(|(&x, &y)| f(x, y)).collect()
        };
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            op,
            vec![self.clone(), other.clone()],
        ))
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.zip(other, Op::Add, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.zip(other, Op::Sub, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.zip(other, Op::Mul, "mul", |a, b| a * b)
    }

    pub fn add_scalar(&self, c: T) -> Tensor<T> {
        self.map(Op::AddScalar, |v| v + c)
    }

    pub fn scale(&self, c: T) -> Tensor<T> {
        self.map(Op::Scale(c), |v| v * c)
    }

    pub fn neg(&self) -> Tensor<T> {
        self.scale(-T::one())
    }

    /// `1 - x`
    pub fn one_minus(&self) -> Tensor<T> {
        self.neg().add_scalar(T::one())
    }

    /// Adds a per-channel bias `[C]` to a `[B, C, L]` tensor.
    pub fn bias_add(&self, bias: &Tensor<T>) -> Result<Tensor<T>> {
        let (_, c, l) = three_d(self.shape(), "bias_add")?;
        if bias.shape() != [c] {
            return Err(NeuralError::ShapeMismatch(format!(
                "bias {:?} for {c} channels",
                bias.shape()
            )));
        }
        let data = {
            let x = self.values();
            let bv = bias.values();
            x.iter()
                .enumerate()
                .map(|(i, &v)| v + bv[(i / l) % c])
                .collect()
        };
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            Op::BiasAdd,
            vec![self.clone(), bias.clone()],
        ))
    }

    pub fn relu(&self) -> Tensor<T> {
        self.map(Op::Relu, |v| if v > T::zero() { v } else { T::zero() })
    }

    pub fn leaky_relu(&self, slope: T) -> Tensor<T> {
        self.map(Op::LeakyRelu(slope), move |v| if v > T::zero() { v } else { v * slope })
    }

    pub fn tanh(&self) -> Tensor<T> {
        self.map(Op::Tanh, |v| v.tanh())
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        self.map(Op::Sigmoid, |v| T::one() / (T::one() + (-v).exp()))
    }

    pub fn abs(&self) -> Tensor<T> {
        self.map(Op::Abs, |v| v.abs())
    }

    /// Natural log with the input clamped at [`LOG_CLAMP`].
    pub fn log(&self) -> Tensor<T> {
        let c = T::of(LOG_CLAMP);
        self.map(Op::Log { clamp: Some(c) }, move |v| v.max(c).ln())
    }

    /// Natural log without clamping; non-positive inputs are an error.
    pub fn log_unclamped(&self) -> Result<Tensor<T>> {
        if let Some(bad) = self.values().iter().find(|v| !(**v > T::zero())) {
            return Err(NeuralError::DomainError(format!("log of {bad}")));
        }
        Ok(self.map(Op::Log { clamp: None }, |v| v.ln()))
    }

    pub fn clamp(&self, lo: T, hi: T) -> Tensor<T> {
        self.map(Op::Clamp(lo, hi), move |v| v.max(lo).min(hi))
    }

    pub fn mean(&self) -> Tensor<T> {
        let n = T::of(self.numel() as f64);
        let s: T = self.values().iter().copied().sum();
        Tensor::from_op(Vec::new(), vec![s / n], Op::Mean, vec![self.clone()])
    }

    pub fn sum(&self) -> Tensor<T> {
        let s: T = self.values().iter().copied().sum();
        Tensor::from_op(Vec::new(), vec![s], Op::Sum, vec![self.clone()])
    }

    /// Mean absolute value over every element. For a `[B, C, L]` batch
    /// this is the per-example mean absolute value averaged over the batch.
    pub fn l1_norm(&self) -> Tensor<T> {
        self.abs().mean()
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor<T>> {
        if shape.iter().product::<usize>() != self.numel() {
            return Err(NeuralError::ShapeMismatch(format!(
                "cannot reshape {:?} to {shape:?}",
                self.shape()
            )));
        }
        Ok(Tensor::from_op(shape, self.to_vec(), Op::Reshape, vec![self.clone()]))
    }

    /// Concatenates along the leading (batch) dimension.
    pub fn batch_concat(parts: &[Tensor<T>]) -> Result<Tensor<T>> {
        let first = parts
            .first()
            .ok_or_else(|| NeuralError::ShapeMismatch("batch_concat of nothing".into()))?;
        if first.shape().is_empty() {
            return Err(NeuralError::ShapeMismatch("batch_concat of scalars".into()));
        }
        let tail = &first.shape()[1..];
        let mut batch = 0;
        let mut data = Vec::new();
        let mut sizes = Vec::with_capacity(parts.len());
        for p in parts {
            if p.shape().is_empty() || &p.shape()[1..] != tail {
                return Err(NeuralError::ShapeMismatch(format!(
                    "batch_concat: {:?} vs {:?}",
                    first.shape(),
                    p.shape()
                )));
            }
            batch += p.shape()[0];
            sizes.push(p.numel());
            data.extend_from_slice(&p.values());
        }
        let mut shape = vec![batch];
        shape.extend_from_slice(tail);
        Ok(Tensor::from_op(shape, data, Op::Concat(sizes), parts.to_vec()))
    }

    /// Examples `start..start + len` of the leading dimension.
    pub fn batch_slice(&self, start: usize, len: usize) -> Result<Tensor<T>> {
        let shape = self.shape();
        if shape.is_empty() || start + len > shape[0] {
            return Err(NeuralError::ShapeMismatch(format!(
                "batch_slice {start}..{} of {shape:?}",
                start + len
            )));
        }
        let per: usize = shape[1..].iter().product();
        let data = self.values()[start * per..(start + len) * per].to_vec();
        let mut out = shape.to_vec();
        out[0] = len;
        Ok(Tensor::from_op(out, data, Op::Slice { start: start * per }, vec![self.clone()]))
    }

    /// 1-D cross-correlation. `weight` is `[C_out, C_in, K]`.
    pub fn conv1d(&self, weight: &Tensor<T>, stride: usize, padding: usize) -> Result<Tensor<T>> {
        let (b, c_in, len_in) = three_d(self.shape(), "conv1d input")?;
        let (c_out, wc, k) = three_d(weight.shape(), "conv1d weight")?;
        if wc != c_in {
            return Err(NeuralError::ShapeMismatch(format!(
                "conv1d: input has {c_in} channels, weight expects {wc}"
            )));
        }
        if stride == 0 || k == 0 || k > len_in + 2 * padding {
            return Err(NeuralError::ShapeMismatch(format!(
                "conv1d: kernel {k} stride {stride} padding {padding} on length {len_in}"
            )));
        }
        let len_out = (len_in + 2 * padding - k) / stride + 1;
        let g = ConvGeom {
            batch: b,
            c_in,
            c_out,
            len_in,
            len_out,
            kernel: k,
            stride,
            padding,
        };
        let data = conv::conv1d(&self.values(), &weight.values(), g);
        Ok(Tensor::from_op(
            vec![b, c_out, len_out],
            data,
            Op::Conv1d(g),
            vec![self.clone(), weight.clone()],
        ))
    }

    /// Transposed 1-D convolution, the adjoint of [`Tensor::conv1d`].
    /// `weight` is `[C_in, C_out, K]`; output length is
    /// `(L - 1) * stride - 2 * padding + K + output_padding`.
    pub fn conv_transpose1d(
        &self,
        weight: &Tensor<T>,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<Tensor<T>> {
        let (b, c_in, len_in) = three_d(self.shape(), "conv_transpose1d input")?;
        let (wc, c_out, k) = three_d(weight.shape(), "conv_transpose1d weight")?;
        if wc != c_in {
            return Err(NeuralError::ShapeMismatch(format!(
                "conv_transpose1d: input has {c_in} channels, weight expects {wc}"
            )));
        }
        if stride == 0 || k == 0 || len_in == 0 || output_padding >= stride {
            return Err(NeuralError::ShapeMismatch(format!(
                "conv_transpose1d: stride {stride} output_padding {output_padding}"
            )));
        }
        let full = (len_in - 1) * stride + k + output_padding;
        if full <= 2 * padding {
            return Err(NeuralError::ShapeMismatch(format!(
                "conv_transpose1d: empty output for length {len_in}"
            )));
        }
        let len_out = full - 2 * padding;
        let g = ConvGeom {
            batch: b,
            c_in,
            c_out,
            len_in,
            len_out,
            kernel: k,
            stride,
            padding,
        };
        let data = conv::conv_transpose1d(&self.values(), &weight.values(), g);
        Ok(Tensor::from_op(
            vec![b, c_out, len_out],
            data,
            Op::ConvTranspose1d(g),
            vec![self.clone(), weight.clone()],
        ))
    }
}

impl<T: Scalar> Op<T> {
    /// Gradients for each parent of `out`, given the gradient of `out`.
    pub(crate) fn backward(&self, out: &Tensor<T>, g: &[T]) -> Vec<Option<Vec<T>>> {
        let parents = &out.node.parents;
        let x = || parents[0].values();
        let need = |i: usize| parents[i].requires_grad();
        let ewise = |f: &dyn Fn(T, T) -> T| -> Vec<Option<Vec<T>>> {
            let xv = x();
            vec![Some(xv.iter().zip(g).map(|(&a, &d)| f(a, d)).collect())]
        };
        match self {
            Op::Add => vec![Some(g.to_vec()), Some(g.to_vec())],
            Op::Sub => vec![Some(g.to_vec()), Some(g.iter().map(|&d| -d).collect())],
            Op::Mul => {
                let a = parents[0].values();
                let b = parents[1].values();
                vec![
                    need(0).then(|| b.iter().zip(g).map(|(&bv, &d)| bv * d).collect()),
                    need(1).then(|| a.iter().zip(g).map(|(&av, &d)| av * d).collect()),
                ]
            }
            Op::AddScalar | Op::Reshape => vec![Some(g.to_vec())],
            Op::Scale(c) => vec![Some(g.iter().map(|&d| d * *c).collect())],
            Op::BiasAdd => {
                let shape = parents[0].shape();
                let (c, l) = (shape[1], shape[2]);
                let mut db = vec![T::zero(); c];
                for (i, &d) in g.iter().enumerate() {
                    let ch = (i / l) % c;
                    db[ch] = db[ch] + d;
                }
                vec![Some(g.to_vec()), Some(db)]
            }
            Op::Relu => ewise(&|v, d| if v > T::zero() { d } else { T::zero() }),
            Op::LeakyRelu(s) => ewise(&|v, d| if v > T::zero() { d } else { d * *s }),
            Op::Tanh => {
                let y = out.values();
                vec![Some(y.iter().zip(g).map(|(&yv, &d)| d * (T::one() - yv * yv)).collect())]
            }
            Op::Sigmoid => {
                let y = out.values();
                vec![Some(y.iter().zip(g).map(|(&yv, &d)| d * yv * (T::one() - yv)).collect())]
            }
            Op::Abs => ewise(&|v, d| {
                if v > T::zero() {
                    d
                } else if v < T::zero() {
                    -d
                } else {
                    T::zero()
                }
            }),
            Op::Log { clamp } => match clamp {
                Some(c) => ewise(&|v, d| if v > *c { d / v } else { T::zero() }),
                None => ewise(&|v, d| d / v),
            },
            Op::Clamp(lo, hi) => ewise(&|v, d| if v >= *lo && v <= *hi { d } else { T::zero() }),
            Op::Mean => {
                let n = parents[0].numel();
                vec![Some(vec![g[0] / T::of(n as f64); n])]
            }
            Op::Sum => vec![Some(vec![g[0]; parents[0].numel()])],
            Op::Concat(sizes) => {
                let mut off = 0;
                sizes
                    .iter()
                    .map(|&n| {
                        let part = g[off..off + n].to_vec();
                        off += n;
                        Some(part)
                    })
                    .collect()
            }
            Op::Slice { start } => {
                let mut full = vec![T::zero(); parents[0].numel()];
                full[*start..*start + g.len()].copy_from_slice(g);
                vec![Some(full)]
            }
            Op::Conv1d(geom) => {
                let xv = parents[0].values();
                let wv = parents[1].values();
                vec![
                    need(0).then(|| conv::conv1d_input_grad(&wv, g, *geom)),
                    need(1).then(|| conv::conv1d_weight_grad(&xv, g, *geom)),
                ]
            }
            Op::ConvTranspose1d(geom) => {
                let xv = parents[0].values();
                let wv = parents[1].values();
                vec![
                    need(0).then(|| conv::conv_transpose1d_input_grad(&wv, g, *geom)),
                    need(1).then(|| conv::conv_transpose1d_weight_grad(&xv, g, *geom)),
                ]
            }
        }
    }
}
