//! Binary checkpoint: `TSRG` magic, `u32` version, a length-prefixed JSON
//! metadata blob, then named little-endian `f32` tensor records.

use std::collections::HashMap;
use std::path::Path;

use rir_neural::{Parameter, Scalar};
use serde::{Deserialize, Serialize};

use super::model::{init_rng, Generator};
use super::train::{BatchSampler, TrainState};
use super::{DiscriminatorConfig, GanError, GeneratorConfig, Result, TrainingConfig};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"TSRG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub training: TrainingConfig,
    pub step: u64,
    pub adam_g_step: u64,
    pub adam_d_step: u64,
    pub sampler: BatchSampler,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub records: Vec<TensorRecord>,
}

fn record<T: Scalar>(name: String, shape: &[usize], data: &[T]) -> TensorRecord {
    TensorRecord {
        name,
        shape: shape.to_vec(),
        data: data.iter().map(|v| v.f64() as f32).collect(),
    }
}

fn moment_name(group: &str, which: &str, param: &str) -> String {
    format!("adam.{group}.{which}.{param}")
}

impl Checkpoint {
    pub fn capture<T: Scalar>(state: &TrainState<T>, training: &TrainingConfig, sampler: &BatchSampler) -> Self {
        let mut records = Vec::new();
        let gan = &state.gan;
        for p in gan.parameters() {
            records.push(record(p.name.clone(), p.tensor.shape(), &p.tensor.values()));
        }
        let groups = [
            ("G", gan.generator_parameters(), &state.opt_g),
            ("D", gan.discriminator_parameters(), &state.opt_d),
        ];
        for (group, params, opt) in groups {
            for (i, p) in params.iter().enumerate() {
                records.push(record(moment_name(group, "m", &p.name), p.tensor.shape(), &opt.m[i]));
                records.push(record(moment_name(group, "v", &p.name), p.tensor.shape(), &opt.v[i]));
            }
        }
        Checkpoint {
            meta: CheckpointMeta {
                generator: *gan.g_sr.config(),
                discriminator: *gan.d_r.config(),
                training: *training,
                step: state.step,
                adam_g_step: state.opt_g.step,
                adam_d_step: state.opt_d.step,
                sampler: sampler.clone(),
            },
            records,
        }
    }

    fn index(&self) -> HashMap<&str, &TensorRecord> {
        self.records.iter().map(|r| (r.name.as_str(), r)).collect()
    }

    fn lookup<'a>(index: &HashMap<&str, &'a TensorRecord>, name: &str, shape: &[usize]) -> Result<&'a TensorRecord> {
        let r = index
            .get(name)
            .ok_or_else(|| GanError::InvalidCheckpoint(format!("missing tensor `{name}`")))?;
        if r.shape != shape {
            return Err(GanError::InvalidCheckpoint(format!(
                "`{name}` has shape {:?}, expected {shape:?}",
                r.shape
            )));
        }
        Ok(r)
    }

    fn load_params<T: Scalar>(index: &HashMap<&str, &TensorRecord>, params: &[Parameter<T>]) -> Result<()> {
        for p in params {
            let r = Self::lookup(index, &p.name, p.tensor.shape())?;
            p.tensor.set_values(r.data.iter().map(|&v| T::of(v as f64)).collect())?;
        }
        Ok(())
    }

    /// Rebuilds the full training state.
    pub fn train_state<T: Scalar>(&self) -> Result<TrainState<T>> {
        let mut state = TrainState::<T>::new(self.meta.generator, self.meta.discriminator, &self.meta.training)?;
        let index = self.index();
        Self::load_params(&index, &state.gan.parameters())?;
        let groups = [
            ("G", state.gan.generator_parameters(), &mut state.opt_g, self.meta.adam_g_step),
            ("D", state.gan.discriminator_parameters(), &mut state.opt_d, self.meta.adam_d_step),
        ];
        for (group, params, opt, step) in groups {
            for (i, p) in params.iter().enumerate() {
                let conv = |r: &TensorRecord| r.data.iter().map(|&v| T::of(v as f64)).collect::<Vec<T>>();
                opt.m[i] = conv(Self::lookup(&index, &moment_name(group, "m", &p.name), p.tensor.shape())?);
                opt.v[i] = conv(Self::lookup(&index, &moment_name(group, "v", &p.name), p.tensor.shape())?);
            }
            opt.step = step;
        }
        state.step = self.meta.step;
        Ok(state)
    }

    /// The synthetic-to-real generator alone.
    pub fn generator_sr<T: Scalar>(&self) -> Result<Generator<T>> {
        let g = Generator::<T>::new("G_SR", self.meta.generator, &mut init_rng(0, 0))?;
        Self::load_params(&self.index(), &g.parameters())?;
        Ok(g)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.meta).map_err(|e| GanError::Io(e.to_string()))?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&(r.name.len() as u32).to_le_bytes());
            out.extend_from_slice(r.name.as_bytes());
            out.extend_from_slice(&(r.shape.len() as u32).to_le_bytes());
            for &d in &r.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in &r.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut c = Cursor { bytes, pos: 0 };
        if c.take(4)? != MAGIC {
            return Err(GanError::CorruptFile("bad magic".into()));
        }
        let version = c.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(GanError::VersionMismatch {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let meta_len = c.u64()? as usize;
        let meta: CheckpointMeta = serde_json::from_slice(c.take(meta_len)?)
            .map_err(|e| GanError::CorruptFile(format!("metadata: {e}")))?;
        let n = c.u32()? as usize;
        let mut records = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let name_len = c.u32()? as usize;
            let name = String::from_utf8(c.take(name_len)?.to_vec())
                .map_err(|_| GanError::CorruptFile("tensor name is not UTF-8".into()))?;
            let ndim = c.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim.min(8));
            for _ in 0..ndim {
                shape.push(c.u64()? as usize);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| GanError::CorruptFile(format!("shape of `{name}` overflows")))?;
            let raw = c.take(numel)?;
            let data = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            records.push(TensorRecord { name, shape, data });
        }
        if c.pos != bytes.len() {
            return Err(GanError::CorruptFile(format!("{} trailing bytes", bytes.len() - c.pos)));
        }
        Ok(Checkpoint { meta, records })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| GanError::CorruptFile(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes()?).map_err(|e| GanError::Io(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| GanError::Io(format!("{}: {e}", path.display())))?;
    Checkpoint::from_bytes(&bytes)
}
