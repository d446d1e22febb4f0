//! Binary checkpoint format.
//!
//! Little-endian layout:
//!
//! ```text
//! magic            4 bytes          "LITN"
//! version          u32              currently 1
//! config length    u32
//! config           UTF-8 text       key=value lines, fixed order
//! param count      u32
//! per parameter:
//!   name length    u32
//!   name           UTF-8 bytes
//!   kind           u8               0 trainable, 1 buffer
//!   dtype          u8               1 f32, 2 f64
//!   rank           u32
//!   dims           u32 × rank
//!   data           numel × dtype size, little-endian
//! optimizer flag   u8               0 absent, 1 present
//! if present:
//!   step           u64
//!   for every trainable parameter, in the order written above:
//!     first moment  numel × dtype size
//!     second moment numel × dtype size
//! rng flag         u8               0 absent, 1 present
//! if present:
//!   seed           32 bytes
//!   word position  u128
//! ```
//!
//! Everything is written in registry order, so saving the same state twice
//! produces byte-identical files.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{LitNet, ModelConfig};
use crate::nn::{ParamKind, ParamStore};
use crate::tensor::{Dtype, Element, Tensor};

const MAGIC: &[u8; 4] = b"LITN";
const VERSION: u32 = 1;

/// Adam state carried inside a checkpoint: per-trainable first/second
/// moments, keyed by parameter name.
#[derive(Clone)]
pub struct OptimizerState<T: Element> {
    pub step: u64,
    pub moments: Vec<(String, Vec<T>, Vec<T>)>,
}

/// Everything needed to resume: configuration, parameters, optimizer
/// moments, and the data-order RNG state.
#[derive(Clone)]
pub struct Checkpoint<T: Element> {
    pub config: ModelConfig,
    pub params: Vec<(String, ParamKind, Tensor<T>)>,
    pub optimizer: Option<OptimizerState<T>>,
    pub rng: Option<([u8; 32], u128)>,
}

impl<T: Element> Checkpoint<T> {
    /// Snapshot a model's parameters (no optimizer or RNG state).
    pub fn of_model(model: &LitNet<T>) -> Checkpoint<T> {
        Checkpoint {
            config: *model.config(),
            params: model.store().snapshot(),
            optimizer: None,
            rng: None,
        }
    }

    /// Rebuild the model this checkpoint came from.
    pub fn build_model(&self) -> Result<LitNet<T>> {
        // Seed is irrelevant: every parameter is overwritten below.
        let model = LitNet::new(self.config, 0)?;
        self.apply_to(model.store())?;
        Ok(model)
    }

    /// Write this checkpoint's tensors into an existing parameter store.
    ///
    /// The stored (name, shape) set must match the store's exactly; any
    /// difference in either direction is reported, so a checkpoint from a
    /// different architecture (say, an enhance model loaded into a
    /// super-resolution one) fails loudly instead of half-loading.
    pub fn apply_to(&self, store: &ParamStore<T>) -> Result<()> {
        let signature = |name: &str, t: &Tensor<T>| format!("{name}[{}]", t.shape());
        let store_sigs: Vec<(String, String)> = store
            .snapshot()
            .iter()
            .map(|(n, _, t)| (n.clone(), signature(n, t)))
            .collect();
        let ckpt_sigs: Vec<(String, String)> = self
            .params
            .iter()
            .map(|(n, _, t)| (n.clone(), signature(n, t)))
            .collect();
        let missing: Vec<String> = store_sigs
            .iter()
            .filter(|(_, s)| !ckpt_sigs.iter().any(|(_, c)| c == s))
            .map(|(_, s)| s.clone())
            .collect();
        let unexpected: Vec<String> = ckpt_sigs
            .iter()
            .filter(|(_, c)| !store_sigs.iter().any(|(_, s)| s == c))
            .map(|(_, c)| c.clone())
            .collect();
        if !missing.is_empty() || !unexpected.is_empty() {
            return Err(Error::CheckpointNameSet { missing, unexpected });
        }
        for (name, _, tensor) in &self.params {
            let id = store
                .id(name)
                .expect("name set was just validated against the store");
            store.set(id, tensor.detach())?;
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    put_u32(out, b.len() as u32);
    out.extend_from_slice(b);
}

fn encode<T: Element>(ckpt: &Checkpoint<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_bytes(&mut out, ckpt.config.to_kv().as_bytes());

    put_u32(&mut out, ckpt.params.len() as u32);
    for (name, kind, tensor) in &ckpt.params {
        put_bytes(&mut out, name.as_bytes());
        out.push(match kind {
            ParamKind::Trainable => 0,
            ParamKind::Buffer => 1,
        });
        out.push(T::DTYPE.tag());
        put_u32(&mut out, tensor.dims().len() as u32);
        for &d in tensor.dims() {
            put_u32(&mut out, d as u32);
        }
        for &v in tensor.data() {
            v.write_le(&mut out);
        }
    }

    match &ckpt.optimizer {
        None => out.push(0),
        Some(opt) => {
            out.push(1);
            out.extend_from_slice(&opt.step.to_le_bytes());
            for (_, m, v) in &opt.moments {
                for &x in m {
                    x.write_le(&mut out);
                }
                for &x in v {
                    x.write_le(&mut out);
                }
            }
        }
    }

    match &ckpt.rng {
        None => out.push(0),
        Some((seed, word_pos)) => {
            out.push(1);
            out.extend_from_slice(seed);
            out.extend_from_slice(&word_pos.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::CheckpointCorrupt(format!(
                "truncated while reading {what} (need {n} bytes at offset {})",
                self.pos
            )));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn u128(&mut self, what: &str) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::CheckpointCorrupt(format!("{what} is not UTF-8")))
    }
}

fn decode<T: Element>(buf: &[u8]) -> Result<Checkpoint<T>> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4, "magic")? != MAGIC {
        return Err(Error::CheckpointMagic);
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: VERSION,
        });
    }
    let config = ModelConfig::from_kv(&c.string("config block")?)?;

    let n_params = c.u32("parameter count")? as usize;
    let mut params = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let name = c.string("parameter name")?;
        let kind = match c.u8("parameter kind")? {
            0 => ParamKind::Trainable,
            1 => ParamKind::Buffer,
            k => {
                return Err(Error::CheckpointCorrupt(format!(
                    "unknown parameter kind {k} for `{name}`"
                )))
            }
        };
        let tag = c.u8("dtype tag")?;
        let dtype = Dtype::from_tag(tag).ok_or_else(|| {
            Error::CheckpointCorrupt(format!("unknown dtype tag {tag} for `{name}`"))
        })?;
        if dtype != T::DTYPE {
            return Err(Error::CheckpointDtype {
                name,
                stored: dtype.name(),
                requested: T::DTYPE.name(),
            });
        }
        let rank = c.u32("rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        let mut numel = 1usize;
        for _ in 0..rank {
            let d = c.u32("dimension")? as usize;
            numel = numel.checked_mul(d).ok_or_else(|| {
                Error::CheckpointCorrupt(format!("dimension overflow in `{name}`"))
            })?;
            dims.push(d);
        }
        let bytes = c.take(numel * T::DTYPE.size(), "parameter data")?;
        let data: Vec<T> = bytes
            .chunks_exact(T::DTYPE.size())
            .map(T::read_le)
            .collect();
        params.push((name, kind, Tensor::from_vec(dims, data)?));
    }

    let optimizer = match c.u8("optimizer flag")? {
        0 => None,
        1 => {
            let step = c.u64("optimizer step")?;
            let mut moments = Vec::new();
            for (name, kind, tensor) in &params {
                if *kind != ParamKind::Trainable {
                    continue;
                }
                let n = tensor.numel() * T::DTYPE.size();
                let m: Vec<T> = c
                    .take(n, "first moment")?
                    .chunks_exact(T::DTYPE.size())
                    .map(T::read_le)
                    .collect();
                let v: Vec<T> = c
                    .take(n, "second moment")?
                    .chunks_exact(T::DTYPE.size())
                    .map(T::read_le)
                    .collect();
                moments.push((name.clone(), m, v));
            }
            Some(OptimizerState { step, moments })
        }
        f => {
            return Err(Error::CheckpointCorrupt(format!(
                "unknown optimizer flag {f}"
            )))
        }
    };

    let rng = match c.u8("rng flag")? {
        0 => None,
        1 => {
            let seed: [u8; 32] = c.take(32, "rng seed")?.try_into().unwrap();
            let word_pos = c.u128("rng word position")?;
            Some((seed, word_pos))
        }
        f => return Err(Error::CheckpointCorrupt(format!("unknown rng flag {f}"))),
    };

    if c.pos != buf.len() {
        return Err(Error::CheckpointCorrupt(format!(
            "{} trailing bytes after checkpoint end",
            buf.len() - c.pos
        )));
    }
    Ok(Checkpoint {
        config,
        params,
        optimizer,
        rng,
    })
}

pub fn save_checkpoint<T: Element>(path: impl AsRef<Path>, ckpt: &Checkpoint<T>) -> Result<()> {
    std::fs::write(path, encode(ckpt))?;
    Ok(())
}

pub fn load_checkpoint<T: Element>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    decode(&std::fs::read(path)?)
}

/// In-memory round trip, used by tests and by the trainer's byte-identity
/// checks.
pub fn to_bytes<T: Element>(ckpt: &Checkpoint<T>) -> Vec<u8> {
    encode(ckpt)
}

pub fn from_bytes<T: Element>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    decode(bytes)
}
