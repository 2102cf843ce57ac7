//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "DYGL" | u32 version | u32 count
//! count x ( u16 name_len | name | u8 rank | rank x u32 dim | u8 dtype | payload )
//! u32 snapshot_len | snapshot (UTF-8 `key = value` lines)
//! ```

use std::fs;
use std::path::Path;

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::tensor::{DType, Element, Tensor, MAX_RANK};

use super::model::{Model, ModelConfig};

pub const MAGIC: &[u8; 4] = b"DYGL";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum StoredTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl StoredTensor {
    pub fn shape(&self) -> &[usize] {
        match self {
            StoredTensor::F32(t) => t.shape(),
            StoredTensor::F64(t) => t.shape(),
        }
    }

    /// Converts to `T`; exact when the stored type already is `T`.
    pub fn to_tensor<T: Element>(&self) -> Tensor<T> {
        match self {
            StoredTensor::F32(t) => t.cast(),
            StoredTensor::F64(t) => t.cast(),
        }
    }

    pub fn from_tensor<T: Element>(t: &Tensor<T>) -> Self {
        match T::DTYPE {
            DType::F32 => StoredTensor::F32(t.cast()),
            DType::F64 => StoredTensor::F64(t.cast()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, StoredTensor)>,
    pub snapshot: KeyValues,
}

fn write_tensor<T: Element>(out: &mut Vec<u8>, t: &Tensor<T>) {
    out.push(t.rank() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.push(T::DTYPE.code());
    for &v in t.data() {
        v.write_le(out);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Format {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail(format!(
                "truncated {what}: need {n} bytes, {} left",
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn utf8(&mut self, n: usize, what: &str) -> Result<&'a str> {
        let start = self.pos;
        let raw = self.take(n, what)?;
        std::str::from_utf8(raw).map_err(|e| Error::Format {
            offset: start + e.valid_up_to(),
            message: format!("{what} is not UTF-8"),
        })
    }

    fn payload<T: Element>(&mut self, shape: &[usize], numel: usize) -> Result<Tensor<T>> {
        let start = self.pos;
        let raw = self.take(numel * T::DTYPE.size(), "tensor payload")?;
        let data = raw.chunks_exact(T::DTYPE.size()).map(T::read_le).collect();
        Tensor::new(shape, data).map_err(|e| Error::Format {
            offset: start,
            message: e.to_string(),
        })
    }
}

impl Checkpoint {
    pub fn push<T: Element>(&mut self, name: impl Into<String>, t: &Tensor<T>) {
        self.tensors.push((name.into(), StoredTensor::from_tensor(t)));
    }

    pub fn get(&self, name: &str) -> Option<&StoredTensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            let len = u16::try_from(name.len())
                .map_err(|_| Error::Contract(format!("tensor name too long: {} bytes", name.len())))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            match t {
                StoredTensor::F32(t) => write_tensor(&mut out, t),
                StoredTensor::F64(t) => write_tensor(&mut out, t),
            }
        }
        let snap = self.snapshot.to_text();
        out.extend_from_slice(&(snap.len() as u32).to_le_bytes());
        out.extend_from_slice(snap.as_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            r.pos = 0;
            return Err(r.fail("bad magic, not a checkpoint"));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::Version {
                found: version,
                expected: VERSION,
            });
        }
        let count = r.u32("tensor count")?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let len = r.u16("name length")? as usize;
            let name = r.utf8(len, "tensor name")?.to_string();
            let rank_at = r.pos;
            let rank = r.u8("rank")? as usize;
            if rank == 0 || rank > MAX_RANK {
                r.pos = rank_at;
                return Err(r.fail(format!("rank {rank} of {name} is outside 1..={MAX_RANK}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32("dimension")? as usize);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| r.fail(format!("shape {shape:?} overflows")))?;
            let code_at = r.pos;
            let dtype = DType::from_code(r.u8("dtype")?).ok_or_else(|| Error::Format {
                offset: code_at,
                message: format!("unknown dtype code {}", bytes[code_at]),
            })?;
            let t = match dtype {
                DType::F32 => StoredTensor::F32(r.payload(&shape, numel)?),
                DType::F64 => StoredTensor::F64(r.payload(&shape, numel)?),
            };
            tensors.push((name, t));
        }
        let len = r.u32("snapshot length")? as usize;
        let snap_at = r.pos;
        let text = r.utf8(len, "config snapshot")?;
        let snapshot = KeyValues::parse(text).map_err(|e| Error::Format {
            offset: snap_at,
            message: e.to_string(),
        })?;
        if r.pos != bytes.len() {
            return Err(r.fail(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint { tensors, snapshot })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

impl<T: Element> Model<T> {
    /// Every parameter and buffer plus the config snapshot.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        for p in self.params.iter() {
            ck.push(p.name.clone(), &p.value);
        }
        ck.snapshot = self.cfg.to_kv();
        ck
    }

    /// Rebuilds the model named by the snapshot and fills in every tensor.
    /// Tensors under other names (optimizer state) are ignored.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let cfg = ModelConfig::from_kv(&ck.snapshot)?;
        let mut model = Model::build(cfg, 0)?;
        let ids: Vec<_> = model.params.ids().collect();
        for id in ids {
            let name = model.params.get(id).name.clone();
            let stored = ck
                .get(&name)
                .ok_or_else(|| Error::Config(format!("checkpoint is missing tensor {name}")))?;
            model.params.set_value(id, stored.to_tensor())?;
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}
