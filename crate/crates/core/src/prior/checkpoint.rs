//! Binary checkpoint format (all integers little-endian):
//!
//! ```text
//! magic "SYMPRIOR" | version u32 | max_vars u32 | vocab fingerprint u64
//! config_len u32 | config JSON
//! n_tensors u32 | per tensor: name_len u16, name, rows u32, cols u32,
//!                 rows*cols f64, SHA-256 of the f64 bytes
//! SHA-256 of everything above
//! ```

use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use super::{param_layout, PriorConfig, PriorError, PriorModel};
use crate::expr::Vocab;

const MAGIC: &[u8; 8] = b"SYMPRIOR";
pub const CHECKPOINT_VERSION: u32 = 1;

fn corrupt(msg: impl Into<String>) -> PriorError {
    PriorError::CorruptCheckpoint(msg.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PriorError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("truncated"))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u16(&mut self) -> Result<u16, PriorError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
    fn u32(&mut self) -> Result<u32, PriorError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, PriorError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

impl PriorModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.vocab.max_vars() as u32).to_le_bytes());
        out.extend_from_slice(&self.vocab.fingerprint().to_le_bytes());
        let config = serde_json::to_vec(&self.config).expect("config serializes");
        out.extend_from_slice(&(config.len() as u32).to_le_bytes());
        out.extend_from_slice(&config);
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, p) in self.param_names().iter().zip(&self.params) {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(p.nrows() as u32).to_le_bytes());
            out.extend_from_slice(&(p.ncols() as u32).to_le_bytes());
            let mut data = Vec::with_capacity(p.len() * 8);
            for v in p.iter() {
                data.extend_from_slice(&v.to_le_bytes());
            }
            let sum = Sha256::digest(&data);
            out.extend_from_slice(&data);
            out.extend_from_slice(&sum);
        }
        let total = Sha256::digest(&out);
        out.extend_from_slice(&total);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PriorError> {
        if bytes.len() < MAGIC.len() + 4 + 32 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(corrupt("missing magic header"));
        }
        let mut r = Reader { buf: bytes, pos: MAGIC.len() };
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(PriorError::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != trailer {
            return Err(corrupt("file checksum mismatch"));
        }
        let mut r = Reader { buf: body, pos: r.pos };
        let max_vars = r.u32()? as usize;
        if max_vars == 0 || max_vars > u16::MAX as usize {
            return Err(corrupt("bad max_vars"));
        }
        let vocab = Vocab::new(max_vars);
        let fingerprint = r.u64()?;
        if fingerprint != vocab.fingerprint() {
            return Err(PriorError::VocabMismatch { expected: vocab.fingerprint(), found: fingerprint });
        }
        let config_len = r.u32()? as usize;
        let config: PriorConfig =
            serde_json::from_slice(r.take(config_len)?).map_err(|e| corrupt(format!("config: {e}")))?;
        config.validate().map_err(|e| corrupt(e.to_string()))?;
        let layout = param_layout(&config, vocab.len());
        let n = r.u32()? as usize;
        if n != layout.len() {
            return Err(corrupt(format!("expected {} tensors, found {n}", layout.len())));
        }
        let mut params = Vec::with_capacity(n);
        for (name, shape, _) in &layout {
            let name_len = r.u16()? as usize;
            let found = r.take(name_len)?;
            if found != name.as_bytes() {
                return Err(corrupt(format!("expected tensor {name}")));
            }
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            if (rows, cols) != *shape {
                return Err(corrupt(format!("tensor {name} has shape {rows}x{cols}")));
            }
            let data = r.take(rows * cols * 8)?;
            let sum = r.take(32)?;
            if Sha256::digest(data).as_slice() != sum {
                return Err(corrupt(format!("tensor {name} checksum mismatch")));
            }
            let values: Vec<f64> =
                data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            if values.iter().any(|v| !v.is_finite()) {
                return Err(corrupt(format!("tensor {name} has non-finite weights")));
            }
            params.push(Array2::from_shape_vec((rows, cols), values).expect("shape checked"));
        }
        if r.pos != body.len() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(PriorModel { config, vocab, params })
    }

    pub fn save(&self, path: &Path) -> Result<(), PriorError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PriorError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Loads and checks that the checkpoint was trained on `vocab`.
    pub fn load_for(path: &Path, vocab: &Vocab) -> Result<Self, PriorError> {
        let model = Self::load(path)?;
        model.check_vocab(vocab)?;
        Ok(model)
    }
}
