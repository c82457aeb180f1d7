//! Binary model checkpoints with a JSON sidecar of the training config.
//!
//! Layout (little-endian): 8-byte magic, `u32` version, `u32` d, `u32` D,
//! `u32` n-gram count then one `u32` per size, `u8` signed flag, `u64` hash
//! seed, `f64` temperature, then `d·D` `f64` weights in row-major order.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::encoder::{EncoderParams, FeatureHasher};
use crate::error::{Error, Result};
use crate::io::write_json;
use crate::scalar::Scalar;
use crate::train::TrainConfig;

pub const MAGIC: &[u8; 8] = b"GRDRLENC";
pub const VERSION: u32 = 1;

pub fn encode<F: Scalar>(params: &EncoderParams<F>) -> Vec<u8> {
    let h = params.hasher();
    let mut out = Vec::with_capacity(64 + 8 * params.dim() * params.num_buckets());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(params.num_buckets() as u32).to_le_bytes());
    out.extend_from_slice(&(h.n_gram_sizes.len() as u32).to_le_bytes());
    for &n in &h.n_gram_sizes {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    out.push(u8::from(h.signed));
    out.extend_from_slice(&h.hash_seed.to_le_bytes());
    out.extend_from_slice(&params.temperature().as_f64().to_le_bytes());
    for w in params.to_row_major() {
        out.extend_from_slice(&w.as_f64().to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.buf.len() {
            return Err(Error::Checkpoint(format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode<F: Scalar>(bytes: &[u8]) -> Result<EncoderParams<F>> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(8, "magic")? != MAGIC {
        return Err(Error::Checkpoint("not a model checkpoint (bad magic)".into()));
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let dim = c.u32("d")? as usize;
    let buckets = c.u32("D")? as usize;
    let count = c.u32("n-gram count")? as usize;
    if count > 64 {
        return Err(Error::Checkpoint(format!("implausible n-gram count {count}")));
    }
    let n_gram_sizes = (0..count)
        .map(|_| c.u32("n-gram size").map(|n| n as usize))
        .collect::<Result<Vec<_>>>()?;
    let signed = match c.take(1, "signed flag")?[0] {
        0 => false,
        1 => true,
        b => return Err(Error::Checkpoint(format!("bad signed flag {b}"))),
    };
    let hash_seed = c.u64("hash seed")?;
    let temperature = c.f64("temperature")?;
    let expected = dim
        .checked_mul(buckets)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Checkpoint("weight matrix size overflows".into()))?;
    if bytes.len() - c.pos != expected {
        return Err(Error::Checkpoint(format!(
            "expected {expected} weight bytes for {dim}x{buckets}, found {}",
            bytes.len() - c.pos
        )));
    }
    let weights: Vec<F> = c.buf[c.pos..]
        .chunks_exact(8)
        .map(|b| F::of(f64::from_le_bytes(b.try_into().unwrap())))
        .collect();
    let hasher = FeatureHasher {
        n_gram_sizes,
        num_buckets: buckets,
        hash_seed,
        signed,
    };
    EncoderParams::from_row_major(hasher, dim, F::of(temperature), &weights)
        .map_err(|e| Error::Checkpoint(e.to_string()))
}

/// `model.bin` → `model.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Write the checkpoint and, when given, its config sidecar.
pub fn save<F: Scalar>(path: &Path, params: &EncoderParams<F>, config: Option<&TrainConfig>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode(params)).map_err(|e| Error::io(path, e))?;
    if let Some(cfg) = config {
        write_json(&sidecar_path(path), cfg)?;
    }
    Ok(())
}

pub fn load<F: Scalar>(path: &Path) -> Result<EncoderParams<F>> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
