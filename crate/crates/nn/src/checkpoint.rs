//! Binary checkpoint container.
//!
//! Layout (all integers little-endian `u64`, reals little-endian `f32`):
//!
//! ```text
//! "PKTSEER1"
//! len, config document (UTF-8 `key=value` lines)
//! repeated until EOF:
//!   name_len, name bytes, rank, dims[rank], data[product(dims)]
//! ```
//!
//! The configuration document carries the [`ModelConfig`] fields followed by
//! free-form metadata keys in sorted order.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::tensor::{ModelConfig, ModelParams, Tensor};
use crate::NnError;

pub const MAGIC: &[u8; 8] = b"PKTSEER1";

const CONFIG_KEYS: [&str; 8] = [
    "vocab_size",
    "d_model",
    "n_heads",
    "n_enc_layers",
    "n_dec_layers",
    "d_ff",
    "max_seq_len",
    "dropout_prob",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub metadata: BTreeMap<String, String>,
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    params: &ModelParams,
    metadata: &BTreeMap<String, String>,
) -> Result<(), NnError> {
    let mut doc = params.config().to_document();
    for (k, v) in metadata {
        if CONFIG_KEYS.contains(&k.as_str()) || k.contains(['=', '\n']) || v.contains('\n') {
            return Err(NnError::Checkpoint(format!("invalid metadata entry {k:?}")));
        }
        doc.push_str(&format!("{k}={v}\n"));
    }
    w.write_all(MAGIC)?;
    w.write_all(&(doc.len() as u64).to_le_bytes())?;
    w.write_all(doc.as_bytes())?;
    for (name, t) in params.iter() {
        w.write_all(&(name.len() as u64).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u64).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.numel() * 4);
        for &x in t.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

/// Serializes to an in-memory buffer.
pub fn checkpoint_bytes(params: &ModelParams, metadata: &BTreeMap<String, String>) -> Result<Vec<u8>, NnError> {
    let mut out = Vec::new();
    write_checkpoint(&mut out, params, metadata)?;
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], NnError> {
        if self.buf.len() - self.pos < n {
            return Err(NnError::Checkpoint(format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64, NnError> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn len(&mut self, what: &str) -> Result<usize, NnError> {
        let n = self.u64(what)?;
        usize::try_from(n)
            .ok()
            .filter(|&n| n <= self.buf.len())
            .ok_or_else(|| NnError::Checkpoint(format!("implausible {what} {n}")))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint, NnError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(8, "magic")? != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let doc_len = c.len("config length")?;
    let doc = std::str::from_utf8(c.take(doc_len, "config document")?)
        .map_err(|_| NnError::Checkpoint("config document is not UTF-8".into()))?;
    let pairs: Vec<(&str, &str)> = doc
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split_once('=')
                .ok_or_else(|| NnError::Checkpoint(format!("bad config line {l:?}")))
        })
        .collect::<Result<_, _>>()?;
    let config = ModelConfig::from_pairs(pairs.iter().copied())?;
    let metadata = pairs
        .iter()
        .filter(|(k, _)| !CONFIG_KEYS.contains(k))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();

    let mut params = ModelParams::new(config);
    while !c.done() {
        let name_len = c.len("name length")?;
        let name = std::str::from_utf8(c.take(name_len, "name")?)
            .map_err(|_| NnError::Checkpoint("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = c.len("rank")?;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(c.len("dimension")?);
        }
        let numel = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| NnError::Checkpoint(format!("{name}: dimensions overflow")))?;
        let raw = c.take(numel.saturating_mul(4), "tensor data")?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        params.insert(name, Tensor::new(dims, data)?)?;
    }
    Ok(Checkpoint { params, metadata })
}
