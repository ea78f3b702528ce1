//! Binary checkpoint layout, all integers little-endian:
//!
//! ```text
//! "NUMPROBE1"            9 bytes
//! version                u32
//! header length          u64, then that many bytes of JSON
//!                        {architecture, labels, seed, meta}
//! layer count            u32
//! per layer:             u64 weight count, f32 weights,
//!                        u64 bias count, f32 biases
//! ```

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ArchitectureSpec, LabelMap, ModelCheckpoint, NetError, Network, TrainingMeta};

pub const CHECKPOINT_MAGIC: &[u8; 9] = b"NUMPROBE1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    architecture: ArchitectureSpec,
    labels: LabelMap,
    seed: u64,
    meta: TrainingMeta,
}

pub fn encode_checkpoint(model: &ModelCheckpoint) -> Vec<u8> {
    let header = serde_json::to_vec(&Header {
        architecture: model.net.arch.clone(),
        labels: model.labels.clone(),
        seed: model.seed,
        meta: model.meta.clone(),
    })
    .expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(model.net.params.len() as u32).to_le_bytes());
    for p in &model.net.params {
        for arr in [&p.weights, &p.biases] {
            out.extend_from_slice(&(arr.len() as u64).to_le_bytes());
            for v in arr.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], NetError> {
        if self.bytes.len() - self.at < n {
            return Err(NetError::Format(format!(
                "truncated: {what} needs {n} bytes at offset {}, {} remain",
                self.at,
                self.bytes.len() - self.at
            )));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, NetError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64, NetError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f32s(&mut self, expected: usize, what: &str) -> Result<Vec<f32>, NetError> {
        let n = self.u64(what)?;
        if n != expected as u64 {
            return Err(NetError::Format(format!("{what}: stored length {n}, architecture needs {expected}")));
        }
        let raw = self.take(expected * 4, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelCheckpoint, NetError> {
    let mut c = Cursor { bytes, at: 0 };
    let magic = c.take(CHECKPOINT_MAGIC.len(), "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(NetError::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(CHECKPOINT_MAGIC)
        )));
    }
    let version = c.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(NetError::Format(format!(
            "unsupported version {version} (this build reads version {CHECKPOINT_VERSION})"
        )));
    }
    let hlen = c.u64("header length")?;
    if hlen > (bytes.len() - c.at) as u64 {
        return Err(NetError::Format(format!("truncated: header claims {hlen} bytes")));
    }
    let header: Header = serde_json::from_slice(c.take(hlen as usize, "header")?)
        .map_err(|e| NetError::Format(format!("header: {e}")))?;
    header
        .architecture
        .validate()
        .map_err(|e| NetError::Format(format!("stored architecture: {e}")))?;
    if header.architecture.classes() != header.labels.len() {
        return Err(NetError::Format("label count does not match the output layer".into()));
    }
    let mut net = Network::<f32>::zeros(header.architecture);
    let layers = c.u32("layer count")? as usize;
    if layers != net.params.len() {
        return Err(NetError::Format(format!(
            "stored {layers} layers, architecture has {}",
            net.params.len()
        )));
    }
    for (i, p) in net.params.iter_mut().enumerate() {
        p.weights = c.f32s(p.weights.len(), &format!("layer {i} weights"))?;
        p.biases = c.f32s(p.biases.len(), &format!("layer {i} biases"))?;
    }
    if c.at != bytes.len() {
        return Err(NetError::Format(format!("{} trailing bytes", bytes.len() - c.at)));
    }
    Ok(ModelCheckpoint {
        net,
        labels: header.labels,
        seed: header.seed,
        meta: header.meta,
    })
}

pub fn save_checkpoint(model: &ModelCheckpoint, path: &Path) -> Result<(), NetError> {
    let mut f = BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&encode_checkpoint(model))?;
    f.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint, NetError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_checkpoint(&bytes)
}
