//! Checkpoint persistence: versioned binary with named f32 tensors,
//! optimizer state, counters, per-worker generator states, and a trailing
//! checksum. All integers little-endian.

use std::path::Path;

use crate::grad::{AdamState, ParamSet, Tensor};
use crate::hash::fnv64;

use super::RlError;

const MAGIC: &[u8; 8] = b"ONAVCKP1";
const FORMAT_VERSION: u32 = 1;

/// Everything needed to resume training or run evaluation.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config_hash: u64,
    pub episodes_done: u64,
    pub params: ParamSet<f64>,
    pub adam: AdamState<f64>,
    pub worker_rng: Vec<[u64; 4]>,
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f32s(&mut self, t: &Tensor<f64>) {
        for &v in t.data() {
            self.buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], RlError> {
        if self.pos + n > self.buf.len() {
            return Err(RlError::CorruptCheckpoint("unexpected end of file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u16(&mut self) -> Result<u16, RlError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, RlError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, RlError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f64>, RlError> {
        let raw = self.take(4 * n)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}

pub fn encode(ckpt: &Checkpoint) -> Vec<u8> {
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);
    w.u64(ckpt.config_hash);
    w.u64(ckpt.episodes_done);
    w.u64(ckpt.params.version());
    w.u64(ckpt.adam.t);
    w.u32(ckpt.worker_rng.len() as u32);
    for state in &ckpt.worker_rng {
        for word in state {
            w.u64(*word);
        }
    }
    w.u32(ckpt.params.len() as u32);
    for (name, tensor) in ckpt.params.entries() {
        let bytes = name.as_bytes();
        w.u16(bytes.len() as u16);
        w.buf.extend_from_slice(bytes);
        w.u32(tensor.rows() as u32);
        w.u32(tensor.cols() as u32);
        w.f32s(tensor);
    }
    for t in &ckpt.adam.m {
        w.f32s(t);
    }
    for t in &ckpt.adam.v {
        w.f32s(t);
    }
    let checksum = fnv64(&w.buf);
    w.u64(checksum);
    w.buf
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, RlError> {
    if bytes.len() < MAGIC.len() + 8 {
        return Err(RlError::CorruptCheckpoint("file too short".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().unwrap());
    let computed = fnv64(body);
    if stored != computed {
        return Err(RlError::CorruptCheckpoint(format!(
            "checksum mismatch: stored {stored:#x}, computed {computed:#x}"
        )));
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(RlError::CorruptCheckpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(RlError::CorruptCheckpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let config_hash = r.u64()?;
    let episodes_done = r.u64()?;
    let param_version = r.u64()?;
    let adam_t = r.u64()?;
    let n_workers = r.u32()? as usize;
    let mut worker_rng = Vec::with_capacity(n_workers);
    for _ in 0..n_workers {
        let mut state = [0u64; 4];
        for word in &mut state {
            *word = r.u64()?;
        }
        worker_rng.push(state);
    }
    let n_tensors = r.u32()? as usize;
    let mut params = ParamSet::new();
    let mut shapes = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let name_len = r.u16()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| RlError::CorruptCheckpoint("bad tensor name".into()))?;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let data = r.f32s(rows * cols)?;
        shapes.push((rows, cols));
        params
            .register(
                &name,
                Tensor::new(vec![rows, cols], data)
                    .map_err(|e| RlError::CorruptCheckpoint(e.to_string()))?,
            )
            .map_err(|e| RlError::CorruptCheckpoint(e.to_string()))?;
    }
    params.set_version(param_version);
    let mut adam = AdamState::for_params(&params);
    adam.t = adam_t;
    for (slot, &(rows, cols)) in shapes.iter().enumerate() {
        adam.m[slot] = Tensor::new(vec![rows, cols], r.f32s(rows * cols)?)
            .map_err(|e| RlError::CorruptCheckpoint(e.to_string()))?;
    }
    for (slot, &(rows, cols)) in shapes.iter().enumerate() {
        adam.v[slot] = Tensor::new(vec![rows, cols], r.f32s(rows * cols)?)
            .map_err(|e| RlError::CorruptCheckpoint(e.to_string()))?;
    }
    if r.pos != body.len() {
        return Err(RlError::CorruptCheckpoint("trailing bytes".into()));
    }
    Ok(Checkpoint {
        config_hash,
        episodes_done,
        params,
        adam,
        worker_rng,
    })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), RlError> {
    std::fs::write(path, encode(ckpt))?;
    Ok(())
}

/// Load and, when `expect_config_hash` is given, refuse a mismatch.
pub fn load_checkpoint(
    path: &Path,
    expect_config_hash: Option<u64>,
) -> Result<Checkpoint, RlError> {
    let bytes = std::fs::read(path)?;
    let ckpt = decode(&bytes)?;
    if let Some(expected) = expect_config_hash {
        if expected != ckpt.config_hash {
            return Err(RlError::ConfigHashMismatch {
                expected,
                found: ckpt.config_hash,
            });
        }
    }
    Ok(ckpt)
}
