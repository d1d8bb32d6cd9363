//! Versioned binary checkpoint.
//!
//! Layout: the magic bytes, a little-endian `u32` version, a `u64` payload
//! length, the payload, and a SHA-256 of everything before it. Floats are
//! stored as raw bits so a round trip is exact. A file is parsed completely
//! before anything is returned, so a damaged file never yields partial state.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::autodiff::{ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::model::{LossTerms, ModelConfig};
use crate::rng::RngState;

use super::{StepLog, TrainConfig};

pub const CHECKPOINT_MAGIC: &[u8; 10] = b"DEMOLCKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Full state of a training run after `step` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: usize,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub params: ParamStore<f64>,
    /// Optimizer moments in the parameters' flat order.
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Optimizer updates applied.
    pub updates: u64,
    pub rng: RngState,
    pub history: Vec<StepLog>,
    /// Fingerprint of the molecules and perceived bonds trained on.
    pub dataset_digest: [u8; 32],
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }

    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.buf.extend_from_slice(b);
    }

    fn floats(&mut self, xs: &[f64]) {
        self.u64(xs.len() as u64);
        for &x in xs {
            self.f64(x);
        }
    }

    fn opt(&mut self, v: Option<f64>) {
        match v {
            Some(x) => {
                self.buf.push(1);
                self.f64(x);
            }
            None => self.buf.push(0),
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("truncated payload"))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| corrupt("length does not fit in memory"))
    }

    /// A count of items at least `item_bytes` each; rejects counts the
    /// remaining payload cannot hold before anything is allocated.
    fn count(&mut self, item_bytes: usize) -> Result<usize> {
        let n = self.usize()?;
        if n.saturating_mul(item_bytes.max(1)) > self.buf.len() - self.pos {
            return Err(corrupt("length exceeds payload"));
        }
        Ok(n)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.count(1)?;
        self.take(n)
    }

    fn string(&mut self) -> Result<String> {
        String::from_utf8(self.bytes()?.to_vec()).map_err(|_| corrupt("invalid UTF-8"))
    }

    fn floats(&mut self) -> Result<Vec<f64>> {
        let n = self.count(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    fn opt(&mut self) -> Result<Option<f64>> {
        match self.take(1)?[0] {
            0 => Ok(None),
            1 => Ok(Some(self.f64()?)),
            t => Err(corrupt(format!("bad option tag {t}"))),
        }
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::default();
        w.u64(self.step as u64);
        let json = |v: &dyn erased::Json| v.to_json().map_err(|e| corrupt(format!("config encoding: {e}")));
        w.bytes(json(&self.model_config)?.as_bytes());
        w.bytes(json(&self.train_config)?.as_bytes());
        w.u64(self.params.len() as u64);
        for (_, name, t) in self.params.iter() {
            w.bytes(name.as_bytes());
            w.u64(t.rows() as u64);
            w.u64(t.cols() as u64);
            w.floats(t.data());
        }
        w.floats(&self.m);
        w.floats(&self.v);
        w.u64(self.updates);
        w.buf.extend_from_slice(&self.rng.seed);
        w.u64(self.rng.stream);
        w.buf.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        w.u64(self.history.len() as u64);
        for log in &self.history {
            w.u64(log.step as u64);
            w.u64(log.example as u64);
            w.opt(log.loss.prop);
            w.opt(log.loss.mask);
            w.opt(log.loss.coord);
            w.opt(log.loss.bond);
            w.f64(log.loss.total);
            w.f64(log.grad_norm);
        }
        w.buf.extend_from_slice(&self.dataset_digest);

        let mut out = Vec::with_capacity(w.buf.len() + 64);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(w.buf.len() as u64).to_le_bytes());
        out.extend_from_slice(&w.buf);
        let sum = Sha256::digest(&out);
        out.extend_from_slice(&sum);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = CHECKPOINT_MAGIC.len() + 4 + 8;
        if bytes.len() < header + 32 || &bytes[..CHECKPOINT_MAGIC.len()] != CHECKPOINT_MAGIC {
            return Err(corrupt("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(corrupt(format!("unsupported version {version}, expected {CHECKPOINT_VERSION}")));
        }
        let len = u64::from_le_bytes(bytes[14..22].try_into().expect("8 bytes"));
        if Some(bytes.len() as u64) != len.checked_add((header + 32) as u64) {
            return Err(corrupt("file length does not match header"));
        }
        let (body, sum) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != sum {
            return Err(corrupt("checksum mismatch"));
        }
        let mut r = Reader { buf: &body[header..], pos: 0 };
        let step = r.usize()?;
        let model_config: ModelConfig =
            serde_json::from_str(&r.string()?).map_err(|e| corrupt(format!("model config: {e}")))?;
        let train_config: TrainConfig =
            serde_json::from_str(&r.string()?).map_err(|e| corrupt(format!("train config: {e}")))?;
        let n_params = r.count(8)?;
        let mut params = ParamStore::new();
        for _ in 0..n_params {
            let name = r.string()?;
            let (rows, cols) = (r.usize()?, r.usize()?);
            let data = r.floats()?;
            if rows.checked_mul(cols) != Some(data.len()) {
                return Err(corrupt(format!("parameter `{name}` has {} values for shape {rows}x{cols}", data.len())));
            }
            let t = Tensor::new(rows, cols, data).map_err(|e| corrupt(e.to_string()))?;
            params.add(name, t).map_err(|e| corrupt(e.to_string()))?;
        }
        let m = r.floats()?;
        let v = r.floats()?;
        let updates = r.u64()?;
        let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes"));
        let n_logs = r.count(8)?;
        let mut history = Vec::with_capacity(n_logs);
        for _ in 0..n_logs {
            let step = r.usize()?;
            let example = r.usize()?;
            let (prop, mask, coord, bond) = (r.opt()?, r.opt()?, r.opt()?, r.opt()?);
            let total = r.f64()?;
            let grad_norm = r.f64()?;
            history.push(StepLog { step, example, loss: LossTerms { prop, mask, coord, bond, total }, grad_norm });
        }
        let dataset_digest: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        if r.pos != r.buf.len() {
            return Err(corrupt("trailing bytes after payload"));
        }
        if m.len() != params.flat_len() || v.len() != params.flat_len() {
            return Err(corrupt("optimizer moments do not match the parameters"));
        }
        Ok(Self {
            step,
            model_config,
            train_config,
            params,
            m,
            v,
            updates,
            rng: RngState { seed, stream, word_pos },
            history,
            dataset_digest,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

mod erased {
    pub trait Json {
        fn to_json(&self) -> serde_json::Result<String>;
    }

    impl<T: serde::Serialize> Json for T {
        fn to_json(&self) -> serde_json::Result<String> {
            serde_json::to_string(self)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut params = ParamStore::new();
        params.add("a", Tensor::from_rows(&[vec![1.5, -0.0], vec![f64::MIN_POSITIVE, 3.0]]).unwrap()).unwrap();
        params.add("b", Tensor::scalar(0.1)).unwrap();
        Checkpoint {
            step: 7,
            model_config: ModelConfig::micro(),
            train_config: TrainConfig { lr: 0.003, ..TrainConfig::default() },
            params,
            m: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            v: vec![1e-9, 2e-9, 3e-9, 4e-9, 5e-9],
            updates: 7,
            rng: RngState { seed: [9; 32], stream: 1, word_pos: 1234 },
            history: vec![StepLog {
                step: 7,
                example: 2,
                loss: LossTerms { prop: Some(0.5), mask: None, coord: Some(1.0 / 3.0), bond: None, total: 0.8333 },
                grad_norm: 4.2,
            }],
            dataset_digest: [3; 32],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let bytes = c.to_bytes().unwrap();
        assert_eq!(&bytes[..10], CHECKPOINT_MAGIC);
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        let bits = |s: &ParamStore<f64>| s.to_flat().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.params), bits(&c.params));
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn every_single_byte_flip_is_rejected() {
        let bytes = sample().to_bytes().unwrap();
        for i in 0..bytes.len() {
            let mut bad = bytes.clone();
            bad[i] ^= 0x01;
            assert!(Checkpoint::from_bytes(&bad).is_err(), "flip at byte {i} accepted");
        }
    }

    #[test]
    fn truncation_and_version_are_rejected() {
        let bytes = sample().to_bytes().unwrap();
        for cut in [0, 5, 22, bytes.len() / 2, bytes.len() - 1] {
            assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err());
        }
        let mut future = bytes.clone();
        future[10..14].copy_from_slice(&2u32.to_le_bytes());
        let err = Checkpoint::from_bytes(&future).unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");
    }
}
