//! Binary checkpoint layout, all integers and floats little-endian:
//!
//! ```text
//! b"MDQNCKPT"            magic
//! u32                    format version
//! u32 n, n x u32         layer widths
//! f64 x n_params         evaluate network, per layer: W row-major then b
//! f64 x n_params         target network, same order
//! f64 x n_in, f64 x n_in feature min, feature max
//! u64                    training steps taken
//! f64                    exploration rate at save time
//! u64 len, len bytes     agent configuration as JSON
//! ```

use std::fs;
use std::path::Path;

use super::dqn::{greedy, AgentConfig, Normalizer};
use super::nn::QNetwork;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MDQNCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: QNetwork,
    pub target: QNetwork,
    pub norm: Normalizer,
    pub config: AgentConfig,
    pub step: u64,
    pub epsilon: f64,
}

impl Checkpoint {
    /// Greedy action for raw (unnormalised) features.
    pub fn act(&self, raw_features: &[f64]) -> Result<usize> {
        if raw_features.len() != self.net.n_inputs() {
            return Err(Error::Dimension {
                expected: self.net.n_inputs(),
                got: raw_features.len(),
            });
        }
        Ok(greedy(&self.net, &self.norm.apply(raw_features)))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let widths = self.net.widths();
        out.extend_from_slice(&(widths.len() as u32).to_le_bytes());
        for w in &widths {
            out.extend_from_slice(&(*w as u32).to_le_bytes());
        }
        for net in [&self.net, &self.target] {
            for p in net.params() {
                out.extend_from_slice(&p.to_le_bytes());
            }
        }
        for v in self.norm.min.iter().chain(&self.norm.max) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.epsilon.to_le_bytes());
        let json = serde_json::to_vec(&self.config).expect("config serializes");
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let n = r.u32()? as usize;
        if n > 64 {
            return Err(Error::Checkpoint(format!("implausible layer count {n}")));
        }
        let widths = (0..n).map(|_| r.u32().map(|w| w as usize)).collect::<Result<Vec<_>>>()?;
        let mut net = QNetwork::zeros(&widths).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut target = net.clone();
        for p in net.params_mut() {
            *p = r.f64()?;
        }
        for p in target.params_mut() {
            *p = r.f64()?;
        }
        let n_in = widths[0];
        let min = (0..n_in).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let max = (0..n_in).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let step = r.u64()?;
        let epsilon = r.f64()?;
        let len = r.u64()? as usize;
        let config = serde_json::from_slice(r.take(len)?)
            .map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Checkpoint {
            net,
            target,
            norm: Normalizer { min, max },
            config,
            step,
            epsilon,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
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

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
