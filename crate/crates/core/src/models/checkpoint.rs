//! Checkpoint container: a JSON header followed by little-endian `f32`
//! parameter blocks.
//!
//! ```text
//! "AUXN" | u32 version | u64 header_len | header (UTF-8 JSON)
//! per block: u32 rank | rank x u32 extent | prod(extent) x f32
//! ```
//!
//! Blocks appear in layer order: each layer's trainable tensors, then for
//! batchnorm layers the running mean and variance.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{LayerParams, ModelParams};
use super::spec::ArchitectureSpec;
use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::layers::{RunningStats, BN_EPS, BN_MOMENTUM};
use crate::sparsity::CumulativePenaltyState;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"AUXN";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub bn_eps: f64,
    pub bn_momentum: f64,
    pub fixed_bank_k: usize,
}

impl Constants {
    pub fn current(spec: &ArchitectureSpec) -> Self {
        Constants {
            bn_eps: BN_EPS,
            bn_momentum: BN_MOMENTUM,
            fixed_bank_k: spec.fixed_bank.len(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    spec: ArchitectureSpec,
    constants: Constants,
    norm_stats: Option<NormStats>,
    penalty: Option<CumulativePenaltyState>,
    bn_updates: Vec<u64>,
    blocks: Vec<BlockInfo>,
}

#[derive(Serialize, Deserialize)]
struct BlockInfo {
    name: String,
    shape: Vec<usize>,
}

/// A trained model with the context needed to reuse it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub spec: ArchitectureSpec,
    pub params: ModelParams<f64>,
    pub norm_stats: Option<NormStats>,
    pub penalty: Option<CumulativePenaltyState>,
}

fn fmt_err(detail: impl Into<String>) -> Error {
    Error::Format {
        what: "checkpoint",
        detail: detail.into(),
    }
}

fn blocks(params: &ModelParams<f64>) -> Vec<(String, &Tensor<f64>)> {
    let mut out = Vec::new();
    for (i, layer) in params.layers.iter().enumerate() {
        let names = match layer {
            LayerParams::Combination { .. } => ["omega", "b"],
            LayerParams::Conv { .. } | LayerParams::Linear { .. } => ["w", "b"],
            LayerParams::BatchNorm { .. } => ["gamma", "beta"],
        };
        for (n, t) in names.iter().zip(layer.trainable()) {
            out.push((format!("layer{i}.{n}"), t));
        }
        if let LayerParams::BatchNorm { running, .. } = layer {
            out.push((format!("layer{i}.running_mean"), &running.mean));
            out.push((format!("layer{i}.running_var"), &running.var));
        }
    }
    out
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.params.check_against(&self.spec)?;
        let blocks = blocks(&self.params);
        let header = Header {
            format_version: CHECKPOINT_VERSION,
            spec: self.spec.clone(),
            constants: Constants::current(&self.spec),
            norm_stats: self.norm_stats.clone(),
            penalty: self.penalty.clone(),
            bn_updates: self
                .params
                .layers
                .iter()
                .filter_map(|l| match l {
                    LayerParams::BatchNorm { running, .. } => Some(running.updates),
                    _ => None,
                })
                .collect(),
            blocks: blocks
                .iter()
                .map(|(n, t)| BlockInfo {
                    name: n.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| fmt_err(e.to_string()))?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &blocks {
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &e in t.shape() {
                out.extend_from_slice(&(e as u32).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(fmt_err("bad magic"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(fmt_err(format!("unsupported version {version}")));
        }
        let hlen = usize::try_from(r.u64()?).map_err(|_| fmt_err("header length overflow"))?;
        let header: Header = serde_json::from_slice(r.take(hlen)?).map_err(|e| fmt_err(format!("header: {e}")))?;
        if header.format_version != version {
            return Err(fmt_err("header version disagrees with preamble"));
        }
        header.spec.validate()?;

        let mut params = super::params::build::<f64>(&header.spec, 0)?;
        let mut tensors = Vec::with_capacity(header.blocks.len());
        for info in &header.blocks {
            let rank = r.u32()? as usize;
            if rank == 0 || rank > 3 {
                return Err(fmt_err(format!("block {} has rank {rank}", info.name)));
            }
            let shape: Vec<usize> = (0..rank).map(|_| r.u32().map(|v| v as usize)).collect::<Result<_>>()?;
            if shape != info.shape {
                return Err(fmt_err(format!("block {} shape {shape:?} != header {:?}", info.name, info.shape)));
            }
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(4).ok_or_else(|| fmt_err("block size overflow"))?)?;
            let data: Vec<f64> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            tensors.push(Tensor::new(shape, data).map_err(|e| fmt_err(format!("block {}: {e}", info.name)))?);
        }
        if r.pos != bytes.len() {
            return Err(fmt_err(format!("{} trailing bytes", bytes.len() - r.pos)));
        }

        let mut it = tensors.into_iter();
        let mut next = |name: &str| it.next().ok_or_else(|| fmt_err(format!("missing block for {name}")));
        let mut bn_updates = header.bn_updates.iter();
        for layer in params.layers.iter_mut() {
            match layer {
                LayerParams::Combination { omega, b } => {
                    *omega = next("omega")?;
                    *b = next("b")?;
                }
                LayerParams::Conv { w, b } | LayerParams::Linear { w, b } => {
                    *w = next("w")?;
                    *b = next("b")?;
                }
                LayerParams::BatchNorm { gamma, beta, running } => {
                    *gamma = next("gamma")?;
                    *beta = next("beta")?;
                    *running = RunningStats {
                        mean: next("running_mean")?,
                        var: next("running_var")?,
                        updates: *bn_updates.next().ok_or_else(|| fmt_err("missing batchnorm update count"))?,
                    };
                }
            }
        }
        if next("end").is_ok() {
            return Err(fmt_err("more blocks than the architecture has tensors"));
        }
        params.check_against(&header.spec)?;
        Ok(Checkpoint {
            spec: header.spec,
            params,
            norm_stats: header.norm_stats,
            penalty: header.penalty,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            fmt_err(format!("truncated: wanted {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build, ModelKind};

    #[test]
    fn round_trip_is_f32_exact() {
        let spec = ArchitectureSpec::vgg(ModelKind::VGG13BN, 2).with_width(1.0 / 64.0, 8);
        let params = build::<f64>(&spec, 5).unwrap();
        let ck = Checkpoint {
            spec: spec.clone(),
            params: params.clone(),
            norm_stats: None,
            penalty: Some(CumulativePenaltyState::new(4)),
        };
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.spec, spec);
        assert_eq!(back.penalty, ck.penalty);
        for (a, b) in back.params.trainable().iter().zip(params.trainable()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn corruption_is_detected() {
        let spec = ArchitectureSpec::new(ModelKind::LF, 3, 8);
        let ck = Checkpoint {
            params: build::<f64>(&spec, 1).unwrap(),
            spec,
            norm_stats: None,
            penalty: None,
        };
        let bytes = ck.to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }
}
