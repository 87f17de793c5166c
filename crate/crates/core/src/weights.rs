//! `MLCW1` weight archives: trained parameters, optimizer state and
//! provenance in one self-describing little-endian file.
//!
//! ```text
//! magic        5 bytes   "MLCW1"
//! manifest     u32 len + UTF-8 key-value document
//! params       u32 count, then blocks
//! optimizer    u8 flag (0 | 1); if 1: u32 len + key-value header,
//!              u32 count, then moment blocks
//! trailer      32 bytes  SHA-256 of every preceding byte
//!
//! block        u16 name len, name, u8 rank, rank x u32 dims,
//!              product(dims) x f32, row-major
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::PretrainedShape;
use crate::model::{ConfigTree, Value};
use crate::syntax::{parse_config, print_config};

pub const MAGIC: &[u8; 5] = b"MLCW1";

#[derive(Debug, Error, PartialEq)]
pub enum ArchiveError {
    #[error("not a weight archive (bad magic)")]
    BadMagic,
    #[error("weight archive truncated at byte {0}")]
    Truncated(usize),
    #[error("weight archive digest mismatch")]
    Digest,
    #[error("weight archive {0} block is malformed: {1}")]
    Malformed(&'static str, String),
    #[error("cannot read weight archive: {0}")]
    Io(String),
}

/// A named real tensor, `W0`, `b0`, `m/W0`, ...
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

impl ParamBlock {
    pub fn new(name: impl Into<String>, dims: Vec<u32>, data: Vec<f32>) -> Self {
        ParamBlock { name: name.into(), dims, data }
    }

    pub fn zeros_like(&self, name: impl Into<String>) -> Self {
        ParamBlock { name: name.into(), dims: self.dims.clone(), data: vec![0.0; self.data.len()] }
    }

    fn element_count(dims: &[u32]) -> usize {
        dims.iter().map(|d| *d as usize).product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveManifest {
    /// `[n_in, h1, ..., n_out]`.
    pub layer_sizes: Vec<u64>,
    /// One per weight layer: `relu`, `sigmoid`, `tanh`, `identity`, `softmax`.
    pub activations: Vec<String>,
    pub dataset_digest: String,
    pub epochs: u64,
    pub metric: f64,
    /// Remaining keys, e.g. `classes`, `input_shape`, `output_shape`.
    pub extra: ConfigTree,
}

impl ArchiveManifest {
    fn to_tree(&self) -> ConfigTree {
        let mut t = ConfigTree::new()
            .with("layer_sizes", Value::List(self.layer_sizes.iter().map(|s| Value::Int(*s as i64)).collect()))
            .with("activations", Value::List(self.activations.iter().map(|a| Value::Token(a.clone())).collect()))
            .with("dataset_digest", self.dataset_digest.as_str())
            .with("epochs", self.epochs as i64)
            .with("metric", self.metric);
        for (k, v) in self.extra.iter() {
            t.insert(k, v.clone());
        }
        t
    }

    fn from_tree(mut t: ConfigTree) -> Result<Self, ArchiveError> {
        let bad = |m: &str| ArchiveError::Malformed("manifest", m.to_string());
        let ints = |v: Option<Value>| -> Option<Vec<u64>> {
            v?.as_list()?.iter().map(|x| x.as_i64().and_then(|i| u64::try_from(i).ok())).collect()
        };
        let layer_sizes = ints(t.remove("layer_sizes")).ok_or_else(|| bad("layer_sizes"))?;
        let activations = t
            .remove("activations")
            .and_then(|v| v.as_list().map(|l| l.iter().filter_map(|a| a.as_text().map(str::to_string)).collect()))
            .ok_or_else(|| bad("activations"))?;
        let dataset_digest = match t.remove("dataset_digest") {
            Some(Value::Str(s)) => s,
            _ => return Err(bad("dataset_digest")),
        };
        let epochs = t.remove("epochs").and_then(|v| v.as_i64()).and_then(|e| u64::try_from(e).ok()).ok_or_else(|| bad("epochs"))?;
        let metric = t.remove("metric").and_then(|v| v.as_f64()).ok_or_else(|| bad("metric"))?;
        Ok(ArchiveManifest { layer_sizes, activations, dataset_digest, epochs, metric, extra: t })
    }

    fn shape_key(&self, key: &str, fallback: Option<u64>) -> Option<Vec<u64>> {
        match self.extra.get(key) {
            Some(v) => v.as_list()?.iter().map(|x| x.as_i64().and_then(|i| u64::try_from(i).ok())).collect(),
            None => fallback.map(|n| vec![n]),
        }
    }

    /// Input and output tensor shapes seen by an importing network.
    pub fn io_shape(&self) -> Option<PretrainedShape> {
        Some(PretrainedShape {
            input: self.shape_key("input_shape", self.layer_sizes.first().copied())?,
            output: self.shape_key("output_shape", self.layer_sizes.last().copied())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    /// `sgd` or `adam`.
    pub kind: String,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// First and second moments, `m/<param>` and `v/<param>` (adam only).
    pub moments: Vec<ParamBlock>,
}

impl OptimizerState {
    fn header(&self) -> ConfigTree {
        ConfigTree::new()
            .with("kind", Value::Token(self.kind.clone()))
            .with("step", self.step as i64)
            .with("learning_rate", self.learning_rate)
            .with("beta1", self.beta1)
            .with("beta2", self.beta2)
            .with("epsilon", self.epsilon)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightArchive {
    pub manifest: ArchiveManifest,
    pub params: Vec<ParamBlock>,
    pub optimizer: Option<OptimizerState>,
}

fn put_text(out: &mut Vec<u8>, text: &str) {
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
}

fn put_blocks(out: &mut Vec<u8>, blocks: &[ParamBlock]) {
    out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
    for b in blocks {
        out.extend_from_slice(&(b.name.len() as u16).to_le_bytes());
        out.extend_from_slice(b.name.as_bytes());
        out.push(b.dims.len() as u8);
        for d in &b.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &b.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ArchiveError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len()).ok_or(ArchiveError::Truncated(self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ArchiveError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ArchiveError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, ArchiveError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn text(&mut self, what: &'static str) -> Result<&'a str, ArchiveError> {
        let n = self.u32()? as usize;
        std::str::from_utf8(self.take(n)?).map_err(|e| ArchiveError::Malformed(what, e.to_string()))
    }

    fn tree(&mut self, what: &'static str) -> Result<ConfigTree, ArchiveError> {
        let text = self.text(what)?;
        match parse_config(text, what) {
            (Some(t), _) => Ok(t),
            (None, d) => Err(ArchiveError::Malformed(what, d.first().map(|d| d.message.clone()).unwrap_or_default())),
        }
    }

    fn blocks(&mut self) -> Result<Vec<ParamBlock>, ArchiveError> {
        let n = self.u32()?;
        let mut out = Vec::new();
        for _ in 0..n {
            let len = self.u16()? as usize;
            let name = std::str::from_utf8(self.take(len)?)
                .map_err(|e| ArchiveError::Malformed("parameter", e.to_string()))?
                .to_string();
            let rank = self.u8()?;
            let dims = (0..rank).map(|_| self.u32()).collect::<Result<Vec<_>, _>>()?;
            let count = ParamBlock::element_count(&dims);
            let raw = self.take(count.checked_mul(4).ok_or(ArchiveError::Truncated(self.pos))?)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            out.push(ParamBlock { name, dims, data });
        }
        Ok(out)
    }
}

impl WeightArchive {
    pub fn param(&self, name: &str) -> Option<&ParamBlock> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        put_text(&mut out, &print_config(&self.manifest.to_tree()));
        put_blocks(&mut out, &self.params);
        match &self.optimizer {
            None => out.push(0),
            Some(o) => {
                out.push(1);
                put_text(&mut out, &print_config(&o.header()));
                put_blocks(&mut out, &o.moments);
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<WeightArchive, ArchiveError> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(ArchiveError::BadMagic);
        }
        if bytes.len() < MAGIC.len() + 32 {
            return Err(ArchiveError::Truncated(bytes.len()));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != trailer {
            return Err(ArchiveError::Digest);
        }
        let mut r = Reader { bytes: body, pos: MAGIC.len() };
        let manifest = ArchiveManifest::from_tree(r.tree("manifest")?)?;
        let params = r.blocks()?;
        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let h = r.tree("optimizer")?;
                let bad = |k: &str| ArchiveError::Malformed("optimizer", k.to_string());
                let real = |k: &str| h.real_at(k).or_else(|| h.int_at(k).map(|i| i as f64)).ok_or_else(|| bad(k));
                Some(OptimizerState {
                    kind: h.get("kind").and_then(Value::as_text).ok_or_else(|| bad("kind"))?.to_string(),
                    step: h.int_at("step").and_then(|s| u64::try_from(s).ok()).ok_or_else(|| bad("step"))?,
                    learning_rate: real("learning_rate")?,
                    beta1: real("beta1")?,
                    beta2: real("beta2")?,
                    epsilon: real("epsilon")?,
                    moments: r.blocks()?,
                })
            }
            f => return Err(ArchiveError::Malformed("optimizer", format!("flag {f}"))),
        };
        if r.pos != body.len() {
            return Err(ArchiveError::Malformed("trailer", format!("{} unexpected bytes", body.len() - r.pos)));
        }
        Ok(WeightArchive { manifest, params, optimizer })
    }

    pub fn read(path: &Path) -> Result<WeightArchive, ArchiveError> {
        let bytes = std::fs::read(path).map_err(|e| ArchiveError::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_bytes())
    }

    /// Forward pass through the dense layers `W<i>` / `b<i>`, after the
    /// optional `pre.shift` / `pre.scale` input transform.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>, String> {
        let mut x: Vec<f64> = input.to_vec();
        if let (Some(shift), Some(scale)) = (self.param("pre.shift"), self.param("pre.scale")) {
            if shift.data.len() != x.len() || scale.data.len() != x.len() {
                return Err(format!("input width {} does not match transform width {}", x.len(), shift.data.len()));
            }
            for ((v, s), c) in x.iter_mut().zip(&shift.data).zip(&scale.data) {
                *v = (*v - *s as f64) / *c as f64;
            }
        }
        for (i, act) in self.manifest.activations.iter().enumerate() {
            let w = self.param(&format!("W{i}")).ok_or_else(|| format!("missing W{i}"))?;
            let b = self.param(&format!("b{i}")).ok_or_else(|| format!("missing b{i}"))?;
            let [rows, cols] = w.dims[..] else { return Err(format!("W{i} is not a matrix")) };
            let (rows, cols) = (rows as usize, cols as usize);
            if rows != x.len() || b.data.len() != cols {
                return Err(format!("layer {i} expects width {rows}, got {}", x.len()));
            }
            let mut y: Vec<f64> = b.data.iter().map(|v| *v as f64).collect();
            for (r, xv) in x.iter().enumerate() {
                for (c, yv) in y.iter_mut().enumerate() {
                    *yv += xv * w.data[r * cols + c] as f64;
                }
            }
            activate(act, &mut y)?;
            x = y;
        }
        Ok(x)
    }
}

fn activate(kind: &str, y: &mut [f64]) -> Result<(), String> {
    match kind {
        "identity" => {}
        "relu" => y.iter_mut().for_each(|v| *v = v.max(0.0)),
        "sigmoid" => y.iter_mut().for_each(|v| *v = 1.0 / (1.0 + (-*v).exp())),
        "tanh" => y.iter_mut().for_each(|v| *v = v.tanh()),
        "softmax" => {
            let max = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in y.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            y.iter_mut().for_each(|v| *v /= sum);
        }
        other => return Err(format!("unknown activation `{other}`")),
    }
    Ok(())
}

/// Shapes of a pretrained archive for `ImportPretrained`, `None` if the
/// file is missing or unreadable.
pub fn pretrained_shape(path: &Path) -> Option<PretrainedShape> {
    WeightArchive::read(path).ok()?.manifest.io_shape()
}
