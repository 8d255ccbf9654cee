//! Parameter snapshots: a flat little-endian `f64` stream (`<stem>.bin`) plus
//! a JSON sidecar (`<stem>.json`) describing each block's shape and role.
//!
//! Each block is stored as its weights (row-major) followed by its biases.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::layer::{BernoulliLayer, Encoding, Linear, SoftmaxLayer};
use super::net::StochasticNet;
use crate::error::{Error, Result};

pub const SNAPSHOT_FORMAT: &str = "hnca-params-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockKind {
    Bernoulli,
    Softmax,
    Decoder,
    Prior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub name: String,
    pub kind: BlockKind,
    pub n_out: usize,
    pub n_in: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoding: Option<Encoding>,
    /// Offset of the block in the stream, counted in `f64` values.
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotManifest {
    pub format: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_dim: Option<usize>,
    pub blocks: Vec<BlockSpec>,
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// A named block ready to be written.
pub struct Block<'a> {
    pub name: String,
    pub kind: BlockKind,
    pub encoding: Option<Encoding>,
    pub linear: &'a Linear,
}

pub fn write_blocks(stem: &Path, context_dim: Option<usize>, blocks: &[Block<'_>]) -> Result<()> {
    let mut bytes = Vec::new();
    let mut specs = Vec::with_capacity(blocks.len());
    let mut offset = 0;
    for b in blocks {
        let len = b.linear.num_params();
        for v in b.linear.weights.iter().chain(&b.linear.bias) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        specs.push(BlockSpec {
            name: b.name.clone(),
            kind: b.kind,
            n_out: b.linear.n_out,
            n_in: b.linear.n_in,
            encoding: b.encoding,
            offset,
            len,
        });
        offset += len;
    }
    let manifest = SnapshotManifest {
        format: SNAPSHOT_FORMAT.to_string(),
        context_dim,
        blocks: specs,
    };
    let bin = with_ext(stem, "bin");
    let json = with_ext(stem, "json");
    fs::write(&bin, &bytes).map_err(|e| Error::io(&bin, e))?;
    fs::write(&json, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&json, e))?;
    Ok(())
}

pub fn read_blocks(stem: &Path) -> Result<(SnapshotManifest, Vec<Linear>)> {
    let json = with_ext(stem, "json");
    let bin = with_ext(stem, "bin");
    let manifest: SnapshotManifest =
        serde_json::from_slice(&fs::read(&json).map_err(|e| Error::io(&json, e))?)?;
    if manifest.format != SNAPSHOT_FORMAT {
        return Err(Error::Format {
            path: json,
            offset: 0,
            detail: format!("unknown snapshot format {:?}", manifest.format),
        });
    }
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format {
            path: bin,
            offset: bytes.len() as u64,
            detail: "stream length is not a multiple of 8".into(),
        });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let mut linears = Vec::with_capacity(manifest.blocks.len());
    for spec in &manifest.blocks {
        let n_w = spec.n_out * spec.n_in;
        if spec.len != n_w + spec.n_out || spec.offset + spec.len > values.len() {
            return Err(Error::Format {
                path: bin.clone(),
                offset: (spec.offset * 8) as u64,
                detail: format!(
                    "block {:?} needs {} values at offset {}, stream holds {}",
                    spec.name,
                    n_w + spec.n_out,
                    spec.offset,
                    values.len()
                ),
            });
        }
        let chunk = &values[spec.offset..spec.offset + spec.len];
        if spec.kind == BlockKind::Prior && spec.n_in == 0 {
            // A bias-only block.
            linears.push(Linear {
                n_in: 0,
                n_out: spec.n_out,
                weights: Vec::new(),
                bias: chunk.to_vec(),
            });
            continue;
        }
        linears.push(Linear::from_parts(
            spec.n_in,
            spec.n_out,
            chunk[..n_w].to_vec(),
            chunk[n_w..].to_vec(),
        )?);
    }
    Ok((manifest, linears))
}

pub fn save_net(net: &StochasticNet, stem: &Path) -> Result<()> {
    let mut blocks: Vec<Block<'_>> = net
        .hidden
        .iter()
        .enumerate()
        .map(|(k, l)| Block {
            name: format!("hidden.{k}"),
            kind: BlockKind::Bernoulli,
            encoding: Some(l.encoding),
            linear: &l.linear,
        })
        .collect();
    if let Some(h) = &net.head {
        blocks.push(Block {
            name: "head".into(),
            kind: BlockKind::Softmax,
            encoding: None,
            linear: &h.linear,
        });
    }
    write_blocks(stem, Some(net.context_dim), &blocks)
}

pub fn load_net(stem: &Path) -> Result<StochasticNet> {
    let (manifest, linears) = read_blocks(stem)?;
    let context_dim = manifest
        .context_dim
        .ok_or_else(|| Error::config("snapshot sidecar lacks context_dim"))?;
    let mut hidden = Vec::new();
    let mut head = None;
    for (spec, lin) in manifest.blocks.iter().zip(linears) {
        match spec.kind {
            BlockKind::Bernoulli => {
                let enc = spec
                    .encoding
                    .ok_or_else(|| Error::config(format!("block {:?} lacks an encoding", spec.name)))?;
                hidden.push(BernoulliLayer::new(lin, enc));
            }
            BlockKind::Softmax => head = Some(SoftmaxLayer::new(lin)?),
            other => {
                return Err(Error::config(format!(
                    "block {:?} of kind {other:?} does not belong to a stochastic network",
                    spec.name
                )))
            }
        }
    }
    StochasticNet::new(context_dim, hidden, head)
}
