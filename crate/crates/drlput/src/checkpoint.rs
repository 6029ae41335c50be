//! Binary checkpoint format.
//!
//! Layout: magic bytes `DPUT`, format version as u32 little-endian, a u32
//! little-endian header length, a JSON header (schema, schema hash, grid,
//! architecture, tensor manifest, training metadata), then the parameter
//! blob as little-endian IEEE-754 f32 in manifest order. The manifest covers
//! the learnable parameters followed by the batch-norm running statistics.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::action::ActionGrid;
use crate::error::{Error, Result};
use crate::features::FeatureSchema;
use crate::net::{ArchConfig, PolicyNet, TensorSpec};

pub const MAGIC: &[u8; 4] = b"DPUT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct TrainMeta {
    pub seed: u64,
    pub steps: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema_hash: String,
    schema: FeatureSchema,
    grid: ActionGrid,
    arch: ArchConfig,
    manifest: Vec<TensorSpec>,
    metadata: TrainMeta,
}

fn full_manifest(net: &PolicyNet<f32>) -> Vec<TensorSpec> {
    let mut manifest = net.manifest.clone();
    let mut offset = net.params.len();
    for (name, len) in [("bn_running_mean", net.running_mean.len()), ("bn_running_var", net.running_var.len())] {
        manifest.push(TensorSpec { name: name.into(), shape: vec![len], offset });
        offset += len;
    }
    manifest
}

pub fn save(net: &PolicyNet<f32>, meta: TrainMeta, path: &Path) -> Result<()> {
    let header = Header {
        schema_hash: net.schema.hash(),
        schema: net.schema.clone(),
        grid: net.grid.clone(),
        arch: net.arch.clone(),
        manifest: full_manifest(net),
        metadata: meta,
    };
    let header_bytes = serde_json::to_vec(&header).map_err(|e| Error::Io(e.to_string()))?;
    let mut out = Vec::with_capacity(12 + header_bytes.len() + 4 * net.params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for p in net.params.iter().chain(&net.running_mean).chain(&net.running_var) {
        out.extend_from_slice(&p.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::Io(format!("checkpoint write {}: {e}", path.display())))
}

pub fn load(path: &Path) -> Result<(PolicyNet<f32>, TrainMeta)> {
    let bytes = fs::read(path).map_err(|e| Error::Io(format!("checkpoint read {}: {e}", path.display())))?;
    if bytes.len() < 12 || &bytes[0..4] != MAGIC {
        return Err(Error::Schema("checkpoint: bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Schema(format!(
            "checkpoint: unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + header_len {
        return Err(Error::Schema("checkpoint: truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&bytes[12..12 + header_len])
        .map_err(|e| Error::Schema(format!("checkpoint: malformed header: {e}")))?;
    if header.schema_hash != header.schema.hash() {
        return Err(Error::Schema("checkpoint: schema_hash does not match embedded schema".into()));
    }

    // Rebuild the expected layout and verify against the stored manifest.
    let mut net = PolicyNet::<f32>::init(header.schema, header.grid, header.arch, 0)?;
    let expected = full_manifest(&net);
    if header.manifest != expected {
        return Err(Error::Schema("checkpoint: tensor manifest does not match schema/grid/arch".into()));
    }

    let blob = &bytes[12 + header_len..];
    let total: usize = expected.iter().map(|t| t.len()).sum();
    if blob.len() != 4 * total {
        // Name the tensor the shortfall (or surplus) lands in.
        let have = blob.len() / 4;
        let culprit = expected
            .iter()
            .find(|t| have < t.offset + t.len())
            .map(|t| t.name.clone())
            .unwrap_or_else(|| "trailing data".into());
        return Err(Error::Schema(format!(
            "checkpoint: parameter blob holds {have} floats, expected {total} (at tensor '{culprit}')"
        )));
    }
    let floats: Vec<f32> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let n = net.params.len();
    let d = net.running_mean.len();
    net.params.copy_from_slice(&floats[..n]);
    net.running_mean.copy_from_slice(&floats[n..n + d]);
    net.running_var.copy_from_slice(&floats[n + d..n + 2 * d]);
    Ok((net, header.metadata))
}
