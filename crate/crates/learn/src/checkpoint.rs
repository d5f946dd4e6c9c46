//! Parameter checkpoints: a flat little-endian `f64` file plus a JSON
//! manifest describing where each network lives in it.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::NamedParams;
use crate::nn::{Net, NetSpec};

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] io::Error),
    #[error("checkpoint manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("checkpoint is inconsistent: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub spec: NetSpec,
    /// Offset into the binary file, in values.
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub agent: String,
    pub total: usize,
    pub networks: Vec<ManifestEntry>,
}

/// Paths of the binary and manifest for a stem such as `out/checkpoint`.
pub fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("json"))
}

pub fn save(stem: &Path, agent: &str, networks: &[NamedParams<'_>]) -> Result<Manifest, CheckpointError> {
    let mut bytes = Vec::new();
    let mut entries = Vec::with_capacity(networks.len());
    let mut offset = 0;
    for n in networks {
        for x in n.params {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        entries.push(ManifestEntry {
            name: n.name.clone(),
            spec: n.spec.clone(),
            offset,
            len: n.params.len(),
        });
        offset += n.params.len();
    }
    let manifest = Manifest {
        agent: agent.to_string(),
        total: offset,
        networks: entries,
    };
    let (bin, json) = paths(stem);
    fs::write(bin, bytes)?;
    fs::write(json, serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Loads every network as `(name, params)`.
pub fn load(stem: &Path) -> Result<(Manifest, Vec<(String, Vec<f64>)>), CheckpointError> {
    let (bin, json) = paths(stem);
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(json)?)?;
    let bytes = fs::read(bin)?;
    if bytes.len() != manifest.total * 8 {
        return Err(CheckpointError::Corrupt(format!(
            "binary holds {} bytes, manifest expects {} values",
            bytes.len(),
            manifest.total
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut out = Vec::with_capacity(manifest.networks.len());
    for e in &manifest.networks {
        let expected = Net::new(e.spec.clone()).num_params();
        if e.len != expected || e.offset + e.len > values.len() {
            return Err(CheckpointError::Corrupt(format!(
                "entry `{}` does not match its shape",
                e.name
            )));
        }
        out.push((e.name.clone(), values[e.offset..e.offset + e.len].to_vec()));
    }
    Ok((manifest, out))
}
