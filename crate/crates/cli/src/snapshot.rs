//! Trained-parameter snapshots: `params.json` describes the tensors and
//! `params.fmap` holds every value concatenated into one `1 × N × 1` map.
//! Values are stored as f32, so a reloaded network matches the saved one to
//! single precision.

use std::path::Path;

use convmcd::model::ToyNet;
use serde::{Deserialize, Serialize};

use crate::fmap::Fmap;

pub const MANIFEST_FILE: &str = "params.json";
pub const DATA_FILE: &str = "params.fmap";
pub const FORMAT: &str = "convmcd-params";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotManifest {
    pub format: String,
    pub version: u32,
    pub data: String,
    pub variant: String,
    pub in_channels: usize,
    pub features: usize,
    pub total: usize,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Fmap(#[from] crate::fmap::FmapError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn manifest(net: &ToyNet) -> SnapshotManifest {
    let mut offset = 0;
    let tensors = net
        .parameter_names()
        .into_iter()
        .zip(net.parameters())
        .map(|(name, t)| {
            let entry = TensorEntry {
                name,
                shape: t.shape().to_vec(),
                offset,
            };
            offset += t.len();
            entry
        })
        .collect();
    SnapshotManifest {
        format: FORMAT.into(),
        version: 1,
        data: DATA_FILE.into(),
        variant: net.variant().to_string(),
        in_channels: net.in_channels(),
        features: net.head.config().in_channels(),
        total: offset,
        tensors,
    }
}

/// Writes `params.json` and `params.fmap` into `dir`.
pub fn write_snapshot(dir: &Path, net: &ToyNet) -> Result<(), SnapshotError> {
    let m = manifest(net);
    let values: Vec<f32> = net
        .parameters()
        .iter()
        .flat_map(|t| t.data().iter().map(|&v| v as f32))
        .collect();
    let width = u32::try_from(m.total)
        .map_err(|_| SnapshotError::Invalid("too many parameters for one map".into()))?;
    Fmap::new(1, width, 1, values)?.write_file(dir.join(DATA_FILE))?;
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&m)? + "\n")?;
    Ok(())
}

/// Rebuilds a network from a snapshot directory.
pub fn read_snapshot(dir: &Path) -> Result<ToyNet, SnapshotError> {
    let m: SnapshotManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    if m.format != FORMAT || m.version != 1 {
        return Err(SnapshotError::Invalid(format!(
            "unsupported snapshot {} v{}",
            m.format, m.version
        )));
    }
    let variant = m
        .variant
        .parse()
        .map_err(|e: convmcd::Error| SnapshotError::Invalid(e.to_string()))?;
    let mut net = ToyNet::new(m.in_channels, m.features, variant, 0)
        .map_err(|e| SnapshotError::Invalid(e.to_string()))?;
    if manifest(&net).tensors != m.tensors {
        return Err(SnapshotError::Invalid("tensor layout does not match the manifest".into()));
    }
    let data = Fmap::read_file(dir.join(&m.data))?;
    if data.channels() != 1 || data.height() != 1 || data.width() as usize != m.total {
        return Err(SnapshotError::Invalid(format!(
            "{} holds {}x{}x{} values, manifest expects 1x{}x1",
            m.data,
            data.channels(),
            data.width(),
            data.height(),
            m.total
        )));
    }
    let mut values = data.data().iter().map(|&v| f64::from(v));
    for t in net.parameters_mut() {
        for w in t.data_mut() {
            *w = values.next().expect("length checked above");
        }
    }
    Ok(net)
}
