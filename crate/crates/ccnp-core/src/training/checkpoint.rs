//! Single-file parameter checkpoints.
//!
//! Layout: magic `CCNPCKPT`, u32 LE manifest length, JSON manifest (model
//! config, variant, and per-parameter name/shape/offset), then all parameter
//! values as f64 LE in manifest order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CcnpError;
use crate::model::{CcnpModel, ModelConfig, ModelVariant};
use crate::tensor::ParamStore;
use crate::Result;

const MAGIC: &[u8; 8] = b"CCNPCKPT";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the data section, counted in f64 elements.
    pub offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub model: ModelConfig,
    pub variant: ModelVariant,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub data: Vec<f64>,
}

pub fn save_checkpoint(
    path: &Path,
    store: &ParamStore,
    model: &ModelConfig,
    variant: ModelVariant,
) -> Result<()> {
    let mut entries = Vec::with_capacity(store.len());
    let mut data = Vec::new();
    for (_, p) in store.iter() {
        entries.push(ManifestEntry {
            name: p.name.clone(),
            shape: p.shape.clone(),
            offset: data.len(),
        });
        data.extend_from_slice(&p.value);
    }
    let manifest = CheckpointManifest {
        model: *model,
        variant,
        entries,
    };
    let json = serde_json::to_vec(&manifest)?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut file = fs::File::create(path)?;
    file.write_all(MAGIC)?;
    file.write_all(&(json.len() as u32).to_le_bytes())?;
    file.write_all(&json)?;
    let mut bytes = Vec::with_capacity(data.len() * 8);
    for v in &data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    file.write_all(&bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let raw = fs::read(path)?;
    if raw.len() < 12 || &raw[..8] != MAGIC {
        return Err(CcnpError::Checkpoint(format!(
            "{} is not a checkpoint",
            path.display()
        )));
    }
    let json_len = u32::from_le_bytes(raw[8..12].try_into().unwrap()) as usize;
    let data_start = 12 + json_len;
    if raw.len() < data_start || (raw.len() - data_start) % 8 != 0 {
        return Err(CcnpError::Checkpoint("truncated checkpoint".into()));
    }
    let manifest: CheckpointManifest = serde_json::from_slice(&raw[12..data_start])?;
    let data: Vec<f64> = raw[data_start..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let total: usize = manifest
        .entries
        .iter()
        .map(|e| e.shape.iter().product::<usize>())
        .sum();
    if total != data.len() {
        return Err(CcnpError::Checkpoint(
            "manifest shapes disagree with data length".into(),
        ));
    }
    Ok(Checkpoint { manifest, data })
}

impl Checkpoint {
    /// Rebuild the model and load the stored values, verifying that every
    /// parameter of the configured architecture is present with its shape.
    pub fn instantiate(&self) -> Result<(CcnpModel, ParamStore)> {
        let mut store = ParamStore::new(0);
        let model = CcnpModel::new(&mut store, self.manifest.model, self.manifest.variant)?;
        if self.manifest.entries.len() != store.len() {
            return Err(CcnpError::Checkpoint(format!(
                "checkpoint has {} parameters, architecture expects {}",
                self.manifest.entries.len(),
                store.len()
            )));
        }
        for entry in &self.manifest.entries {
            let id = store.lookup(&entry.name).ok_or_else(|| {
                CcnpError::Checkpoint(format!("unexpected parameter {}", entry.name))
            })?;
            let n: usize = entry.shape.iter().product();
            if store.get(id).shape != entry.shape {
                return Err(CcnpError::Checkpoint(format!(
                    "shape mismatch for {}: checkpoint {:?}, architecture {:?}",
                    entry.name,
                    entry.shape,
                    store.get(id).shape
                )));
            }
            store
                .get_mut(id)
                .value
                .copy_from_slice(&self.data[entry.offset..entry.offset + n]);
        }
        Ok((model, store))
    }
}
