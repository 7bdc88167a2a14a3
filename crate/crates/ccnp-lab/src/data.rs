//! Dataset cache resolution: datasets live under a cache root keyed by a hash
//! of their generating parameters and are regenerated on a miss.

use std::path::{Path, PathBuf};

use anyhow::Context;

use ccnp_core::datagen::{load_dataset, make_meta_dataset, store_dataset, CacheMeta, MetaDataset};

use crate::config::DataConfig;

/// `CCNP_LAB_DATA` overrides the cache root; otherwise `default` is used.
pub fn cache_root(default: &Path) -> PathBuf {
    match std::env::var_os("CCNP_LAB_DATA") {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => default.to_path_buf(),
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub fn dataset_base(root: &Path, data: &DataConfig) -> anyhow::Result<PathBuf> {
    let key = serde_json::to_vec(data).context("hashing dataset config")?;
    Ok(root.join(format!("ds-{:016x}", fnv1a(&key))))
}

/// Load the cached dataset for this config, generating and storing it first
/// when absent.
pub fn load_or_generate(root: &Path, data: &DataConfig) -> anyhow::Result<MetaDataset> {
    let base = dataset_base(root, data)?;
    if base.with_extension("bin").exists() {
        if let Ok((ds, _)) = load_dataset(&base) {
            return Ok(ds);
        }
    }
    let ds = make_meta_dataset(&data.spec, data.count, data.split_ratio, data.seed)
        .context("generating dataset")?;
    let meta = CacheMeta {
        spec: data.spec.clone(),
        seed: data.seed,
        count: data.count,
        split_ratio: data.split_ratio,
        split_sizes: (ds.train.len(), ds.val.len(), ds.test.len()),
    };
    store_dataset(&base, &ds, &meta).context("caching dataset")?;
    Ok(ds)
}
