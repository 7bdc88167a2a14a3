//! Binary dataset cache with a JSON sidecar.
//!
//! Layout of `<name>.bin`: magic `CCNPDAT1`, version u32, record count u32,
//! then per-instantiation records (all integers and floats little-endian):
//! n_points u32, y_dim u32, n_coeffs u32, family-id length u32, x array,
//! y array (row-major), coeff array, family-id bytes. Re-generating with
//! the sidecar's spec and seed reproduces `<name>.bin` bitwise.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DatasetSpec, Instantiation, MetaDataset};
use crate::error::{CcnpError, Result};

const MAGIC: &[u8; 8] = b"CCNPDAT1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheMeta {
    pub spec: DatasetSpec,
    pub seed: u64,
    pub count: usize,
    pub split_ratio: (usize, usize, usize),
    pub split_sizes: (usize, usize, usize),
}

fn paths(base: &Path) -> (PathBuf, PathBuf) {
    (
        base.with_extension("bin"),
        base.with_extension("meta.json"),
    )
}

fn write_record(buf: &mut Vec<u8>, inst: &Instantiation) {
    buf.extend_from_slice(&(inst.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(inst.y_dim as u32).to_le_bytes());
    buf.extend_from_slice(&(inst.coeffs.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(inst.family_id.len() as u32).to_le_bytes());
    for v in inst.x.iter().chain(&inst.y).chain(&inst.coeffs) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(inst.family_id.as_bytes());
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u32(&mut self) -> Result<u32> {
        let b: [u8; 4] = self
            .data
            .get(self.pos..self.pos + 4)
            .ok_or_else(|| CcnpError::Dataset("truncated cache file".into()))?
            .try_into()
            .unwrap();
        self.pos += 4;
        Ok(u32::from_le_bytes(b))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let end = self.pos + 8 * n;
        let slice = self
            .data
            .get(self.pos..end)
            .ok_or_else(|| CcnpError::Dataset("truncated cache file".into()))?;
        self.pos = end;
        Ok(slice
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let slice = self
            .data
            .get(self.pos..end)
            .ok_or_else(|| CcnpError::Dataset("truncated cache file".into()))?;
        self.pos = end;
        Ok(slice)
    }
}

fn read_record(r: &mut Reader) -> Result<Instantiation> {
    let n_points = r.u32()? as usize;
    let y_dim = r.u32()? as usize;
    let n_coeffs = r.u32()? as usize;
    let id_len = r.u32()? as usize;
    let x = r.f64s(n_points)?;
    let y = r.f64s(n_points * y_dim)?;
    let coeffs = r.f64s(n_coeffs)?;
    let family_id = String::from_utf8(r.bytes(id_len)?.to_vec())
        .map_err(|_| CcnpError::Dataset("invalid family id in cache".into()))?;
    Ok(Instantiation {
        x,
        y,
        y_dim,
        coeffs,
        family_id,
    })
}

/// Write `<base>.bin` plus `<base>.meta.json`.
pub fn store_dataset(base: &Path, dataset: &MetaDataset, meta: &CacheMeta) -> Result<()> {
    let (bin_path, meta_path) = paths(base);
    if let Some(parent) = bin_path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(dataset.total() as u32).to_le_bytes());
    for inst in dataset
        .train
        .iter()
        .chain(&dataset.val)
        .chain(&dataset.test)
    {
        write_record(&mut buf, inst);
    }
    fs::File::create(&bin_path)?.write_all(&buf)?;
    let json = serde_json::to_vec_pretty(meta)?;
    fs::File::create(&meta_path)?.write_all(&json)?;
    Ok(())
}

/// Read a dataset back; split sizes come from the sidecar.
pub fn load_dataset(base: &Path) -> Result<(MetaDataset, CacheMeta)> {
    let (bin_path, meta_path) = paths(base);
    let meta: CacheMeta = serde_json::from_slice(&fs::read(&meta_path)?)?;
    let mut data = Vec::new();
    fs::File::open(&bin_path)?.read_to_end(&mut data)?;
    if data.len() < 16 || &data[..8] != MAGIC {
        return Err(CcnpError::Dataset(format!(
            "{} is not a dataset cache",
            bin_path.display()
        )));
    }
    let mut r = Reader {
        data: &data,
        pos: 8,
    };
    let version = r.u32()?;
    if version != VERSION {
        return Err(CcnpError::Dataset(format!(
            "unsupported cache version {version}"
        )));
    }
    let count = r.u32()? as usize;
    let (n_train, n_val, n_test) = meta.split_sizes;
    if n_train + n_val + n_test != count {
        return Err(CcnpError::Dataset(
            "sidecar split sizes disagree with record count".into(),
        ));
    }
    let mut all = Vec::with_capacity(count);
    for _ in 0..count {
        all.push(read_record(&mut r)?);
    }
    let mut it = all.into_iter();
    let train: Vec<_> = it.by_ref().take(n_train).collect();
    let val: Vec<_> = it.by_ref().take(n_val).collect();
    let test: Vec<_> = it.collect();
    Ok((MetaDataset { train, val, test }, meta))
}
