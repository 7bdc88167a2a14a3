//! Seedable generators for every dataset family, plus context/target
//! sampling. Generators are pure functions of (spec, seed): identical seeds
//! reproduce datasets bitwise.

mod cache;
mod families;
mod gp;
mod lv;
mod split;

pub use cache::{load_dataset, store_dataset, CacheMeta};
pub use families::{sample_family_instantiation, FunctionFamily, FunctionFamilySpec};
pub use gp::{gp_gram, sample_gp_instantiation, GpKernel, GpKernelSpec};
pub use lv::{simulate_lv, GreekOrder, LvConfig, LvMode, LvSampling};
pub use split::{sample_split, ContextTargetSplit, Phase};

use serde::{Deserialize, Serialize};

use crate::error::{CcnpError, Result};

/// One sampled function: a full (x, y) sequence plus its generating
/// coefficients. `y` is row-major `(len, y_dim)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instantiation {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub y_dim: usize,
    pub coeffs: Vec<f64>,
    pub family_id: String,
}

impl Instantiation {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn y_row(&self, i: usize) -> &[f64] {
        &self.y[i * self.y_dim..(i + 1) * self.y_dim]
    }
}

/// Everything needed to regenerate a meta-dataset deterministically.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Family {
        spec: FunctionFamilySpec,
        n_points: usize,
    },
    Gp {
        spec: GpKernelSpec,
        x_range: (f64, f64),
        n_points: usize,
    },
    Lv {
        sampling: LvSampling,
    },
}

impl DatasetSpec {
    fn sample(&self, seed: u64) -> Result<Instantiation> {
        match self {
            DatasetSpec::Family { spec, n_points } => {
                sample_family_instantiation(spec, *n_points, seed)
            }
            DatasetSpec::Gp {
                spec,
                x_range,
                n_points,
            } => {
                let x = equally_spaced(*x_range, *n_points);
                sample_gp_instantiation(spec, &x, seed)
            }
            DatasetSpec::Lv { sampling } => {
                let config = sampling.sample_config(seed)?;
                simulate_lv(&config, seed)
            }
        }
    }
}

pub fn equally_spaced(range: (f64, f64), n: usize) -> Vec<f64> {
    assert!(n >= 2, "need at least two grid points");
    let (lo, hi) = range;
    let step = (hi - lo) / (n as f64 - 1.0);
    (0..n).map(|i| lo + step * i as f64).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaDataset {
    pub train: Vec<Instantiation>,
    pub val: Vec<Instantiation>,
    pub test: Vec<Instantiation>,
}

impl MetaDataset {
    pub fn total(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }
}

/// Generate `count` instantiations and split them train/val/test by the
/// given ratio (default 9:1:1) without coefficient overlap between splits.
pub fn make_meta_dataset(
    spec: &DatasetSpec,
    count: usize,
    split_ratio: (usize, usize, usize),
    seed: u64,
) -> Result<MetaDataset> {
    let (a, b, c) = split_ratio;
    if a == 0 || b == 0 || c == 0 {
        return Err(CcnpError::InvalidConfig(
            "split ratio parts must be positive".into(),
        ));
    }
    if count < a + b + c {
        return Err(CcnpError::Dataset(format!(
            "count {count} too small for a {a}:{b}:{c} split"
        )));
    }
    let mut seen = std::collections::HashSet::new();
    let mut all = Vec::with_capacity(count);
    let mut stream = 0u64;
    while all.len() < count {
        let inst = spec.sample(seed.wrapping_add(stream.wrapping_mul(0x9e3779b97f4a7c15)))?;
        stream += 1;
        // no function overlap between splits: dedupe on the coefficient tuple
        let key: Vec<u64> = inst.coeffs.iter().map(|v| v.to_bits()).collect();
        if seen.insert(key) {
            all.push(inst);
        }
        if stream > 10 * count as u64 {
            return Err(CcnpError::Dataset(
                "could not draw enough distinct instantiations".into(),
            ));
        }
    }
    let total = a + b + c;
    let n_val = (count * b) / total;
    let n_test = (count * c) / total;
    let n_train = count - n_val - n_test;
    let mut it = all.into_iter();
    let train: Vec<_> = it.by_ref().take(n_train).collect();
    let val: Vec<_> = it.by_ref().take(n_val).collect();
    let test: Vec<_> = it.collect();
    Ok(MetaDataset { train, val, test })
}
