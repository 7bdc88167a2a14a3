//! Gaussian-process draws: RBF, periodic, and noisy half-integer Matérn
//! kernels with jittered-Cholesky sampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Instantiation;
use crate::error::{CcnpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GpKernel {
    Rbf,
    Periodic,
    NoisyMatern,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GpKernelSpec {
    pub kind: GpKernel,
    pub lengthscale: f64,
    /// Period, used by the periodic kernel only.
    pub period: f64,
    /// Matérn smoothness; only half-integer values 0.5, 1.5, 2.5 are
    /// supported (closed forms, no Bessel evaluation needed).
    pub nu: f64,
    pub noise_std: f64,
}

impl GpKernelSpec {
    pub fn standard(kind: GpKernel) -> Self {
        GpKernelSpec {
            kind,
            lengthscale: 1.0,
            period: 1.0,
            nu: 2.5,
            noise_std: 0.02,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.lengthscale <= 0.0 {
            return Err(CcnpError::InvalidConfig("lengthscale must be > 0".into()));
        }
        if self.kind == GpKernel::Periodic && self.period <= 0.0 {
            return Err(CcnpError::InvalidConfig("period must be > 0".into()));
        }
        if self.kind == GpKernel::NoisyMatern {
            if self.nu <= 0.0 {
                return Err(CcnpError::InvalidConfig("nu must be > 0".into()));
            }
            if ![0.5, 1.5, 2.5].contains(&self.nu) {
                return Err(CcnpError::InvalidConfig(format!(
                    "only half-integer nu in {{0.5, 1.5, 2.5}} is supported, got {}",
                    self.nu
                )));
            }
        }
        if self.noise_std < 0.0 {
            return Err(CcnpError::InvalidConfig("noise_std must be >= 0".into()));
        }
        Ok(())
    }

    pub fn eval(&self, xi: f64, xj: f64) -> f64 {
        let d = (xi - xj).abs();
        let l = self.lengthscale;
        match self.kind {
            GpKernel::Rbf => (-d * d / (2.0 * l * l)).exp(),
            GpKernel::Periodic => {
                let s = (std::f64::consts::PI * d / self.period).sin();
                (-2.0 * s * s / (l * l)).exp()
            }
            GpKernel::NoisyMatern => {
                // closed forms for half-integer smoothness
                let r = (2.0 * self.nu).sqrt() * d / l;
                if self.nu == 0.5 {
                    (-r).exp()
                } else if self.nu == 1.5 {
                    (1.0 + r) * (-r).exp()
                } else {
                    (1.0 + r + r * r / 3.0) * (-r).exp()
                }
            }
        }
    }
}

/// Gram matrix (row-major n x n). For the noisy Matérn kernel the noise
/// variance sits on the diagonal as i.i.d. observation noise.
pub fn gp_gram(spec: &GpKernelSpec, x: &[f64]) -> Result<Vec<f64>> {
    spec.validate()?;
    if x.is_empty() {
        return Err(CcnpError::Dataset("gp_gram needs a non-empty grid".into()));
    }
    let n = x.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = spec.eval(x[i], x[j]);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
        if spec.kind == GpKernel::NoisyMatern {
            k[i * n + i] += spec.noise_std * spec.noise_std;
        }
    }
    Ok(k)
}

/// In-place lower Cholesky; fails on a non-positive pivot.
pub(crate) fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for p in 0..j {
                sum -= l[i * n + p] * l[j * n + p];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

pub(crate) const JITTER_START: f64 = 1e-10;
pub(crate) const JITTER_MAX: f64 = 1e-4;

/// Cholesky of `K + jitter I` with bounded jitter escalation
/// (1e-10 growing tenfold up to 1e-4).
pub(crate) fn jittered_cholesky(gram: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut jitter = JITTER_START;
    loop {
        let mut a = gram.to_vec();
        for i in 0..n {
            a[i * n + i] += jitter;
        }
        if let Some(l) = cholesky(&a, n) {
            return Ok(l);
        }
        jitter *= 10.0;
        if jitter > JITTER_MAX {
            return Err(CcnpError::CholeskyFailed {
                max_jitter: JITTER_MAX,
            });
        }
    }
}

/// Draw y ~ N(0, K + jitter I) on the given grid; deterministic per seed.
pub fn sample_gp_instantiation(
    spec: &GpKernelSpec,
    x: &[f64],
    rng_seed: u64,
) -> Result<Instantiation> {
    let n = x.len();
    let gram = gp_gram(spec, x)?;
    let l = jittered_cholesky(&gram, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut y = vec![0.0; n];
    for i in 0..n {
        for j in 0..=i {
            y[i] += l[i * n + j] * z[j];
        }
    }
    let coeffs = vec![rng_seed as f64];
    Ok(Instantiation {
        x: x.to_vec(),
        y,
        y_dim: 1,
        coeffs,
        family_id: format!("gp-{:?}", spec.kind).to_lowercase(),
    })
}
