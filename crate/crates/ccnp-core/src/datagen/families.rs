//! Closed-form 1D function families with uniformly sampled coefficients.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{equally_spaced, Instantiation};
use crate::error::{CcnpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionFamily {
    Sinusoid,
    Exponential,
    Oscillator,
    Line,
}

impl FunctionFamily {
    pub fn evaluate(&self, alpha: f64, beta: f64, x: f64) -> f64 {
        match self {
            FunctionFamily::Sinusoid => alpha * (x - beta).sin(),
            FunctionFamily::Exponential => alpha * (x - beta).exp(),
            FunctionFamily::Oscillator => alpha * (x - beta).sin() * (-0.5 * x).exp(),
            FunctionFamily::Line => alpha * x + beta,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FunctionFamily::Sinusoid => "sinusoid",
            FunctionFamily::Exponential => "exponential",
            FunctionFamily::Oscillator => "oscillator",
            FunctionFamily::Line => "line",
        }
    }

    /// The x interval this family is sampled over.
    pub fn default_x_range(&self) -> (f64, f64) {
        match self {
            FunctionFamily::Sinusoid => (-std::f64::consts::PI, std::f64::consts::PI),
            FunctionFamily::Exponential => (-1.0, 4.0),
            FunctionFamily::Oscillator => (0.0, 5.0),
            FunctionFamily::Line => (0.0, 5.0),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FunctionFamilySpec {
    pub family: FunctionFamily,
    pub alpha_range: (f64, f64),
    pub beta_range: (f64, f64),
    pub x_range: (f64, f64),
}

impl FunctionFamilySpec {
    pub fn standard(family: FunctionFamily) -> Self {
        FunctionFamilySpec {
            family,
            alpha_range: (-1.0, 1.0),
            beta_range: (-0.5, 0.5),
            x_range: family.default_x_range(),
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("alpha_range", self.alpha_range),
            ("beta_range", self.beta_range),
            ("x_range", self.x_range),
        ] {
            if lo >= hi {
                return Err(CcnpError::InvalidConfig(format!(
                    "{name} must be non-degenerate, got ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }
}

/// Draw (alpha, beta) and evaluate the family's closed form on an equally
/// spaced grid.
pub fn sample_family_instantiation(
    spec: &FunctionFamilySpec,
    n_points: usize,
    rng_seed: u64,
) -> Result<Instantiation> {
    spec.validate()?;
    if n_points < 2 {
        return Err(CcnpError::InvalidConfig(
            "n_points must be at least 2".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let alpha = rng.gen_range(spec.alpha_range.0..spec.alpha_range.1);
    let beta = rng.gen_range(spec.beta_range.0..spec.beta_range.1);
    Ok(instantiate_family(spec, n_points, alpha, beta))
}

/// Deterministic evaluation for fixed coefficients.
pub(crate) fn instantiate_family(
    spec: &FunctionFamilySpec,
    n_points: usize,
    alpha: f64,
    beta: f64,
) -> Instantiation {
    let x = equally_spaced(spec.x_range, n_points);
    let y: Vec<f64> = x
        .iter()
        .map(|&xi| spec.family.evaluate(alpha, beta, xi))
        .collect();
    Instantiation {
        x,
        y,
        y_dim: 1,
        coeffs: vec![alpha, beta],
        family_id: spec.family.name().to_string(),
    }
}
