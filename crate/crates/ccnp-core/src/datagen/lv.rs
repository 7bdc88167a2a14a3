//! Lotka-Volterra predator-prey trajectories integrated with fixed-step RK4.
//!
//! dy1/dx = alpha*y1 - beta*y1*y2
//! dy2/dx = delta*y1*y2 - gamma*y2

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Instantiation;
use crate::error::{CcnpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LvMode {
    /// Fixed interaction coefficients, random initial populations.
    Greek,
    /// Fixed initial populations, random interaction coefficients.
    Population,
}

/// Which (alpha, beta) assignment the Greek mode uses. The appendix table
/// and the main text disagree on the roles of alpha and beta; the appendix
/// ordering is the default and both stay available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreekOrder {
    /// alpha = 4/3, beta = 2/3
    #[default]
    Appendix,
    /// alpha = 2/3, beta = 4/3
    MainText,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LvConfig {
    pub mode: LvMode,
    pub y1_0: f64,
    pub y2_0: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub steps: usize,
    pub dt: f64,
}

impl LvConfig {
    fn validate(&self) -> Result<()> {
        let vals = [
            ("y1_0", self.y1_0),
            ("y2_0", self.y2_0),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("dt", self.dt),
        ];
        for (name, v) in vals {
            if v <= 0.0 {
                return Err(CcnpError::InvalidConfig(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        if self.steps == 0 {
            return Err(CcnpError::InvalidConfig("steps must be >= 1".into()));
        }
        Ok(())
    }

    /// The first integral V = delta*y1 - gamma*ln y1 + beta*y2 - alpha*ln y2,
    /// conserved along exact trajectories.
    pub fn conserved_quantity(&self, y1: f64, y2: f64) -> f64 {
        self.delta * y1 - self.gamma * y1.ln() + self.beta * y2 - self.alpha * y2.ln()
    }

    /// The non-trivial equilibrium (gamma/delta, alpha/beta).
    pub fn equilibrium(&self) -> (f64, f64) {
        (self.gamma / self.delta, self.alpha / self.beta)
    }
}

/// How instantiations are drawn for a meta-dataset: which quantities are
/// fixed and which are sampled, per mode.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LvSampling {
    pub mode: LvMode,
    #[serde(default)]
    pub greek_order: GreekOrder,
    pub steps: usize,
    pub dt: f64,
}

impl LvSampling {
    pub fn standard(mode: LvMode) -> Self {
        LvSampling {
            mode,
            greek_order: GreekOrder::default(),
            steps: 150,
            dt: 0.01,
        }
    }

    pub fn sample_config(&self, rng_seed: u64) -> Result<LvConfig> {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let config = match self.mode {
            LvMode::Greek => {
                let (alpha, beta) = match self.greek_order {
                    GreekOrder::Appendix => (4.0 / 3.0, 2.0 / 3.0),
                    GreekOrder::MainText => (2.0 / 3.0, 4.0 / 3.0),
                };
                LvConfig {
                    mode: self.mode,
                    y1_0: rng.gen_range(0.5..2.0),
                    y2_0: rng.gen_range(0.5..2.0),
                    alpha,
                    beta,
                    gamma: 1.0,
                    delta: 1.0,
                    steps: self.steps,
                    dt: self.dt,
                }
            }
            LvMode::Population => LvConfig {
                mode: self.mode,
                y1_0: 1.6,
                y2_0: 0.8,
                alpha: rng.gen_range(0.9..1.1),
                beta: rng.gen_range(0.05..0.15),
                gamma: rng.gen_range(1.25..1.75),
                delta: rng.gen_range(0.5..1.0),
                steps: self.steps,
                dt: self.dt,
            },
        };
        Ok(config)
    }
}

fn derivatives(c: &LvConfig, y1: f64, y2: f64) -> (f64, f64) {
    (
        c.alpha * y1 - c.beta * y1 * y2,
        c.delta * y1 * y2 - c.gamma * y2,
    )
}

/// Integrate a trajectory of `steps` points with fixed-step RK4.
/// Populations must stay above 1e-9, otherwise the run is reported as a
/// blow-up.
pub fn simulate_lv(config: &LvConfig, _rng_seed: u64) -> Result<Instantiation> {
    config.validate()?;
    let mut x = Vec::with_capacity(config.steps);
    let mut y = Vec::with_capacity(config.steps * 2);
    let (mut y1, mut y2) = (config.y1_0, config.y2_0);
    let h = config.dt;
    for step in 0..config.steps {
        if y1 < 1e-9 || y2 < 1e-9 {
            return Err(CcnpError::PopulationUnderflow { step });
        }
        x.push(step as f64 * h);
        y.push(y1);
        y.push(y2);
        let (k1a, k1b) = derivatives(config, y1, y2);
        let (k2a, k2b) = derivatives(config, y1 + 0.5 * h * k1a, y2 + 0.5 * h * k1b);
        let (k3a, k3b) = derivatives(config, y1 + 0.5 * h * k2a, y2 + 0.5 * h * k2b);
        let (k4a, k4b) = derivatives(config, y1 + h * k3a, y2 + h * k3b);
        y1 += h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
        y2 += h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
    }
    Ok(Instantiation {
        x,
        y,
        y_dim: 2,
        coeffs: vec![
            config.alpha,
            config.beta,
            config.gamma,
            config.delta,
            config.y1_0,
            config.y2_0,
        ],
        family_id: match config.mode {
            LvMode::Greek => "lv-greek".into(),
            LvMode::Population => "lv-population".into(),
        },
    })
}
