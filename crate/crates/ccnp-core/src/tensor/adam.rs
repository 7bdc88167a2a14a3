use std::collections::HashMap;

use crate::error::Result;
use crate::tensor::ParamStore;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are allocated lazily per
/// parameter; the step count is tracked per parameter so that optimizers
/// stepping disjoint groups stay independent.
#[derive(Debug, Default)]
pub struct Adam {
    pub config: AdamConfig,
    state: HashMap<usize, MomentState>,
}

#[derive(Debug, Clone)]
struct MomentState {
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            state: HashMap::new(),
        }
    }

    /// Apply one update to the listed parameters. Errors if any listed
    /// parameter has no populated gradient. Gradients are left in place;
    /// the caller decides when to zero them.
    pub fn step(&mut self, store: &mut ParamStore, ids: &[usize]) -> Result<()> {
        store.require_grad_set(ids)?;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        for &id in ids {
            let p = store.get_mut(id);
            let st = self.state.entry(id).or_insert_with(|| MomentState {
                step: 0,
                m: vec![0.0; p.value.len()],
                v: vec![0.0; p.value.len()],
            });
            st.step += 1;
            let bc1 = 1.0 - beta1.powi(st.step as i32);
            let bc2 = 1.0 - beta2.powi(st.step as i32);
            for i in 0..p.value.len() {
                let g = p.grad[i];
                st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * g;
                st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * g * g;
                let m_hat = st.m[i] / bc1;
                let v_hat = st.v[i] / bc2;
                p.value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
