use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CcnpError, Result};
use crate::tensor::numel;

/// One named trainable array.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub grad_set: bool,
}

/// Flat registry of model parameters, addressed by insertion order.
///
/// Initialization draws each parameter from its own RNG stream derived from
/// `(seed, name)`, so two models built with the same seed initialize shared
/// parameter names identically regardless of how many other parameters exist.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, usize>,
    pub seed: u64,
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        ParamStore {
            params: Vec::new(),
            index: HashMap::new(),
            seed,
        }
    }

    /// Register a linear-layer weight initialized uniform in
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn add_uniform(&mut self, name: &str, shape: Vec<usize>, fan_in: usize) -> usize {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(name));
        let n = numel(&shape);
        let value: Vec<f64> = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        self.add_with_value(name, shape, value)
    }

    pub fn add_zeros(&mut self, name: &str, shape: Vec<usize>) -> usize {
        let n = numel(&shape);
        self.add_with_value(name, shape, vec![0.0; n])
    }

    pub fn add_with_value(&mut self, name: &str, shape: Vec<usize>, value: Vec<f64>) -> usize {
        assert_eq!(numel(&shape), value.len());
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter name {name}"
        );
        let grad = vec![0.0; value.len()];
        self.params.push(Param {
            name: name.to_string(),
            shape,
            value,
            grad,
            grad_set: false,
        });
        let id = self.params.len() - 1;
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: usize) -> &Param {
        &self.params[id]
    }

    pub fn get_mut(&mut self, id: usize) -> &mut Param {
        &mut self.params[id]
    }

    pub fn lookup(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Param)> {
        self.params.iter().enumerate()
    }

    /// All parameter ids whose name starts with any of the given prefixes.
    pub fn ids_with_prefixes(&self, prefixes: &[&str]) -> Vec<usize> {
        self.params
            .iter()
            .enumerate()
            .filter(|(_, p)| prefixes.iter().any(|pre| p.name.starts_with(pre)))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn add_grad(&mut self, id: usize, grad: &[f64]) {
        let p = &mut self.params[id];
        debug_assert_eq!(p.grad.len(), grad.len());
        for (g, &d) in p.grad.iter_mut().zip(grad) {
            *g += d;
        }
        p.grad_set = true;
    }

    /// Mark parameters as having (zero) gradients; used for group members
    /// whose objective has no path to them.
    pub fn ensure_grads(&mut self, ids: &[usize]) {
        for &id in ids {
            self.params[id].grad_set = true;
        }
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
            p.grad_set = false;
        }
    }

    pub fn require_grad_set(&self, ids: &[usize]) -> Result<()> {
        for &id in ids {
            if !self.params[id].grad_set {
                return Err(CcnpError::MissingGradient {
                    name: self.params[id].name.clone(),
                });
            }
        }
        Ok(())
    }

    /// Global L2 norm of the gradients over the given parameters.
    pub fn grad_norm(&self, ids: &[usize]) -> f64 {
        ids.iter()
            .map(|&id| self.params[id].grad.iter().map(|g| g * g).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale_grads(&mut self, ids: &[usize], factor: f64) {
        for &id in ids {
            for g in &mut self.params[id].grad {
                *g *= factor;
            }
        }
    }
}
