//! Context/target index sampling over an instantiation.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Instantiation;
use crate::error::{CcnpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Train,
    Eval,
}

/// Index sets into an instantiation with `context ⊆ target`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextTargetSplit {
    pub context: Vec<usize>,
    pub target: Vec<usize>,
}

/// Draw a context/target split.
///
/// Training: |context| ~ U{1..N}, |target| = |context| + U{1..M}, both
/// uniform without replacement with context a subset of target.
/// Evaluation: the context has exactly N points and the target is the whole
/// sequence.
pub fn sample_split(
    inst: &Instantiation,
    phase: Phase,
    max_context: usize,
    max_extra_target: usize,
    rng_seed: u64,
) -> Result<ContextTargetSplit> {
    let len = inst.len();
    if max_context == 0 {
        return Err(CcnpError::InvalidConfig("max_context must be >= 1".into()));
    }
    if max_context + max_extra_target > len {
        return Err(CcnpError::InvalidConfig(format!(
            "context ({max_context}) plus extra target ({max_extra_target}) exceeds sequence length {len}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut indices: Vec<usize> = (0..len).collect();
    match phase {
        Phase::Train => {
            let n_context = rng.gen_range(1..=max_context);
            let n_extra = if max_extra_target == 0 {
                0
            } else {
                rng.gen_range(1..=max_extra_target)
            };
            indices.shuffle(&mut rng);
            let mut target: Vec<usize> = indices[..n_context + n_extra].to_vec();
            let mut context: Vec<usize> = target[..n_context].to_vec();
            target.sort_unstable();
            context.sort_unstable();
            Ok(ContextTargetSplit { context, target })
        }
        Phase::Eval => {
            indices.shuffle(&mut rng);
            let mut context: Vec<usize> = indices[..max_context].to_vec();
            context.sort_unstable();
            Ok(ContextTargetSplit {
                context,
                target: (0..len).collect(),
            })
        }
    }
}
