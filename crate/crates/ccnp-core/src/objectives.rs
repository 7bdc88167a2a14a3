//! The three training losses: Gaussian reconstruction NLL (FRL) and the two
//! InfoNCE objectives over temporal (TCL) and function (FCL) embeddings.

use serde::{Deserialize, Serialize};

use crate::error::CcnpError;
use crate::model::GaussianPrediction;
use crate::tensor::{NodeId, Tape};
use crate::Result;

const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 1.0,
            beta: 1.0,
            tau: 0.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.tau <= 0.0 {
            return Err(CcnpError::InvalidConfig(format!(
                "temperature must be > 0, got {}",
                self.tau
            )));
        }
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(CcnpError::InvalidConfig(
                "loss weights must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Mean negative log-likelihood per target point; each point sums its
/// independent output dimensions.
pub fn frl_nll(
    tape: &mut Tape,
    predictions: &[GaussianPrediction],
    targets: &[Vec<f64>],
) -> Result<NodeId> {
    if predictions.is_empty() || predictions.len() != targets.len() {
        return Err(CcnpError::InvalidConfig(
            "frl_nll needs aligned non-empty predictions and targets".into(),
        ));
    }
    let mut per_point = Vec::with_capacity(predictions.len());
    for (pred, y) in predictions.iter().zip(targets) {
        let shape = tape.shape(pred.mu).to_vec();
        if y.len() != shape.iter().product::<usize>() {
            return Err(CcnpError::InvalidConfig(
                "target length does not match prediction shape".into(),
            ));
        }
        let y = tape.constant(shape, y.clone());
        let resid = tape.sub(y, pred.mu)?;
        let z = tape.div(resid, pred.sigma)?;
        let zsq = tape.square(z)?;
        let half_zsq = tape.scale(zsq, 0.5)?;
        let ln_sigma = tape.log(pred.sigma)?;
        let elem = tape.add(half_zsq, ln_sigma)?;
        let elem = tape.add_scalar(elem, 0.5 * LN_2PI)?;
        per_point.push(tape.sum(elem, Some(1))?);
    }
    let all = tape.concat(&per_point, 0)?;
    tape.mean(all, None)
}

/// Temporal InfoNCE: anchor rows of `z_hat` (m, z) against candidate rows of
/// `z` (n, z); anchor i's positive is candidate `positives[i]`, every other
/// candidate is a negative.
pub fn tcl_loss(
    tape: &mut Tape,
    z_hat: NodeId,
    z: NodeId,
    positives: &[usize],
    tau: f64,
) -> Result<NodeId> {
    let m = tape.shape(z_hat)[0];
    let n = tape.shape(z)[0];
    if n < 2 {
        return Err(CcnpError::InvalidConfig(
            "tcl_loss needs at least 2 candidates".into(),
        ));
    }
    if positives.len() != m || positives.iter().any(|&p| p >= n) {
        return Err(CcnpError::InvalidConfig(
            "tcl_loss positives must map every anchor to a candidate".into(),
        ));
    }
    let sims = tape.cosine_sim(z_hat, z)?;
    let logits = tape.scale(sims, 1.0 / tau)?;
    let probs = tape.softmax(logits)?;
    let mut mask = vec![0.0; m * n];
    for (i, &p) in positives.iter().enumerate() {
        mask[i * n + p] = 1.0;
    }
    let mask = tape.constant(vec![m, n], mask);
    let picked = tape.mul(probs, mask)?;
    let pos = tape.sum(picked, Some(1))?;
    let log_pos = tape.log(pos)?;
    let mean = tape.mean(log_pos, None)?;
    tape.scale(mean, -1.0)
}

/// Function InfoNCE over per-instantiation view pairs (q1, q2), each (1, z).
///
/// For instantiation f the positive is its own cross-view similarity; the
/// negatives are the three cross-instantiation view combinations
/// (q1-q1', q1-q2', q2-q2') against every other instantiation f'. Both anchor
/// orderings of a pair contribute the same value, so the mean over 2F anchors
/// equals the mean over F pairs.
pub fn fcl_loss(tape: &mut Tape, views: &[(NodeId, NodeId)], tau: f64) -> Result<NodeId> {
    let f_count = views.len();
    if f_count < 2 {
        return Err(CcnpError::InvalidConfig(
            "fcl_loss needs at least 2 instantiations".into(),
        ));
    }
    let stacked: Vec<NodeId> = views.iter().flat_map(|&(a, b)| [a, b]).collect();
    let q = tape.concat(&stacked, 0)?;
    let sims = tape.cosine_sim(q, q)?;
    let logits = tape.scale(sims, 1.0 / tau)?;
    let e = tape.exp(logits)?;
    let k = 2 * f_count;
    let mut per_pair = Vec::with_capacity(f_count);
    for f in 0..f_count {
        let mut pos_mask = vec![0.0; k * k];
        pos_mask[(2 * f) * k + 2 * f + 1] = 1.0;
        let mut denom_mask = pos_mask.clone();
        for other in 0..f_count {
            if other == f {
                continue;
            }
            denom_mask[(2 * f) * k + 2 * other] = 1.0;
            denom_mask[(2 * f) * k + 2 * other + 1] = 1.0;
            denom_mask[(2 * f + 1) * k + 2 * other + 1] = 1.0;
        }
        let pos_mask = tape.constant(vec![k, k], pos_mask);
        let denom_mask = tape.constant(vec![k, k], denom_mask);
        let pos_terms = tape.mul(e, pos_mask)?;
        let pos = tape.sum(pos_terms, None)?;
        let denom_terms = tape.mul(e, denom_mask)?;
        let denom = tape.sum(denom_terms, None)?;
        let ln_pos = tape.log(pos)?;
        let ln_denom = tape.log(denom)?;
        per_pair.push(tape.sub(ln_denom, ln_pos)?);
    }
    let all = tape.concat(&per_pair, 0)?;
    tape.mean(all, None)
}

/// L_FRL + alpha * L_TCL + beta * L_FCL; absent contrastive terms contribute
/// nothing.
pub fn combined_objective(
    tape: &mut Tape,
    frl: NodeId,
    tcl: Option<NodeId>,
    fcl: Option<NodeId>,
    weights: &LossWeights,
) -> Result<NodeId> {
    weights.validate()?;
    let mut total = frl;
    if let Some(t) = tcl {
        let weighted = tape.scale(t, weights.alpha)?;
        total = tape.add(total, weighted)?;
    }
    if let Some(f) = fcl {
        let weighted = tape.scale(f, weights.beta)?;
        total = tape.add(total, weighted)?;
    }
    Ok(total)
}
