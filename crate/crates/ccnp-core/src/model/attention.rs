//! Multi-head scaled dot-product self-attention over context rows.

use super::layers::Linear;
use crate::error::CcnpError;
use crate::tensor::{NodeId, ParamStore, Tape};
use crate::Result;

#[derive(Debug, Clone)]
struct AttnHead {
    q: Linear,
    k: Linear,
    v: Linear,
}

/// Self-attention with per-head query/key/value projections and a fused
/// output map back to the model width. Scores are scaled by 1/sqrt(width).
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    heads: Vec<AttnHead>,
    fusion: Linear,
    scale: f64,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, name: &str, width: usize, n_heads: usize) -> Result<Self> {
        if n_heads == 0 || width % n_heads != 0 {
            return Err(CcnpError::InvalidConfig(format!(
                "width {width} must split evenly over {n_heads} attention heads"
            )));
        }
        let head_dim = width / n_heads;
        let heads = (0..n_heads)
            .map(|h| AttnHead {
                q: Linear::new(store, &format!("{name}.h{h}.q"), width, head_dim),
                k: Linear::new(store, &format!("{name}.h{h}.k"), width, head_dim),
                v: Linear::new(store, &format!("{name}.h{h}.v"), width, head_dim),
            })
            .collect();
        Ok(MultiHeadAttention {
            heads,
            fusion: Linear::new(store, &format!("{name}.fuse"), width, width),
            scale: 1.0 / (width as f64).sqrt(),
        })
    }

    /// rows (n, width) -> attended rows (n, width).
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, rows: NodeId) -> Result<NodeId> {
        let mut outputs = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let q = head.q.forward(tape, store, rows)?;
            let k = head.k.forward(tape, store, rows)?;
            let v = head.v.forward(tape, store, rows)?;
            let kt = tape.transpose(k)?;
            let scores = tape.matmul(q, kt)?;
            let scores = tape.scale(scores, self.scale)?;
            let weights = tape.softmax(scores)?;
            outputs.push(tape.matmul(weights, v)?);
        }
        let fused = tape.concat(&outputs, 1)?;
        self.fusion.forward(tape, store, fused)
    }
}
