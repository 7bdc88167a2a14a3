//! Linear layers and plain ReLU MLPs on top of the tape.

use crate::tensor::{NodeId, ParamStore, Tape};
use crate::Result;

/// Fully connected layer; weight (in, out) plus broadcast bias (out,).
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize) -> Self {
        let w = store.add_uniform(&format!("{name}.w"), vec![in_dim, out_dim], in_dim);
        let b = store.add_uniform(&format!("{name}.b"), vec![out_dim], in_dim);
        Linear {
            w,
            b,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let y = tape.matmul(x, w)?;
        tape.add(y, b)
    }
}

/// Stack of linear layers with ReLU between them; the last layer stays linear.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `dims` runs input-first: `[in, hidden.., out]`.
    pub fn new(store: &mut ParamStore, name: &str, dims: &[usize]) -> Self {
        assert!(dims.len() >= 2, "mlp needs at least one layer");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| Linear::new(store, &format!("{name}.{i}"), d[0], d[1]))
            .collect();
        Mlp { layers }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, store, h)?;
            if i != last {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }
}
