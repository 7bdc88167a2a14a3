//! Model components: pair encoders, attentive aggregation, the Gaussian
//! decoder, and the contrastive projection heads.

mod attention;
mod ccnp;
mod layers;

pub use attention::MultiHeadAttention;
pub use ccnp::{
    sigma_transform, Branch, CcnpModel, FclViews, GaussianPrediction, ModelConfig, ModelVariant,
    RepresentationBundle,
};
pub use layers::{Linear, Mlp};

#[cfg(test)]
mod tests;
