//! The CNP/AttnCNP/CCNP family: three encoder branches, attentive (or mean)
//! aggregation, a Gaussian decoder, and the contrastive heads.
//!
//! Every variant owns the full parameter set so that seed-paired runs share
//! initialization; variants differ only in which pieces the forward pass and
//! the training schedule actually exercise.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attention::MultiHeadAttention;
use super::layers::{Linear, Mlp};
use crate::datagen::Instantiation;
use crate::error::CcnpError;
use crate::tensor::{NodeId, ParamStore, Tape};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    Cnp,
    AttnCnp,
    Ccnp,
    CcnpMinusAttn,
    CcnpMinusTcl,
    CcnpMinusFcl,
}

impl ModelVariant {
    pub fn uses_attention(self) -> bool {
        !matches!(self, ModelVariant::Cnp | ModelVariant::CcnpMinusAttn)
    }

    pub fn uses_tcl(self) -> bool {
        matches!(
            self,
            ModelVariant::Ccnp | ModelVariant::CcnpMinusAttn | ModelVariant::CcnpMinusFcl
        )
    }

    pub fn uses_fcl(self) -> bool {
        matches!(
            self,
            ModelVariant::Ccnp | ModelVariant::CcnpMinusAttn | ModelVariant::CcnpMinusTcl
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Cnp => "cnp",
            ModelVariant::AttnCnp => "attn_cnp",
            ModelVariant::Ccnp => "ccnp",
            ModelVariant::CcnpMinusAttn => "ccnp_minus_attn",
            ModelVariant::CcnpMinusTcl => "ccnp_minus_tcl",
            ModelVariant::CcnpMinusFcl => "ccnp_minus_fcl",
        }
    }
}

impl std::str::FromStr for ModelVariant {
    type Err = CcnpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnp" => Ok(ModelVariant::Cnp),
            "attn_cnp" => Ok(ModelVariant::AttnCnp),
            "ccnp" => Ok(ModelVariant::Ccnp),
            "ccnp_minus_attn" => Ok(ModelVariant::CcnpMinusAttn),
            "ccnp_minus_tcl" => Ok(ModelVariant::CcnpMinusTcl),
            "ccnp_minus_fcl" => Ok(ModelVariant::CcnpMinusFcl),
            other => Err(CcnpError::InvalidConfig(format!(
                "unknown model variant {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub y_dim: usize,
    pub width: usize,
    pub n_heads: usize,
    /// Dimension of the contrastive projection embeddings.
    pub proj_dim: usize,
    /// Route the TCL ground-truth observation through the shared projection
    /// head instead of a dedicated linear map.
    pub shared_tcl_projection: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            y_dim: 1,
            width: 64,
            n_heads: 4,
            proj_dim: 8,
            shared_tcl_projection: false,
        }
    }
}

impl ModelConfig {
    fn validate(&self) -> Result<()> {
        if self.y_dim == 0 || self.width == 0 || self.proj_dim == 0 {
            return Err(CcnpError::InvalidConfig(
                "y_dim, width and proj_dim must all be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    C,
    T,
    F,
}

/// One contextual representation per branch, each shape (1, width).
#[derive(Debug, Clone, Copy)]
pub struct RepresentationBundle {
    pub r_c: NodeId,
    pub r_t: NodeId,
    pub r_f: NodeId,
}

#[derive(Debug, Clone, Copy)]
pub struct GaussianPrediction {
    /// (n, y_dim)
    pub mu: NodeId,
    /// (n, y_dim), entries strictly above 0.1
    pub sigma: NodeId,
}

/// The two half-context view embeddings for FCL, shapes (1, proj_dim).
#[derive(Debug, Clone)]
pub struct FclViews {
    pub q1: NodeId,
    pub q2: NodeId,
    pub half1: Vec<usize>,
    pub half2: Vec<usize>,
}

#[derive(Debug, Clone)]
struct EncoderBranch {
    pair_encoder: Mlp,
    attention: MultiHeadAttention,
}

impl EncoderBranch {
    fn new(store: &mut ParamStore, name: &str, config: &ModelConfig) -> Result<Self> {
        let w = config.width;
        Ok(EncoderBranch {
            pair_encoder: Mlp::new(
                store,
                &format!("{name}.mlp"),
                &[1 + config.y_dim, w, w, w, w],
            ),
            attention: MultiHeadAttention::new(store, &format!("{name}.attn"), w, config.n_heads)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct CcnpModel {
    pub config: ModelConfig,
    pub variant: ModelVariant,
    enc_c: EncoderBranch,
    enc_t: EncoderBranch,
    enc_f: EncoderBranch,
    dec_trunk: Mlp,
    mu_head: Linear,
    sigma_head: Linear,
    varphi: Mlp,
    rho_p: Linear,
    rho_f: Linear,
    obs_proj: Linear,
    obs_feat: Linear,
}

/// sigma = 0.9 * softplus(pre) + 0.1, elementwise; strictly above 0.1.
pub fn sigma_transform(tape: &mut Tape, pre: NodeId) -> Result<NodeId> {
    let sp = tape.softplus(pre)?;
    let scaled = tape.scale(sp, 0.9)?;
    tape.add_scalar(scaled, 0.1)
}

/// Repeat a (1, w) row down to (n, w) with gradient flow intact.
fn repeat_rows(tape: &mut Tape, row: NodeId, n: usize) -> Result<NodeId> {
    let ones = tape.constant(vec![n, 1], vec![1.0; n]);
    tape.matmul(ones, row)
}

impl CcnpModel {
    pub fn new(store: &mut ParamStore, config: ModelConfig, variant: ModelVariant) -> Result<Self> {
        config.validate()?;
        let w = config.width;
        let z = config.proj_dim;
        Ok(CcnpModel {
            enc_c: EncoderBranch::new(store, "enc_c", &config)?,
            enc_t: EncoderBranch::new(store, "enc_t", &config)?,
            enc_f: EncoderBranch::new(store, "enc_f", &config)?,
            dec_trunk: Mlp::new(store, "dec.trunk", &[1 + 3 * w, w, w, w, w]),
            mu_head: Linear::new(store, "dec.mu", w, config.y_dim),
            sigma_head: Linear::new(store, "dec.sigma", w, config.y_dim),
            varphi: Mlp::new(store, "head.varphi", &[1 + w, w, w]),
            rho_p: Linear::new(store, "head.rho_p", w, z),
            rho_f: Linear::new(store, "head.rho_f", w, z),
            obs_proj: Linear::new(store, "head.obs_proj", config.y_dim, z),
            obs_feat: Linear::new(store, "head.obs_feat", config.y_dim, w),
            config,
            variant,
        })
    }

    fn branch(&self, branch: Branch) -> &EncoderBranch {
        match branch {
            Branch::C => &self.enc_c,
            Branch::T => &self.enc_t,
            Branch::F => &self.enc_f,
        }
    }

    /// Encode selected (x, y) pairs into per-row features (|indices|, width).
    pub fn encode_context(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        branch: Branch,
        inst: &Instantiation,
        indices: &[usize],
    ) -> Result<NodeId> {
        if indices.is_empty() {
            return Err(CcnpError::InvalidConfig(
                "encode_context needs a non-empty context".into(),
            ));
        }
        let cols = 1 + inst.y_dim;
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            data.push(inst.x[i]);
            data.extend_from_slice(inst.y_row(i));
        }
        let input = tape.constant(vec![indices.len(), cols], data);
        self.branch(branch).pair_encoder.forward(tape, store, input)
    }

    /// Attend (or pass through) and mean-pool rows into one (1, width) vector.
    pub fn aggregate(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        branch: Branch,
        rows: NodeId,
    ) -> Result<NodeId> {
        let attended = if self.variant.uses_attention() {
            self.branch(branch).attention.forward(tape, store, rows)?
        } else {
            rows
        };
        let pooled = tape.mean(attended, Some(0))?;
        tape.reshape(pooled, vec![1, self.config.width])
    }

    /// Encode and aggregate all three branches over the same context.
    pub fn represent(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        inst: &Instantiation,
        indices: &[usize],
    ) -> Result<RepresentationBundle> {
        let mut one = |branch| -> Result<NodeId> {
            let rows = self.encode_context(tape, store, branch, inst, indices)?;
            self.aggregate(tape, store, branch, rows)
        };
        Ok(RepresentationBundle {
            r_c: one(Branch::C)?,
            r_t: one(Branch::T)?,
            r_f: one(Branch::F)?,
        })
    }

    /// Predict a diagonal Gaussian at each query index.
    pub fn decode(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x_t: &[f64],
        bundle: &RepresentationBundle,
    ) -> Result<GaussianPrediction> {
        let n = x_t.len();
        if n == 0 {
            return Err(CcnpError::InvalidConfig(
                "decode needs at least one query index".into(),
            ));
        }
        let xt = tape.constant(vec![n, 1], x_t.to_vec());
        let rc = repeat_rows(tape, bundle.r_c, n)?;
        let rt = repeat_rows(tape, bundle.r_t, n)?;
        let rf = repeat_rows(tape, bundle.r_f, n)?;
        let input = tape.concat(&[xt, rc, rt, rf], 1)?;
        let h = self.dec_trunk.forward(tape, store, input)?;
        let h = tape.relu(h)?;
        let mu = self.mu_head.forward(tape, store, h)?;
        let pre_sigma = self.sigma_head.forward(tape, store, h)?;
        let sigma = sigma_transform(tape, pre_sigma)?;
        Ok(GaussianPrediction { mu, sigma })
    }

    /// Predicted and ground-truth TCL embeddings for a set of target points;
    /// both outputs have shape (n, proj_dim) with rows index-aligned.
    pub fn tcl_embed(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x_t: &[f64],
        r_t: NodeId,
        y_t: &[f64],
    ) -> Result<(NodeId, NodeId)> {
        let n = x_t.len();
        if n == 0 || y_t.len() != n * self.config.y_dim {
            return Err(CcnpError::InvalidConfig(
                "tcl_embed needs aligned non-empty x and y".into(),
            ));
        }
        let xt = tape.constant(vec![n, 1], x_t.to_vec());
        let rep = repeat_rows(tape, r_t, n)?;
        let input = tape.concat(&[xt, rep], 1)?;
        let h = self.varphi.forward(tape, store, input)?;
        let z_hat = self.rho_p.forward(tape, store, h)?;
        let y = tape.constant(vec![n, self.config.y_dim], y_t.to_vec());
        let z = if self.config.shared_tcl_projection {
            let feat = self.obs_feat.forward(tape, store, y)?;
            self.rho_p.forward(tape, store, feat)?
        } else {
            self.obs_proj.forward(tape, store, y)?
        };
        Ok((z_hat, z))
    }

    /// Split the context into two disjoint halves and embed each through the
    /// function branch.
    pub fn fcl_embed(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        inst: &Instantiation,
        indices: &[usize],
        rng_seed: u64,
    ) -> Result<FclViews> {
        if indices.len() < 2 {
            return Err(CcnpError::InvalidConfig(format!(
                "fcl_embed needs at least 2 context points, got {}",
                indices.len()
            )));
        }
        let mut shuffled = indices.to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        shuffled.shuffle(&mut rng);
        let (half1, half2) = shuffled.split_at(shuffled.len() / 2);
        let mut view = |half: &[usize]| -> Result<NodeId> {
            let rows = self.encode_context(tape, store, Branch::F, inst, half)?;
            let r = self.aggregate(tape, store, Branch::F, rows)?;
            self.rho_f.forward(tape, store, r)
        };
        Ok(FclViews {
            q1: view(half1)?,
            q2: view(half2)?,
            half1: half1.to_vec(),
            half2: half2.to_vec(),
        })
    }
}
