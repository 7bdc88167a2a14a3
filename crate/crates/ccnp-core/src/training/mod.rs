//! Episodic meta-training: per-objective parameter groups, the sequential and
//! combined update schedules, deterministic batching, and run artifacts.

mod checkpoint;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointManifest, ManifestEntry,
};

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{sample_split, ContextTargetSplit, Instantiation, MetaDataset, Phase};
use crate::error::CcnpError;
use crate::model::{Branch, CcnpModel, ModelConfig, ModelVariant};
use crate::objectives::{combined_objective, fcl_loss, frl_nll, tcl_loss, LossWeights};
use crate::tensor::{Adam, AdamConfig, NodeId, ParamStore, Tape};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Three optimizer steps per episode, one per objective, in the order
    /// FCL, TCL, FRL.
    #[default]
    Sequential,
    /// One step on the weighted sum of the objectives over the union of the
    /// parameter groups.
    Combined,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_frl: f64,
    pub lr_tcl: f64,
    pub lr_fcl: f64,
    pub weights: LossWeights,
    pub schedule: Schedule,
    pub seed: u64,
    /// Training-phase context-size cap for sample_split.
    pub max_context: usize,
    /// Training-phase extra-target cap for sample_split.
    pub max_extra_target: usize,
    /// Context size used for the per-epoch validation pass.
    pub eval_context: usize,
    /// Global-norm gradient clip; None disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 25,
            batch_size: 16,
            lr_frl: 1e-3,
            lr_tcl: 1e-3,
            lr_fcl: 1e-3,
            weights: LossWeights::default(),
            schedule: Schedule::Sequential,
            seed: 0,
            max_context: 20,
            max_extra_target: 20,
            eval_context: 10,
            clip_norm: Some(10.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, variant: ModelVariant) -> Result<()> {
        if self.epochs == 0 {
            return Err(CcnpError::InvalidConfig("epochs must be >= 1".into()));
        }
        if variant.uses_fcl() && self.batch_size < 2 {
            return Err(CcnpError::InvalidConfig(
                "batch_size must be >= 2 when FCL is enabled".into(),
            ));
        }
        self.weights.validate()
    }
}

/// Parameter ids grouped by the objective that updates them. Shared members
/// (the decoder) appear in several groups.
#[derive(Debug, Clone)]
pub struct ParameterGroups {
    pub frl: Vec<usize>,
    pub tcl: Vec<usize>,
    pub fcl: Vec<usize>,
    pub union: Vec<usize>,
}

impl ParameterGroups {
    pub fn from_store(store: &ParamStore) -> Self {
        let frl = store.ids_with_prefixes(&["enc_c.", "dec."]);
        let tcl = store.ids_with_prefixes(&[
            "enc_t.",
            "head.varphi.",
            "head.rho_p.",
            "head.obs_proj.",
            "head.obs_feat.",
        ]);
        let fcl = store.ids_with_prefixes(&["enc_f.", "dec.", "head.rho_f."]);
        let mut union: Vec<usize> = frl.iter().chain(&tcl).chain(&fcl).copied().collect();
        union.sort_unstable();
        union.dedup();
        ParameterGroups {
            frl,
            tcl,
            fcl,
            union,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub frl: f64,
    pub tcl: Option<f64>,
    pub fcl: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub frl: f64,
    pub tcl: Option<f64>,
    pub fcl: Option<f64>,
    pub val_ll: f64,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub curves: Vec<CurvePoint>,
    pub best_epoch: usize,
    pub best_val_ll: f64,
    pub run_dir: Option<PathBuf>,
}

/// Deterministic seed mixing for derived RNG streams.
pub fn mix_seed(base: u64, a: u64, b: u64) -> u64 {
    base ^ a
        .wrapping_add(1)
        .wrapping_mul(0x9e3779b97f4a7c15)
        .rotate_left(17)
        ^ b.wrapping_add(1).wrapping_mul(0xc2b2ae3d27d4eb4f)
}

/// 17-significant-digit float formatting; round-trips through parsing.
pub fn csv_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct Trainer {
    pub model: CcnpModel,
    pub store: ParamStore,
    pub groups: ParameterGroups,
    pub config: TrainConfig,
    opt_frl: Adam,
    opt_tcl: Adam,
    opt_fcl: Adam,
    opt_combined: Adam,
}

pub type Batch<'a> = [(&'a Instantiation, ContextTargetSplit)];

enum Objective {
    Frl,
    Tcl,
    Fcl,
    Combined,
}

impl Objective {
    fn name(&self) -> &'static str {
        match self {
            Objective::Frl => "frl",
            Objective::Tcl => "tcl",
            Objective::Fcl => "fcl",
            Objective::Combined => "combined",
        }
    }
}

pub fn build_variant(
    variant: ModelVariant,
    model_config: ModelConfig,
    train_config: TrainConfig,
) -> Result<Trainer> {
    train_config.validate(variant)?;
    let mut store = ParamStore::new(train_config.seed);
    let model = CcnpModel::new(&mut store, model_config, variant)?;
    let groups = ParameterGroups::from_store(&store);
    let adam = |lr| Adam::new(AdamConfig {
        lr,
        ..AdamConfig::default()
    });
    Ok(Trainer {
        model,
        store,
        groups,
        opt_frl: adam(train_config.lr_frl),
        opt_tcl: adam(train_config.lr_tcl),
        opt_fcl: adam(train_config.lr_fcl),
        opt_combined: adam(train_config.lr_frl),
        config: train_config,
    })
}

impl Trainer {
    fn frl_forward(&self, tape: &mut Tape, batch: &Batch) -> Result<NodeId> {
        let mut preds = Vec::with_capacity(batch.len());
        let mut targets = Vec::with_capacity(batch.len());
        for (inst, split) in batch {
            let bundle = self.model.represent(tape, &self.store, inst, &split.context)?;
            let xt: Vec<f64> = split.target.iter().map(|&t| inst.x[t]).collect();
            let yt: Vec<f64> = split
                .target
                .iter()
                .flat_map(|&t| inst.y_row(t).to_vec())
                .collect();
            preds.push(self.model.decode(tape, &self.store, &xt, &bundle)?);
            targets.push(yt);
        }
        frl_nll(tape, &preds, &targets)
    }

    fn tcl_forward(&self, tape: &mut Tape, batch: &Batch) -> Result<NodeId> {
        let mut z_hats = Vec::with_capacity(batch.len());
        let mut zs = Vec::with_capacity(batch.len());
        let mut total = 0;
        for (inst, split) in batch {
            let rows = self
                .model
                .encode_context(tape, &self.store, Branch::T, inst, &split.context)?;
            let r_t = self.model.aggregate(tape, &self.store, Branch::T, rows)?;
            let xt: Vec<f64> = split.target.iter().map(|&t| inst.x[t]).collect();
            let yt: Vec<f64> = split
                .target
                .iter()
                .flat_map(|&t| inst.y_row(t).to_vec())
                .collect();
            let (z_hat, z) = self.model.tcl_embed(tape, &self.store, &xt, r_t, &yt)?;
            total += split.target.len();
            z_hats.push(z_hat);
            zs.push(z);
        }
        let z_hat = tape.concat(&z_hats, 0)?;
        let z = tape.concat(&zs, 0)?;
        let positives: Vec<usize> = (0..total).collect();
        tcl_loss(tape, z_hat, z, &positives, self.config.weights.tau)
    }

    fn fcl_forward(&self, tape: &mut Tape, batch: &Batch, seed: u64) -> Result<NodeId> {
        let mut views = Vec::with_capacity(batch.len());
        for (i, (inst, split)) in batch.iter().enumerate() {
            let v = self
                .model
                .fcl_embed(tape, &self.store, inst, &split.context, mix_seed(seed, i as u64, 5))?;
            views.push((v.q1, v.q2));
        }
        fcl_loss(tape, &views, self.config.weights.tau)
    }

    /// Backward pass plus one optimizer step restricted to the objective's
    /// group; returns the pre-step loss value.
    fn apply_step(&mut self, tape: &mut Tape, loss: NodeId, objective: Objective) -> Result<f64> {
        let value = tape.value(loss);
        if !value.is_finite() {
            return Err(CcnpError::NonFiniteLoss {
                objective: objective.name(),
            });
        }
        self.store.zero_grad();
        tape.backward(loss)?;
        tape.accumulate_param_grads(&mut self.store);
        let (opt, group) = match objective {
            Objective::Frl => (&mut self.opt_frl, &self.groups.frl),
            Objective::Tcl => (&mut self.opt_tcl, &self.groups.tcl),
            Objective::Fcl => (&mut self.opt_fcl, &self.groups.fcl),
            Objective::Combined => (&mut self.opt_combined, &self.groups.union),
        };
        // group members the objective has no path to (e.g. the decoder under
        // FCL, attention under mean aggregation) carry zero gradients
        self.store.ensure_grads(group);
        if let Some(clip) = self.config.clip_norm {
            let norm = self.store.grad_norm(group);
            if norm > clip {
                self.store.scale_grads(group, clip / norm);
            }
        }
        opt.step(&mut self.store, group)?;
        Ok(value)
    }

    /// One Algorithm-1 episode over a batch of context/target splits.
    /// Reported losses are the pre-step values.
    pub fn train_episode(&mut self, batch: &Batch, episode_seed: u64) -> Result<EpisodeReport> {
        if batch.is_empty() {
            return Err(CcnpError::InvalidConfig("empty episode batch".into()));
        }
        let variant = self.model.variant;
        let run_fcl = variant.uses_fcl() && batch.len() >= 2;
        match self.config.schedule {
            Schedule::Sequential => {
                let fcl = if run_fcl {
                    let mut tape = Tape::new();
                    let loss = self.fcl_forward(&mut tape, batch, episode_seed)?;
                    Some(self.apply_step(&mut tape, loss, Objective::Fcl)?)
                } else {
                    None
                };
                let tcl = if variant.uses_tcl() {
                    let mut tape = Tape::new();
                    let loss = self.tcl_forward(&mut tape, batch)?;
                    Some(self.apply_step(&mut tape, loss, Objective::Tcl)?)
                } else {
                    None
                };
                let mut tape = Tape::new();
                let loss = self.frl_forward(&mut tape, batch)?;
                let frl = self.apply_step(&mut tape, loss, Objective::Frl)?;
                Ok(EpisodeReport { frl, tcl, fcl })
            }
            Schedule::Combined => {
                let mut tape = Tape::new();
                let frl = self.frl_forward(&mut tape, batch)?;
                let tcl = if variant.uses_tcl() {
                    Some(self.tcl_forward(&mut tape, batch)?)
                } else {
                    None
                };
                let fcl = if run_fcl {
                    Some(self.fcl_forward(&mut tape, batch, episode_seed)?)
                } else {
                    None
                };
                let total =
                    combined_objective(&mut tape, frl, tcl, fcl, &self.config.weights)?;
                let report = EpisodeReport {
                    frl: tape.value(frl),
                    tcl: tcl.map(|t| tape.value(t)),
                    fcl: fcl.map(|f| tape.value(f)),
                };
                self.apply_step(&mut tape, total, Objective::Combined)?;
                Ok(report)
            }
        }
    }

    /// Mean per-target-point log-likelihood over a split, using eval-phase
    /// context sampling.
    pub fn validation_ll(&self, insts: &[Instantiation], seed: u64) -> Result<f64> {
        evaluate_ll(&self.model, &self.store, insts, self.config.eval_context, seed)
    }

    /// Full training loop with per-epoch validation and optional artifacts
    /// (config.json, curves.csv, best/final checkpoints) in `out_dir`.
    pub fn train_run(
        &mut self,
        dataset: &MetaDataset,
        out_dir: Option<&Path>,
    ) -> Result<RunArtifacts> {
        if dataset.train.is_empty() || dataset.val.is_empty() {
            return Err(CcnpError::InvalidConfig(
                "train_run needs non-empty train and val splits".into(),
            ));
        }
        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir)?;
            let dump = serde_json::json!({
                "variant": self.model.variant,
                "model": self.model.config,
                "train": self.config,
            });
            std::fs::write(dir.join("config.json"), serde_json::to_vec_pretty(&dump)?)?;
        }
        let needs_pair = self.model.variant.uses_fcl();
        let mut curves = Vec::with_capacity(self.config.epochs);
        let mut best_epoch = 0;
        let mut best_val_ll = f64::NEG_INFINITY;
        let mut order: Vec<usize> = (0..dataset.train.len()).collect();
        for epoch in 0..self.config.epochs {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.config.seed, epoch as u64, 1));
            order.shuffle(&mut rng);
            let (mut frl_sum, mut tcl_sum, mut fcl_sum) = (0.0, 0.0, 0.0);
            let (mut n_ep, mut n_tcl, mut n_fcl) = (0usize, 0usize, 0usize);
            for (b, chunk) in order.chunks(self.config.batch_size).enumerate() {
                if needs_pair && chunk.len() < 2 {
                    continue;
                }
                let batch = self.sample_batch(dataset, chunk, epoch, needs_pair)?;
                let report =
                    self.train_episode(&batch, mix_seed(self.config.seed, epoch as u64, b as u64))?;
                frl_sum += report.frl;
                n_ep += 1;
                if let Some(t) = report.tcl {
                    tcl_sum += t;
                    n_tcl += 1;
                }
                if let Some(f) = report.fcl {
                    fcl_sum += f;
                    n_fcl += 1;
                }
            }
            if n_ep == 0 {
                return Err(CcnpError::InvalidConfig(
                    "no runnable batches in an epoch; check batch_size vs dataset size".into(),
                ));
            }
            let val_ll =
                self.validation_ll(&dataset.val, mix_seed(self.config.seed, epoch as u64, 2))?;
            curves.push(CurvePoint {
                epoch,
                frl: frl_sum / n_ep as f64,
                tcl: (n_tcl > 0).then(|| tcl_sum / n_tcl as f64),
                fcl: (n_fcl > 0).then(|| fcl_sum / n_fcl as f64),
                val_ll,
            });
            if val_ll > best_val_ll {
                best_val_ll = val_ll;
                best_epoch = epoch;
                if let Some(dir) = out_dir {
                    save_checkpoint(
                        &dir.join("ckpt_best.bin"),
                        &self.store,
                        &self.model.config,
                        self.model.variant,
                    )?;
                }
            }
        }
        if let Some(dir) = out_dir {
            save_checkpoint(
                &dir.join("ckpt_final.bin"),
                &self.store,
                &self.model.config,
                self.model.variant,
            )?;
            write_curves(&dir.join("curves.csv"), &curves)?;
        }
        Ok(RunArtifacts {
            curves,
            best_epoch,
            best_val_ll,
            run_dir: out_dir.map(Path::to_path_buf),
        })
    }

    fn sample_batch<'a>(
        &self,
        dataset: &'a MetaDataset,
        chunk: &[usize],
        epoch: usize,
        needs_pair: bool,
    ) -> Result<Vec<(&'a Instantiation, ContextTargetSplit)>> {
        let mut batch = Vec::with_capacity(chunk.len());
        for &idx in chunk {
            let inst = &dataset.train[idx];
            let max_context = self.config.max_context.min(inst.len().saturating_sub(1)).max(1);
            let max_extra = self.config.max_extra_target.min(inst.len() - max_context);
            let mut attempt = 0u64;
            let split = loop {
                let s = sample_split(
                    inst,
                    Phase::Train,
                    max_context,
                    max_extra,
                    mix_seed(self.config.seed, epoch as u64, idx as u64).wrapping_add(attempt),
                )?;
                if !needs_pair || s.context.len() >= 2 || max_context < 2 {
                    break s;
                }
                attempt += 1;
            };
            batch.push((inst, split));
        }
        Ok(batch)
    }
}

/// Mean per-point target log-likelihood with eval-phase splits (context of
/// `n_context` points, targets the whole sequence).
pub fn evaluate_ll(
    model: &CcnpModel,
    store: &ParamStore,
    insts: &[Instantiation],
    n_context: usize,
    seed: u64,
) -> Result<f64> {
    if insts.is_empty() {
        return Err(CcnpError::InvalidConfig(
            "evaluate_ll needs at least one instantiation".into(),
        ));
    }
    let mut total = 0.0;
    for (i, inst) in insts.iter().enumerate() {
        let mut tape = Tape::new();
        let split = sample_split(
            inst,
            Phase::Eval,
            n_context.min(inst.len()),
            0,
            mix_seed(seed, i as u64, 3),
        )?;
        let bundle = model.represent(&mut tape, store, inst, &split.context)?;
        let pred = model.decode(&mut tape, store, &inst.x, &bundle)?;
        let nll = frl_nll(&mut tape, &[pred], &[inst.y.clone()])?;
        total -= tape.value(nll);
    }
    Ok(total / insts.len() as f64)
}

/// curves.csv: one row per epoch, empty cells for absent losses.
pub fn write_curves(path: &Path, curves: &[CurvePoint]) -> Result<()> {
    let mut out = String::from("epoch,frl,tcl,fcl,val_ll\r\n");
    for c in curves {
        let tcl = c.tcl.map(csv_float).unwrap_or_default();
        let fcl = c.fcl.map(csv_float).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\r\n",
            c.epoch,
            csv_float(c.frl),
            tcl,
            fcl,
            csv_float(c.val_ll)
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}
