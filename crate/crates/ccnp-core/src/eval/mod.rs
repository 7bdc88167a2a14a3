//! Evaluation metrics and the coefficient-inference transfer probe.

use serde::{Deserialize, Serialize};

use crate::datagen::{sample_split, Instantiation, Phase};
use crate::error::CcnpError;
use crate::model::{CcnpModel, Mlp, ModelVariant};
use crate::objectives::frl_nll;
use crate::tensor::{Adam, AdamConfig, ParamStore, Tape};
use crate::training::mix_seed;
use crate::Result;

/// Raw metrics for one trained model on one split.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EvalMetrics {
    /// Mean per-target-point log-likelihood.
    pub predictive_ll: f64,
    /// Mean squared error between the predictive mean and the truth.
    pub recon_mse: f64,
}

/// Seed-aggregated metrics. Values stay raw; the display scale factors are
/// recorded so tables can show `value * scale` without ambiguity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_seed: Vec<(u64, EvalMetrics)>,
    pub ll_mean: f64,
    pub ll_std: Option<f64>,
    pub mse_mean: f64,
    pub mse_std: Option<f64>,
    pub ll_scale: f64,
    pub mse_scale: f64,
}

pub fn mse(pred: &[f64], truth: &[f64]) -> f64 {
    debug_assert_eq!(pred.len(), truth.len());
    pred.iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64
}

fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

/// N-shot evaluation: context of `shots` points, targets the whole sequence.
pub fn evaluate(
    model: &CcnpModel,
    store: &ParamStore,
    insts: &[Instantiation],
    shots: usize,
    seed: u64,
) -> Result<EvalMetrics> {
    if insts.is_empty() {
        return Err(CcnpError::InvalidConfig(
            "evaluate needs at least one instantiation".into(),
        ));
    }
    let mut ll_sum = 0.0;
    let mut mse_sum = 0.0;
    for (i, inst) in insts.iter().enumerate() {
        if shots > inst.len() {
            return Err(CcnpError::InvalidConfig(format!(
                "{shots}-shot context exceeds sequence length {}",
                inst.len()
            )));
        }
        let mut tape = Tape::new();
        let split = sample_split(inst, Phase::Eval, shots, 0, mix_seed(seed, i as u64, 13))?;
        let bundle = model.represent(&mut tape, store, inst, &split.context)?;
        let pred = model.decode(&mut tape, store, &inst.x, &bundle)?;
        let nll = frl_nll(&mut tape, &[pred], &[inst.y.clone()])?;
        ll_sum -= tape.value(nll);
        mse_sum += mse(tape.data(pred.mu), &inst.y);
    }
    let n = insts.len() as f64;
    Ok(EvalMetrics {
        predictive_ll: ll_sum / n,
        recon_mse: mse_sum / n,
    })
}

/// Aggregate per-seed metrics; `mse_scale`/`ll_scale` record the display
/// factor (e.g. 1e2 for the 1D families) without applying it.
pub fn aggregate_metrics(
    per_seed: Vec<(u64, EvalMetrics)>,
    ll_scale: f64,
    mse_scale: f64,
) -> MetricReport {
    let lls: Vec<f64> = per_seed.iter().map(|(_, m)| m.predictive_ll).collect();
    let mses: Vec<f64> = per_seed.iter().map(|(_, m)| m.recon_mse).collect();
    let (ll_mean, ll_std) = mean_std(&lls);
    let (mse_mean, mse_std) = mean_std(&mses);
    MetricReport {
        per_seed,
        ll_mean,
        ll_std,
        mse_mean,
        mse_std,
        ll_scale,
        mse_scale,
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct CoeffProbeConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Context size used when extracting the frozen representation.
    pub context: usize,
    pub seed: u64,
}

impl Default for CoeffProbeConfig {
    fn default() -> Self {
        CoeffProbeConfig {
            hidden: 32,
            epochs: 300,
            lr: 1e-2,
            context: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProbeReport {
    pub mse_alpha: f64,
    pub mse_beta: f64,
    pub mse_combined: f64,
    /// Set when the probe data does not come from the sinusoid family.
    pub non_sinusoid_warning: bool,
}

/// Frozen representation of one instantiation: the concatenated bundle for
/// the contrastive variants, r_C alone for CNP/AttnCNP.
fn probe_features(
    model: &CcnpModel,
    store: &ParamStore,
    inst: &Instantiation,
    context: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let split = sample_split(inst, Phase::Eval, context.min(inst.len()), 0, seed)?;
    let bundle = model.represent(&mut tape, store, inst, &split.context)?;
    let mut feat = tape.data(bundle.r_c).to_vec();
    if !matches!(model.variant, ModelVariant::Cnp | ModelVariant::AttnCnp) {
        feat.extend_from_slice(tape.data(bundle.r_t));
        feat.extend_from_slice(tape.data(bundle.r_f));
    }
    Ok(feat)
}

/// Train a small regressor on frozen representations to recover the function
/// coefficients (alpha, beta); reports held-out MSE per coefficient. The
/// backbone store is read-only throughout.
pub fn coefficient_inference(
    model: &CcnpModel,
    store: &ParamStore,
    train_insts: &[Instantiation],
    test_insts: &[Instantiation],
    config: &CoeffProbeConfig,
) -> Result<ProbeReport> {
    if train_insts.is_empty() || test_insts.is_empty() {
        return Err(CcnpError::InvalidConfig(
            "coefficient_inference needs non-empty train and test sets".into(),
        ));
    }
    for inst in train_insts.iter().chain(test_insts) {
        if inst.coeffs.len() < 2 {
            return Err(CcnpError::InvalidConfig(
                "probe instantiations must carry (alpha, beta) coefficients".into(),
            ));
        }
    }
    let non_sinusoid_warning = train_insts
        .iter()
        .chain(test_insts)
        .any(|i| i.family_id != "sinusoid");

    let features = |insts: &[Instantiation], tag: u64| -> Result<(Vec<f64>, Vec<f64>, usize)> {
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut dim = 0;
        for (i, inst) in insts.iter().enumerate() {
            let f = probe_features(
                model,
                store,
                inst,
                config.context,
                mix_seed(config.seed, tag, i as u64),
            )?;
            dim = f.len();
            x.extend(f);
            y.push(inst.coeffs[0]);
            y.push(inst.coeffs[1]);
        }
        Ok((x, y, dim))
    };
    let (train_x, train_y, feat_dim) = features(train_insts, 17)?;
    let (test_x, test_y, _) = features(test_insts, 19)?;

    let mut probe_store = ParamStore::new(config.seed);
    let probe = Mlp::new(&mut probe_store, "probe", &[feat_dim, config.hidden, 2]);
    let probe_ids: Vec<usize> = probe_store.iter().map(|(id, _)| id).collect();
    let mut opt = Adam::new(AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    });
    let n_train = train_insts.len();
    for _ in 0..config.epochs {
        let mut tape = Tape::new();
        let x = tape.constant(vec![n_train, feat_dim], train_x.clone());
        let t = tape.constant(vec![n_train, 2], train_y.clone());
        let pred = probe.forward(&mut tape, &probe_store, x)?;
        let resid = tape.sub(pred, t)?;
        let sq = tape.square(resid)?;
        let loss = tape.mean(sq, None)?;
        probe_store.zero_grad();
        tape.backward(loss)?;
        tape.accumulate_param_grads(&mut probe_store);
        opt.step(&mut probe_store, &probe_ids)?;
    }

    let mut tape = Tape::new();
    let x = tape.constant(vec![test_insts.len(), feat_dim], test_x);
    let pred = probe.forward(&mut tape, &probe_store, x)?;
    let p = tape.data(pred);
    let n = test_insts.len();
    let mut se = [0.0, 0.0];
    for i in 0..n {
        for c in 0..2 {
            let d = p[i * 2 + c] - test_y[i * 2 + c];
            se[c] += d * d;
        }
    }
    Ok(ProbeReport {
        mse_alpha: se[0] / n as f64,
        mse_beta: se[1] / n as f64,
        mse_combined: (se[0] + se[1]) / (2.0 * n as f64),
        non_sinusoid_warning,
    })
}
