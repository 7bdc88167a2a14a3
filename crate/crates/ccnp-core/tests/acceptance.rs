//! Acceptance suite: one printed pass/fail line per criterion.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see every line.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ccnp_core::datagen::{
    gp_gram, make_meta_dataset, sample_family_instantiation, simulate_lv, DatasetSpec,
    FunctionFamily, FunctionFamilySpec, GpKernel, GpKernelSpec, LvConfig, LvMode, LvSampling,
    MetaDataset,
};
use ccnp_core::eval::{coefficient_inference, evaluate, CoeffProbeConfig};
use ccnp_core::model::{CcnpModel, ModelConfig, ModelVariant};
use ccnp_core::objectives::{fcl_loss, tcl_loss};
use ccnp_core::tensor::gradcheck::run_suite;
use ccnp_core::tensor::{ParamStore, Tape};
use ccnp_core::training::{build_variant, TrainConfig};

fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "[{}] criterion {criterion}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(", ")
}

fn sample_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

// ---------------------------------------------------------------------------
// 1. Gradient fidelity

#[test]
fn criterion_1_gradient_fidelity() {
    let t0 = Instant::now();
    let reports = run_suite(7, 10).expect("gradcheck suite");
    let elapsed = t0.elapsed().as_secs_f64();
    let all_pass = reports.iter().all(|r| r.passed && r.cases >= 10);
    let worst = reports
        .iter()
        .map(|r| r.max_rel_err)
        .fold(0.0_f64, f64::max);
    let pass = all_pass && elapsed < 60.0;
    report(
        "1 (gradient fidelity)",
        pass,
        &format!(
            "{} ops, >=10 cases each, max rel err {worst:.2e}, {elapsed:.1}s",
            reports.len()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 2. InfoNCE oracle equivalence

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn tcl_oracle(z_hat: &[Vec<f64>], z: &[Vec<f64>], positives: &[usize], tau: f64) -> f64 {
    let mut total = 0.0;
    for (anchor, &p) in z_hat.iter().zip(positives) {
        let logits: Vec<f64> = z.iter().map(|c| cosine(anchor, c) / tau).collect();
        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = logits.iter().map(|l| (l - mx).exp()).sum();
        total -= (logits[p] - mx) - denom.ln();
    }
    total / z_hat.len() as f64
}

fn fcl_oracle(views: &[(Vec<f64>, Vec<f64>)], tau: f64) -> f64 {
    let flat: Vec<&Vec<f64>> = views.iter().flat_map(|(a, b)| [a, b]).collect();
    let f_count = views.len();
    let mut total = 0.0;
    for f in 0..f_count {
        let pos = (cosine(flat[2 * f], flat[2 * f + 1]) / tau).exp();
        let mut denom = pos;
        for other in 0..f_count {
            if other == f {
                continue;
            }
            denom += (cosine(flat[2 * f], flat[2 * other]) / tau).exp();
            denom += (cosine(flat[2 * f], flat[2 * other + 1]) / tau).exp();
            denom += (cosine(flat[2 * f + 1], flat[2 * other + 1]) / tau).exp();
        }
        total -= (pos / denom).ln();
    }
    total / f_count as f64
}

#[test]
fn criterion_2_infonce_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut max_diff = 0.0_f64;
    // 50 random batches against each brute-force oracle.
    for _ in 0..50 {
        let n = rng.gen_range(2..=8);
        let d = rng.gen_range(2..=8);
        let tau = rng.gen_range(0.1..1.5);
        let row = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()
        };
        let hats: Vec<Vec<f64>> = (0..n).map(|_| row(&mut rng)).collect();
        let cands: Vec<Vec<f64>> = (0..n).map(|_| row(&mut rng)).collect();
        let pos: Vec<usize> = (0..n).collect();
        let mut tape = Tape::new();
        let a = tape.constant(vec![n, d], hats.concat());
        let b = tape.constant(vec![n, d], cands.concat());
        let loss = tcl_loss(&mut tape, a, b, &pos, tau).unwrap();
        max_diff = max_diff.max((tape.value(loss) - tcl_oracle(&hats, &cands, &pos, tau)).abs());

        let f_count = rng.gen_range(2..=8);
        let views: Vec<(Vec<f64>, Vec<f64>)> =
            (0..f_count).map(|_| (row(&mut rng), row(&mut rng))).collect();
        let mut tape = Tape::new();
        let nodes: Vec<_> = views
            .iter()
            .map(|(v1, v2)| {
                (
                    tape.constant(vec![1, d], v1.clone()),
                    tape.constant(vec![1, d], v2.clone()),
                )
            })
            .collect();
        let loss = fcl_loss(&mut tape, &nodes, tau).unwrap();
        max_diff = max_diff.max((tape.value(loss) - fcl_oracle(&views, tau)).abs());
    }

    // Hand case: one anchor, positive at cos 1, one negative at cos 0, tau 0.5
    // -> ln(1 + e^-2).
    let mut tape = Tape::new();
    let a = tape.constant(vec![1, 2], vec![1.0, 0.0]);
    let b = tape.constant(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]);
    let loss = tcl_loss(&mut tape, a, b, &[0], 0.5).unwrap();
    let hand_diff = (tape.value(loss) - (1.0 + (-2.0_f64).exp()).ln()).abs();

    let pass = max_diff < 1e-9 && hand_diff < 1e-12;
    report(
        "2 (InfoNCE oracle equivalence)",
        pass,
        &format!("50 batches, max |delta| {max_diff:.2e}; hand case |delta| {hand_diff:.2e}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 3. Permutation invariance

#[test]
fn criterion_3_permutation_invariance() {
    let spec = FunctionFamilySpec::standard(FunctionFamily::Sinusoid);
    let inst = sample_family_instantiation(&spec, 50, 3).unwrap();
    let mut store = ParamStore::new(9);
    let model = CcnpModel::new(&mut store, ModelConfig::default(), ModelVariant::Ccnp).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut max_diff = 0.0_f64;
    for _ in 0..100 {
        let size = rng.gen_range(1..=20);
        let mut all: Vec<usize> = (0..inst.len()).collect();
        all.shuffle(&mut rng);
        let ctx: Vec<usize> = all[..size].to_vec();
        let mut permuted = ctx.clone();
        permuted.shuffle(&mut rng);
        let mut tape = Tape::new();
        let b1 = model.represent(&mut tape, &store, &inst, &ctx).unwrap();
        let b2 = model.represent(&mut tape, &store, &inst, &permuted).unwrap();
        for (r1, r2) in [(b1.r_c, b2.r_c), (b1.r_t, b2.r_t), (b1.r_f, b2.r_f)] {
            for (x, y) in tape.data(r1).iter().zip(tape.data(r2)) {
                max_diff = max_diff.max((x - y).abs());
            }
        }
    }
    let pass = max_diff < 1e-10;
    report(
        "3 (permutation invariance)",
        pass,
        &format!("100 contexts (sizes 1-20), max |delta r| {max_diff:.2e}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 4. Lotka-Volterra physics

#[test]
fn criterion_4_lv_physics() {
    // Greek mode: fixed (4/3, 2/3, 1, 1), random initial populations.
    let sampling = LvSampling::standard(LvMode::Greek);
    let mut max_drift = 0.0_f64;
    for seed in 0..5 {
        let config = sampling.sample_config(seed).unwrap();
        assert!((config.alpha - 4.0 / 3.0).abs() < 1e-15);
        assert!((config.beta - 2.0 / 3.0).abs() < 1e-15);
        let inst = simulate_lv(&config, seed).unwrap();
        let v0 = config.conserved_quantity(inst.y_row(0)[0], inst.y_row(0)[1]);
        for i in 0..inst.len() {
            let row = inst.y_row(i);
            max_drift = max_drift.max((config.conserved_quantity(row[0], row[1]) - v0).abs());
        }
    }

    // Starting at the equilibrium (gamma/delta, alpha/beta) the state is fixed.
    let config = sampling.sample_config(0).unwrap();
    let (e1, e2) = config.equilibrium();
    let eq_config = LvConfig {
        y1_0: e1,
        y2_0: e2,
        ..config
    };
    let inst = simulate_lv(&eq_config, 0).unwrap();
    let mut max_eq = 0.0_f64;
    for i in 0..inst.len() {
        let row = inst.y_row(i);
        max_eq = max_eq.max((row[0] - e1).abs().max((row[1] - e2).abs()));
    }

    let pass = max_drift < 1e-6 && max_eq < 1e-9;
    report(
        "4 (LV physics)",
        pass,
        &format!("conserved drift {max_drift:.2e} (<1e-6), equilibrium drift {max_eq:.2e} (<1e-9)"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 5-7. Table-1 reproduction, ablation ordering, coefficient inference

fn sinusoid_dataset(count: usize, seed: u64) -> MetaDataset {
    let spec = DatasetSpec::Family {
        spec: FunctionFamilySpec::standard(FunctionFamily::Sinusoid),
        n_points: 50,
    };
    make_meta_dataset(&spec, count, (9, 1, 1), seed).unwrap()
}

/// Train one variant, then report (5-shot test MSE, probe MSE) for it. Only
/// the train+eval portion counts toward `train_secs`; the probe belongs to a
/// separate criterion.
fn train_eval_probe(
    variant: ModelVariant,
    dataset: &MetaDataset,
    seed: u64,
    with_probe: bool,
    train_secs: &mut f64,
) -> (f64, Option<f64>) {
    let t0 = Instant::now();
    let train = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    let mut trainer = build_variant(variant, ModelConfig::default(), train).unwrap();
    trainer.train_run(dataset, None).unwrap();
    let metrics = evaluate(&trainer.model, &trainer.store, &dataset.test, 5, seed).unwrap();
    *train_secs += t0.elapsed().as_secs_f64();
    let probe = if with_probe {
        let config = CoeffProbeConfig {
            seed,
            ..CoeffProbeConfig::default()
        };
        let r = coefficient_inference(
            &trainer.model,
            &trainer.store,
            &dataset.train,
            &dataset.test,
            &config,
        )
        .unwrap();
        Some(r.mse_combined)
    } else {
        None
    };
    (metrics.recon_mse, probe)
}

#[test]
fn criteria_5_6_7_table1_ablation_and_probe() {
    let dataset = sinusoid_dataset(700, 11);
    let seeds: Vec<u64> = (0..6).collect();
    let mut train_secs = 0.0;

    let mut cnp_mse = Vec::new();
    let mut ccnp_mse = Vec::new();
    let mut cnp_probe = Vec::new();
    let mut ccnp_probe = Vec::new();
    for &seed in &seeds {
        let (m, p) = train_eval_probe(ModelVariant::Cnp, &dataset, seed, true, &mut train_secs);
        cnp_mse.push(m);
        cnp_probe.push(p.unwrap());
        let (m, p) = train_eval_probe(ModelVariant::Ccnp, &dataset, seed, true, &mut train_secs);
        ccnp_mse.push(m);
        ccnp_probe.push(p.unwrap());
    }
    // Criterion 5: CCNP strictly below CNP and at most 3x the reported
    // 0.479e-2, within the 15-minute budget.
    let (cnp_mean, ccnp_mean) = (mean(&cnp_mse), mean(&ccnp_mse));
    let budget = 3.0 * 0.479e-2;
    let pass5 = ccnp_mean < cnp_mean && ccnp_mean <= budget && train_secs < 900.0;
    report(
        "5 (Table-1 desk-scale reproduction)",
        pass5,
        &format!(
            "5-shot MSE over 6 seeds: CCNP {ccnp_mean:.4e} < CNP {cnp_mean:.4e}, \
             budget {budget:.4e}, {train_secs:.0}s"
        ),
    );
    println!("  per-seed CNP MSE:  {}", fmt_vec(&cnp_mse));
    println!("  per-seed CCNP MSE: {}", fmt_vec(&ccnp_mse));

    // Criterion 6: full CCNP vs CCNP(-TCL) over 3 seeds, pass/warn.
    let mut notcl_mse = Vec::new();
    for &seed in &seeds[..3] {
        let mut unused = 0.0;
        let (m, _) =
            train_eval_probe(ModelVariant::CcnpMinusTcl, &dataset, seed, false, &mut unused);
        notcl_mse.push(m);
    }
    let full3 = &ccnp_mse[..3];
    let (full_mean, notcl_mean) = (mean(full3), mean(&notcl_mse));
    let pooled = ((sample_std(full3).powi(2) + sample_std(&notcl_mse).powi(2)) / 2.0).sqrt();
    let ordered = full_mean <= notcl_mean;
    let within_std = (full_mean - notcl_mean).abs() <= pooled;
    if ordered {
        report(
            "6 (ablation ordering)",
            true,
            &format!("CCNP {full_mean:.4e} <= CCNP(-TCL) {notcl_mean:.4e} (3 seeds)"),
        );
    } else if within_std {
        println!(
            "[WARN] criterion 6 (ablation ordering): CCNP {full_mean:.4e} > CCNP(-TCL) \
             {notcl_mean:.4e} but within 1 pooled std ({pooled:.4e})"
        );
    } else {
        report(
            "6 (ablation ordering)",
            false,
            &format!(
                "CCNP {full_mean:.4e} > CCNP(-TCL) {notcl_mean:.4e} by more than 1 pooled std \
                 ({pooled:.4e})"
            ),
        );
    }

    // Criterion 7: frozen-representation probe ordering over 6 seeds.
    let (cnp_p, ccnp_p) = (mean(&cnp_probe), mean(&ccnp_probe));
    let pass7 = ccnp_p < cnp_p;
    report(
        "7 (coefficient inference)",
        pass7,
        &format!("probe MSE over 6 seeds: CCNP {ccnp_p:.4e} < CNP {cnp_p:.4e}"),
    );
    println!("  per-seed CNP probe:  {}", fmt_vec(&cnp_probe));
    println!("  per-seed CCNP probe: {}", fmt_vec(&ccnp_probe));

    assert!(pass5);
    assert!(ordered || within_std, "ablation ordering violated beyond 1 pooled std");
    assert!(pass7);
}

// ---------------------------------------------------------------------------
// 8. GP samplers

/// Eigenvalues of a symmetric matrix by the cyclic Jacobi method.
fn symmetric_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    for _ in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += m[i * n + j] * m[i * n + j];
                }
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-18 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k * n + p], m[k * n + q]);
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p * n + k], m[q * n + k]);
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i * n + i]).collect()
}

#[test]
fn criterion_8_gp_samplers() {
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let kinds = [GpKernel::Rbf, GpKernel::Periodic, GpKernel::NoisyMatern];
    let n = 20;
    let mut min_eig = f64::INFINITY;
    let mut max_asym = 0.0_f64;
    for trial in 0..50 {
        let spec = GpKernelSpec {
            kind: kinds[trial % 3],
            lengthscale: rng.gen_range(0.3..2.0),
            period: rng.gen_range(0.5..2.0),
            nu: [0.5, 1.5, 2.5][rng.gen_range(0..3)],
            noise_std: 0.02,
        };
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let k = gp_gram(&spec, &x).unwrap();
        let mut jittered = k.clone();
        for i in 0..n {
            for j in 0..n {
                max_asym = max_asym.max((k[i * n + j] - k[j * n + i]).abs());
            }
            // Matches the sampler's minimum jitter level.
            jittered[i * n + i] += 1e-10;
        }
        for lambda in symmetric_eigenvalues(&jittered, n) {
            min_eig = min_eig.min(lambda);
        }
    }

    // Closed-form check: Matern nu = 1/2 is exp(-d/l).
    let spec = GpKernelSpec {
        kind: GpKernel::NoisyMatern,
        lengthscale: 0.7,
        period: 1.0,
        nu: 0.5,
        noise_std: 0.0,
    };
    let x: Vec<f64> = (0..n).map(|i| -2.0 + 4.0 * i as f64 / (n - 1) as f64).collect();
    let k = gp_gram(&spec, &x).unwrap();
    let mut max_matern = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let expect = (-(x[i] - x[j]).abs() / 0.7).exp();
            max_matern = max_matern.max((k[i * n + j] - expect).abs());
        }
    }

    let pass = max_asym == 0.0 && min_eig >= -1e-8 && max_matern < 1e-12;
    report(
        "8 (GP samplers)",
        pass,
        &format!(
            "50 grids: asymmetry {max_asym:.2e}, min eigenvalue {min_eig:.2e}, \
             Matern-1/2 closed form |delta| {max_matern:.2e}"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 9. Determinism

#[test]
fn criterion_9_run_determinism() {
    let dataset = sinusoid_dataset(24, 4);
    let dir = tempfile::tempdir().unwrap();
    let mut curve_files = Vec::new();
    for name in ["a", "b"] {
        let config = TrainConfig {
            epochs: 3,
            batch_size: 4,
            seed: 6,
            ..TrainConfig::default()
        };
        let mut trainer =
            build_variant(ModelVariant::Ccnp, ModelConfig::default(), config).unwrap();
        let out = dir.path().join(name);
        trainer.train_run(&dataset, Some(&out)).unwrap();
        curve_files.push(std::fs::read(out.join("curves.csv")).unwrap());
    }
    let pass = curve_files[0] == curve_files[1];
    report(
        "9 (run determinism)",
        pass,
        "repeated run reproduces curves.csv bitwise",
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// Reduced-scale dynamical-systems check: CCNP's validation LL exceeds
// CNP's after training on Greek-mode Lotka-Volterra.

#[test]
fn lv_validation_ll_ordering() {
    let spec = DatasetSpec::Lv {
        sampling: LvSampling::standard(LvMode::Greek),
    };
    let dataset = make_meta_dataset(&spec, 36, (9, 1, 1), 23).unwrap();
    let model = ModelConfig {
        y_dim: 2,
        ..ModelConfig::default()
    };
    let mut cnp_ll = Vec::new();
    let mut ccnp_ll = Vec::new();
    for seed in 0..3 {
        for (variant, out) in [
            (ModelVariant::Cnp, &mut cnp_ll),
            (ModelVariant::Ccnp, &mut ccnp_ll),
        ] {
            let config = TrainConfig {
                epochs: 200,
                batch_size: 8,
                seed,
                ..TrainConfig::default()
            };
            let mut trainer = build_variant(variant, model.clone(), config).unwrap();
            let artifacts = trainer.train_run(&dataset, None).unwrap();
            out.push(artifacts.curves.last().unwrap().val_ll);
        }
    }
    let (cnp_mean, ccnp_mean) = (mean(&cnp_ll), mean(&ccnp_ll));
    let pass = ccnp_mean > cnp_mean;
    report(
        "LV (validation LL ordering)",
        pass,
        &format!("final val LL over 3 seeds: CCNP {ccnp_mean:.4} > CNP {cnp_mean:.4}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// Supplementary: the loss-weight defaults are a documented choice; a small
// sensitivity sweep over alpha = beta in {0.1, 0.5, 1.0} must train cleanly.

#[test]
fn supplementary_loss_weight_sensitivity() {
    let dataset = sinusoid_dataset(24, 8);
    let mut ok = true;
    let mut detail = String::new();
    for w in [0.1, 0.5, 1.0] {
        let mut config = TrainConfig {
            epochs: 2,
            batch_size: 4,
            seed: 1,
            ..TrainConfig::default()
        };
        config.weights.alpha = w;
        config.weights.beta = w;
        let mut trainer =
            build_variant(ModelVariant::Ccnp, ModelConfig::default(), config).unwrap();
        let artifacts = trainer.train_run(&dataset, None).unwrap();
        let last = artifacts.curves.last().unwrap();
        ok &= last.frl.is_finite()
            && last.tcl.is_some_and(f64::is_finite)
            && last.fcl.is_some_and(f64::is_finite)
            && last.val_ll.is_finite();
        detail.push_str(&format!("w={w}: frl {:.3}; ", last.frl));
    }
    report("supplementary (loss-weight sweep)", ok, detail.trim_end());
    assert!(ok);
}
