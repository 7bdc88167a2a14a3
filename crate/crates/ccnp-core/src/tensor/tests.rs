use super::*;
use crate::tensor::gradcheck;

fn scalar_tape(v: f64) -> (Tape, NodeId) {
    let mut t = Tape::new();
    let x = t.leaf(vec![1], vec![v], true);
    (t, x)
}

#[test]
fn softplus_at_zero_is_ln2() {
    let (mut t, x) = scalar_tape(0.0);
    let y = t.softplus(x).unwrap();
    assert!((t.value(y) - std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn cosine_sim_self_is_one() {
    let mut t = Tape::new();
    let a = t.leaf(vec![3], vec![0.3, -1.2, 2.0], false);
    let s = t.cosine_sim(a, a).unwrap();
    assert!((t.value(s) - 1.0).abs() < 1e-12);
}

#[test]
fn cosine_sim_zero_norm_errors() {
    let mut t = Tape::new();
    let a = t.leaf(vec![2], vec![0.0, 0.0], false);
    let b = t.leaf(vec![2], vec![1.0, 0.0], false);
    assert!(matches!(
        t.cosine_sim(a, b),
        Err(crate::CcnpError::ZeroNormEmbedding)
    ));
}

#[test]
fn matmul_identity_unchanged() {
    let mut t = Tape::new();
    let a = t.leaf(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0], false);
    let eye = t.leaf(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0], false);
    let out = t.matmul(a, eye).unwrap();
    assert_eq!(t.data(out), &[1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn matmul_shape_mismatch_names_op() {
    let mut t = Tape::new();
    let a = t.leaf(vec![2, 3], vec![0.0; 6], false);
    let b = t.leaf(vec![2, 2], vec![0.0; 4], false);
    let err = t.matmul(a, b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("matmul") && msg.contains("[2, 3]") && msg.contains("[2, 2]"));
}

#[test]
fn backward_square_at_three() {
    let (mut t, x) = scalar_tape(3.0);
    let y = t.square(x).unwrap();
    t.backward(y).unwrap();
    assert!((t.grad(x)[0] - 6.0).abs() < 1e-12);
}

#[test]
fn backward_softplus_at_zero() {
    let (mut t, x) = scalar_tape(0.0);
    let y = t.softplus(x).unwrap();
    t.backward(y).unwrap();
    assert!((t.grad(x)[0] - 0.5).abs() < 1e-12);
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut t = Tape::new();
    let x = t.leaf(vec![2], vec![1.0, 2.0], true);
    let y = t.square(x).unwrap();
    assert!(matches!(
        t.backward(y),
        Err(crate::CcnpError::NonScalarLoss { .. })
    ));
}

#[test]
fn backward_accumulates_linearly() {
    // grad after backward(l1) then backward(l2) equals grad(l1) + grad(l2)
    let mut t = Tape::new();
    let x = t.leaf(vec![1], vec![2.0], true);
    let l1 = t.square(x).unwrap();
    let l2 = t.exp(x).unwrap();
    t.backward(l1).unwrap();
    t.backward(l2).unwrap();
    let expected = 2.0 * 2.0 + (2.0f64).exp();
    assert!((t.grad(x)[0] - expected).abs() < 1e-10);
}

#[test]
fn softmax_rows_sum_to_one_and_positive() {
    let mut t = Tape::new();
    let x = t.leaf(vec![3, 4], (0..12).map(|i| (i as f64) * 0.7 - 4.0).collect(), false);
    let s = t.softmax(x).unwrap();
    for r in 0..3 {
        let row = &t.data(s)[r * 4..(r + 1) * 4];
        let sum: f64 = row.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(row.iter().all(|&v| v > 0.0));
    }
}

#[test]
fn mean_of_constant_is_constant() {
    let mut t = Tape::new();
    let x = t.leaf(vec![4, 3], vec![2.5; 12], false);
    for axis in [None, Some(0), Some(1)] {
        let m = t.mean(x, axis).unwrap();
        assert!(t.data(m).iter().all(|&v| (v - 2.5).abs() < 1e-15));
    }
}

#[test]
fn non_finite_forward_is_an_error() {
    let mut t = Tape::new();
    let x = t.leaf(vec![1], vec![0.0], false);
    assert!(matches!(t.log(x), Err(crate::CcnpError::NonFinite { .. })));
}

#[test]
fn adam_first_step_magnitude() {
    let mut store = ParamStore::new(0);
    let pid = store.add_with_value("w", vec![1], vec![1.0]);
    store.add_grad(pid, &[0.3]);
    let mut opt = Adam::new(AdamConfig::default());
    opt.step(&mut store, &[pid]).unwrap();
    // bias-corrected first step moves by ~lr * sign(g)
    let moved = 1.0 - store.get(pid).value[0];
    assert!((moved - 1e-3).abs() < 1e-6, "moved {moved}");
}

#[test]
fn adam_zero_grad_leaves_param_unchanged() {
    let mut store = ParamStore::new(0);
    let pid = store.add_with_value("w", vec![1], vec![0.7]);
    store.add_grad(pid, &[0.0]);
    let mut opt = Adam::new(AdamConfig::default());
    opt.step(&mut store, &[pid]).unwrap();
    assert_eq!(store.get(pid).value[0], 0.7);
}

#[test]
fn adam_missing_grad_errors() {
    let mut store = ParamStore::new(0);
    let pid = store.add_with_value("w", vec![1], vec![0.7]);
    let mut opt = Adam::new(AdamConfig::default());
    assert!(matches!(
        opt.step(&mut store, &[pid]),
        Err(crate::CcnpError::MissingGradient { .. })
    ));
}

#[test]
fn adam_converges_on_quadratic() {
    // 100 steps of f(x) = x^2 from x = 1 at lr = 0.1 brings |x| under 0.05
    let mut store = ParamStore::new(0);
    let pid = store.add_with_value("x", vec![1], vec![1.0]);
    let mut opt = Adam::new(AdamConfig {
        lr: 0.1,
        ..AdamConfig::default()
    });
    for _ in 0..100 {
        store.zero_grad();
        let mut tape = Tape::new();
        let x = tape.param(&store, pid);
        let loss = tape.square(x).unwrap();
        tape.backward(loss).unwrap();
        tape.accumulate_param_grads(&mut store);
        opt.step(&mut store, &[pid]).unwrap();
    }
    assert!(store.get(pid).value[0].abs() < 0.05);
}

#[test]
fn param_init_is_name_seeded() {
    let mut a = ParamStore::new(7);
    a.add_uniform("other", vec![4, 4], 4);
    a.add_uniform("shared", vec![3, 3], 3);
    let mut b = ParamStore::new(7);
    b.add_uniform("shared", vec![3, 3], 3);
    let ia = a.lookup("shared").unwrap();
    let ib = b.lookup("shared").unwrap();
    assert_eq!(a.get(ia).value, b.get(ib).value);
}

#[test]
fn gradcheck_suite_passes() {
    let reports = gradcheck::run_suite(42, 10).unwrap();
    for r in &reports {
        assert!(
            r.passed,
            "op {} failed gradcheck with max rel err {:.3e}",
            r.op, r.max_rel_err
        );
    }
}
