use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::datagen::{sample_family_instantiation, FunctionFamily, FunctionFamilySpec};
use crate::tensor::{ParamStore, Tape};

fn test_instantiation(n_points: usize, seed: u64) -> crate::datagen::Instantiation {
    let spec = FunctionFamilySpec::standard(FunctionFamily::Sinusoid);
    sample_family_instantiation(&spec, n_points, seed).unwrap()
}

fn build(variant: ModelVariant, seed: u64) -> (CcnpModel, ParamStore) {
    let mut store = ParamStore::new(seed);
    let model = CcnpModel::new(&mut store, ModelConfig::default(), variant).unwrap();
    (model, store)
}

#[test]
fn encode_single_pair_shape() {
    let (model, store) = build(ModelVariant::Ccnp, 0);
    let inst = test_instantiation(10, 1);
    let mut tape = Tape::new();
    let rows = model
        .encode_context(&mut tape, &store, Branch::C, &inst, &[3])
        .unwrap();
    assert_eq!(tape.shape(rows), &[1, 64]);
}

#[test]
fn encode_duplicate_pair_gives_identical_rows() {
    let (model, store) = build(ModelVariant::Ccnp, 0);
    let inst = test_instantiation(10, 1);
    let mut tape = Tape::new();
    let rows = model
        .encode_context(&mut tape, &store, Branch::T, &inst, &[4, 4])
        .unwrap();
    let d = tape.data(rows);
    assert_eq!(&d[..64], &d[64..]);
}

#[test]
fn encode_rows_permute_with_inputs() {
    let (model, store) = build(ModelVariant::Ccnp, 0);
    let inst = test_instantiation(10, 1);
    let mut tape = Tape::new();
    let fwd = model
        .encode_context(&mut tape, &store, Branch::F, &inst, &[1, 5, 8])
        .unwrap();
    let rev = model
        .encode_context(&mut tape, &store, Branch::F, &inst, &[8, 5, 1])
        .unwrap();
    let (df, dr) = (tape.data(fwd).to_vec(), tape.data(rev).to_vec());
    assert_eq!(&df[..64], &dr[128..]);
    assert_eq!(&df[64..128], &dr[64..128]);
    assert_eq!(&df[128..], &dr[..64]);
}

#[test]
fn encode_empty_context_errors() {
    let (model, store) = build(ModelVariant::Ccnp, 0);
    let inst = test_instantiation(10, 1);
    let mut tape = Tape::new();
    assert!(model
        .encode_context(&mut tape, &store, Branch::C, &inst, &[])
        .is_err());
}

#[test]
fn aggregation_is_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for variant in [ModelVariant::Ccnp, ModelVariant::Cnp] {
        let (model, store) = build(variant, 2);
        for trial in 0..30 {
            let inst = test_instantiation(25, trial);
            let size = rng.gen_range(1..=20);
            let mut indices: Vec<usize> = (0..25).collect();
            indices.shuffle(&mut rng);
            indices.truncate(size);
            let mut permuted = indices.clone();
            permuted.shuffle(&mut rng);
            let mut tape = Tape::new();
            let a = model.represent(&mut tape, &store, &inst, &indices).unwrap();
            let b = model.represent(&mut tape, &store, &inst, &permuted).unwrap();
            for (x, y) in [(a.r_c, b.r_c), (a.r_t, b.r_t), (a.r_f, b.r_f)] {
                for (u, v) in tape.data(x).iter().zip(tape.data(y)) {
                    assert!((u - v).abs() < 1e-10);
                }
            }
        }
    }
}

#[test]
fn duplicated_row_aggregates_like_single_row() {
    // softmax over identical keys is uniform, so attending over two copies of
    // one pair equals attending over the pair alone
    let (model, store) = build(ModelVariant::Ccnp, 3);
    let inst = test_instantiation(10, 2);
    let mut tape = Tape::new();
    let one = model
        .encode_context(&mut tape, &store, Branch::C, &inst, &[6])
        .unwrap();
    let two = model
        .encode_context(&mut tape, &store, Branch::C, &inst, &[6, 6])
        .unwrap();
    let r1 = model.aggregate(&mut tape, &store, Branch::C, one).unwrap();
    let r2 = model.aggregate(&mut tape, &store, Branch::C, two).unwrap();
    for (u, v) in tape.data(r1).iter().zip(tape.data(r2)) {
        assert!((u - v).abs() < 1e-12);
    }
}

#[test]
fn sigma_transform_values() {
    let mut tape = Tape::new();
    let zero = tape.constant(vec![1], vec![0.0]);
    let s = sigma_transform(&mut tape, zero).unwrap();
    assert!((tape.value(s) - (0.9 * 2f64.ln() + 0.1)).abs() < 1e-12);
    let neg = tape.constant(vec![1], vec![-40.0]);
    let s = sigma_transform(&mut tape, neg).unwrap();
    assert!((tape.value(s) - 0.1).abs() < 1e-12);
}

#[test]
fn decode_sigma_stays_above_floor() {
    let (model, store) = build(ModelVariant::Ccnp, 4);
    let inst = test_instantiation(30, 5);
    let mut tape = Tape::new();
    let bundle = model
        .represent(&mut tape, &store, &inst, &[0, 7, 14, 21, 28])
        .unwrap();
    let pred = model.decode(&mut tape, &store, &inst.x, &bundle).unwrap();
    assert_eq!(tape.shape(pred.mu), &[30, 1]);
    assert_eq!(tape.shape(pred.sigma), &[30, 1]);
    assert!(tape.data(pred.sigma).iter().all(|&s| s > 0.1));
}

#[test]
fn tcl_embeddings_have_projection_shape() {
    let (model, store) = build(ModelVariant::Ccnp, 6);
    let inst = test_instantiation(12, 3);
    let mut tape = Tape::new();
    let bundle = model.represent(&mut tape, &store, &inst, &[0, 3, 6]).unwrap();
    let (z_hat, z) = model
        .tcl_embed(&mut tape, &store, &inst.x[..5], bundle.r_t, &inst.y[..5])
        .unwrap();
    assert_eq!(tape.shape(z_hat), &[5, 8]);
    assert_eq!(tape.shape(z), &[5, 8]);
}

#[test]
fn fcl_halves_partition_the_context() {
    let (model, store) = build(ModelVariant::Ccnp, 7);
    let inst = test_instantiation(12, 4);
    let mut tape = Tape::new();
    let views = model
        .fcl_embed(&mut tape, &store, &inst, &[0, 2, 4, 6], 11)
        .unwrap();
    assert_eq!(views.half1.len(), 2);
    assert_eq!(views.half2.len(), 2);
    let views = model
        .fcl_embed(&mut tape, &store, &inst, &[0, 2, 4, 6, 8], 11)
        .unwrap();
    assert_eq!(views.half1.len(), 2);
    assert_eq!(views.half2.len(), 3);
    let mut union: Vec<usize> = views.half1.iter().chain(&views.half2).copied().collect();
    union.sort_unstable();
    assert_eq!(union, vec![0, 2, 4, 6, 8]);
    assert_eq!(tape.shape(views.q1), &[1, 8]);
    assert!(model.fcl_embed(&mut tape, &store, &inst, &[3], 11).is_err());
}

#[test]
fn every_active_parameter_receives_gradient() {
    for shared in [false, true] {
        let mut store = ParamStore::new(8);
        let config = ModelConfig {
            shared_tcl_projection: shared,
            ..ModelConfig::default()
        };
        let model = CcnpModel::new(&mut store, config, ModelVariant::Ccnp).unwrap();
        let inst = test_instantiation(16, 6);
        let mut tape = Tape::new();
        let indices: Vec<usize> = (0..8).collect();
        let bundle = model.represent(&mut tape, &store, &inst, &indices).unwrap();
        let pred = model.decode(&mut tape, &store, &inst.x, &bundle).unwrap();
        let (z_hat, z) = model
            .tcl_embed(&mut tape, &store, &inst.x, bundle.r_t, &inst.y)
            .unwrap();
        let views = model.fcl_embed(&mut tape, &store, &inst, &indices, 0).unwrap();
        let parts = [pred.mu, pred.sigma, z_hat, z, views.q1, views.q2];
        let sums: Vec<_> = parts
            .iter()
            .map(|&p| tape.sum(p, None).unwrap())
            .collect();
        let cat = tape.concat(&sums, 0).unwrap();
        let loss = tape.sum(cat, None).unwrap();
        tape.backward(loss).unwrap();
        tape.accumulate_param_grads(&mut store);
        let inactive = if shared { "head.obs_proj" } else { "head.obs_feat" };
        for (_, p) in store.iter() {
            if p.name.starts_with(inactive) {
                continue;
            }
            assert!(
                p.grad.iter().any(|&g| g != 0.0),
                "parameter {} got no gradient",
                p.name
            );
        }
    }
}

#[test]
fn variants_share_initialization_by_name() {
    let (_, store_a) = build(ModelVariant::Cnp, 42);
    let (_, store_b) = build(ModelVariant::Ccnp, 42);
    for (_, p) in store_a.iter() {
        let id = store_b.lookup(&p.name).unwrap();
        assert_eq!(p.value, store_b.get(id).value, "{} differs", p.name);
    }
}

#[test]
fn variant_names_round_trip() {
    for v in [
        ModelVariant::Cnp,
        ModelVariant::AttnCnp,
        ModelVariant::Ccnp,
        ModelVariant::CcnpMinusAttn,
        ModelVariant::CcnpMinusTcl,
        ModelVariant::CcnpMinusFcl,
    ] {
        assert_eq!(v.name().parse::<ModelVariant>().unwrap(), v);
    }
    assert!("ccnp-lab".parse::<ModelVariant>().is_err());
}
