//! Central finite-difference verification of every backward rule.
//!
//! Each op is wrapped as `inputs -> sum(op(inputs) * w)` for a fixed random
//! weighting `w`, which exercises the full Jacobian rather than just the
//! row sums.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::{NodeId, Tape};

const H: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub op: String,
    pub cases: usize,
    pub max_rel_err: f64,
    pub passed: bool,
}

/// Relative error with an absolute floor of 1e-7.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff < 1e-7 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(1e-7)
}

/// Compare analytic gradients of a scalar-valued tape program against
/// central finite differences; returns the worst relative error over all
/// input coordinates.
pub fn check_fn<F>(shapes: &[Vec<usize>], inputs: &[Vec<f64>], f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    let eval = |data: &[Vec<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = shapes
            .iter()
            .zip(data)
            .map(|(s, d)| tape.leaf(s.clone(), d.clone(), false))
            .collect();
        let loss = f(&mut tape, &ids)?;
        Ok(tape.value(loss))
    };

    let mut tape = Tape::new();
    let ids: Vec<NodeId> = shapes
        .iter()
        .zip(inputs)
        .map(|(s, d)| tape.leaf(s.clone(), d.clone(), true))
        .collect();
    let loss = f(&mut tape, &ids)?;
    tape.backward(loss)?;

    let mut worst: f64 = 0.0;
    let mut perturbed: Vec<Vec<f64>> = inputs.to_vec();
    for (k, id) in ids.iter().enumerate() {
        for i in 0..inputs[k].len() {
            let orig = perturbed[k][i];
            perturbed[k][i] = orig + H;
            let up = eval(&perturbed)?;
            perturbed[k][i] = orig - H;
            let down = eval(&perturbed)?;
            perturbed[k][i] = orig;
            let numeric = (up - down) / (2.0 * H);
            let analytic = tape.grad(*id)[i];
            worst = worst.max(rel_err(analytic, numeric));
        }
    }
    Ok(worst)
}

fn rand_data(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Random data away from the origin, for ops with a kink or a pole there.
fn rand_data_off_zero(rng: &mut ChaCha8Rng, n: usize, min_abs: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(min_abs..2.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect()
}

fn weighted_loss(tape: &mut Tape, out: NodeId, rng: &mut ChaCha8Rng) -> Result<NodeId> {
    let n = tape.data(out).len();
    let shape = tape.shape(out).to_vec();
    let w = tape.constant(shape, rand_data(rng, n, -1.0, 1.0));
    let prod = tape.mul(out, w)?;
    tape.sum(prod, None)
}

/// Run the finite-difference suite over every op, `cases` random shapes each.
pub fn run_suite(seed: u64, cases: usize) -> Result<Vec<GradCheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::new();
    let mut record = |op: &str, errs: Vec<f64>| {
        let max = errs.iter().cloned().fold(0.0, f64::max);
        reports.push(GradCheckReport {
            op: op.to_string(),
            cases: errs.len(),
            max_rel_err: max,
            passed: max < 1e-4,
        });
    };

    macro_rules! binary_case {
        ($name:literal, $method:ident) => {{
            let mut errs = Vec::new();
            for _ in 0..cases {
                let m = rng.gen_range(1..5usize);
                let n = rng.gen_range(1..5usize);
                // same shape, scalar broadcast, and suffix broadcast
                let variants: [(Vec<usize>, Vec<usize>); 3] =
                    [(vec![m, n], vec![m, n]), (vec![m, n], vec![1]), (vec![m, n], vec![n])];
                for (sa, sb) in variants {
                    let da = rand_data_off_zero(&mut rng, m * n, 0.3);
                    let db = rand_data_off_zero(&mut rng, sb.iter().product(), 0.3);
                    let wrng = ChaCha8Rng::seed_from_u64(rng.gen());
                    let err = check_fn(&[sa, sb], &[da, db], |t, ids| {
                        let out = t.$method(ids[0], ids[1])?;
                        weighted_loss(t, out, &mut wrng.clone())
                    })?;
                    errs.push(err);
                }
            }
            record($name, errs);
        }};
    }

    macro_rules! unary_case {
        ($name:literal, $lo:expr, $hi:expr, $builder:expr) => {{
            let mut errs = Vec::new();
            for _ in 0..cases {
                let m = rng.gen_range(1..6usize);
                let n = rng.gen_range(1..6usize);
                let da = rand_data(&mut rng, m * n, $lo, $hi);
                let wrng = ChaCha8Rng::seed_from_u64(rng.gen());
                #[allow(clippy::redundant_closure_call)]
                let err = check_fn(&[vec![m, n]], &[da], |t: &mut Tape, ids: &[NodeId]| {
                    let out = ($builder)(t, ids[0])?;
                    weighted_loss(t, out, &mut wrng.clone())
                })?;
                errs.push(err);
            }
            record($name, errs);
        }};
    }

    binary_case!("add", add);
    binary_case!("sub", sub);
    binary_case!("mul", mul);
    binary_case!("div", div);

    // matmul
    {
        let mut errs = Vec::new();
        for _ in 0..cases {
            let (m, k, n) = (
                rng.gen_range(1..5usize),
                rng.gen_range(1..5usize),
                rng.gen_range(1..5usize),
            );
            let da = rand_data(&mut rng, m * k, -2.0, 2.0);
            let db = rand_data(&mut rng, k * n, -2.0, 2.0);
            let wrng = ChaCha8Rng::seed_from_u64(rng.gen());
            let err = check_fn(&[vec![m, k], vec![k, n]], &[da, db], |t, ids| {
                let out = t.matmul(ids[0], ids[1])?;
                weighted_loss(t, out, &mut wrng.clone())
            })?;
            errs.push(err);
        }
        record("matmul", errs);
    }

    unary_case!("relu", -2.0, 2.0, |t: &mut Tape, id| {
        // nudge away from the kink: relu is not differentiable at 0
        let shifted = t.add_scalar(id, 3.0)?;
        t.relu(shifted)
    });
    unary_case!("softplus", -4.0, 4.0, |t: &mut Tape, id| t.softplus(id));
    unary_case!("log", 0.2, 3.0, |t: &mut Tape, id| t.log(id));
    unary_case!("exp", -2.0, 2.0, |t: &mut Tape, id| t.exp(id));
    unary_case!("square", -2.0, 2.0, |t: &mut Tape, id| t.square(id));
    unary_case!("sqrt", 0.2, 3.0, |t: &mut Tape, id| t.sqrt(id));
    unary_case!("scale", -2.0, 2.0, |t: &mut Tape, id| t.scale(id, -1.7));
    unary_case!("add_scalar", -2.0, 2.0, |t: &mut Tape, id| {
        t.add_scalar(id, 0.42)
    });
    unary_case!("softmax", -3.0, 3.0, |t: &mut Tape, id| t.softmax(id));
    unary_case!("transpose", -2.0, 2.0, |t: &mut Tape, id| t.transpose(id));
    unary_case!("reshape", -2.0, 2.0, |t: &mut Tape, id| {
        let n = t.data(id).len();
        t.reshape(id, vec![n])
    });

    // mean / sum over each axis and over all
    for (name, mean) in [("mean", true), ("sum", false)] {
        let mut errs = Vec::new();
        for _ in 0..cases {
            let m = rng.gen_range(1..6usize);
            let n = rng.gen_range(1..6usize);
            for axis in [None, Some(0), Some(1)] {
                let da = rand_data(&mut rng, m * n, -2.0, 2.0);
                let wrng = ChaCha8Rng::seed_from_u64(rng.gen());
                let err = check_fn(&[vec![m, n]], &[da], |t, ids| {
                    let out = if mean {
                        t.mean(ids[0], axis)?
                    } else {
                        t.sum(ids[0], axis)?
                    };
                    weighted_loss(t, out, &mut wrng.clone())
                })?;
                errs.push(err);
            }
        }
        record(name, errs);
    }

    // concat along both axes
    {
        let mut errs = Vec::new();
        for _ in 0..cases {
            let m = rng.gen_range(1..4usize);
            let (n1, n2) = (rng.gen_range(1..4usize), rng.gen_range(1..4usize));
            for axis in [0usize, 1] {
                let (sa, sb) = if axis == 0 {
                    (vec![n1, m], vec![n2, m])
                } else {
                    (vec![m, n1], vec![m, n2])
                };
                let da = rand_data(&mut rng, sa.iter().product(), -2.0, 2.0);
                let db = rand_data(&mut rng, sb.iter().product(), -2.0, 2.0);
                let wrng = ChaCha8Rng::seed_from_u64(rng.gen());
                let err = check_fn(&[sa, sb], &[da, db], |t, ids| {
                    let out = t.concat(&[ids[0], ids[1]], axis)?;
                    weighted_loss(t, out, &mut wrng.clone())
                })?;
                errs.push(err);
            }
        }
        record("concat", errs);
    }

    // cosine similarity between row sets
    {
        let mut errs = Vec::new();
        for _ in 0..cases {
            let (m, n, d) = (
                rng.gen_range(1..4usize),
                rng.gen_range(1..4usize),
                rng.gen_range(2..5usize),
            );
            let da = rand_data_off_zero(&mut rng, m * d, 0.3);
            let db = rand_data_off_zero(&mut rng, n * d, 0.3);
            let wrng = ChaCha8Rng::seed_from_u64(rng.gen());
            let err = check_fn(&[vec![m, d], vec![n, d]], &[da, db], |t, ids| {
                let out = t.cosine_sim(ids[0], ids[1])?;
                weighted_loss(t, out, &mut wrng.clone())
            })?;
            errs.push(err);
        }
        record("cosine_sim", errs);
    }

    // gather_rows
    {
        let mut errs = Vec::new();
        for _ in 0..cases {
            let m = rng.gen_range(2..6usize);
            let n = rng.gen_range(1..5usize);
            let k = rng.gen_range(1..2 * m);
            let indices: Vec<usize> = (0..k).map(|_| rng.gen_range(0..m)).collect();
            let da = rand_data(&mut rng, m * n, -2.0, 2.0);
            let wrng = ChaCha8Rng::seed_from_u64(rng.gen());
            let err = check_fn(&[vec![m, n]], &[da], |t, ids| {
                let out = t.gather_rows(ids[0], &indices)?;
                weighted_loss(t, out, &mut wrng.clone())
            })?;
            errs.push(err);
        }
        record("gather_rows", errs);
    }

    Ok(reports)
}
