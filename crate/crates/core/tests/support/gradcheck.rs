//! Central finite-difference checks of every differentiable operation and of
//! the composed model loss. Step 1e-5, relative error at most 1e-4, 100
//! random trials per operation.

use std::rc::Rc;

use cauemo::autodiff::{rng_from_seed, Array, Rng, Tape, Tensor};
use cauemo::datasets::{generate_spurious_motif, MotifSpec};
use cauemo::gnn::{GnnConfig, PackedGraph};
use cauemo::graph::GraphBatch;
use cauemo::model::{Mode, Model, ModelConfig, ModelKind, ObjectiveCenter};
use cauemo::sci::{sci_forward, Classifier, SciConfig, SciWeights};
use cauemo::Result;
use rand::Rng as _;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;
const TRIALS: usize = 100;

/// `|a - n| / max(|a|, |n|, 1e-3)`: relative error, with an absolute floor
/// for gradients that are essentially zero.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

fn uniform(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Array {
    let n = shape.iter().product();
    Array::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Values in `[-2, 2]` kept at least `gap` away from every point in `kinks`.
fn away_from(rng: &mut Rng, shape: &[usize], kinks: &[f64], gap: f64) -> Array {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let x: f64 = rng.random_range(-2.0..2.0);
            if kinks.iter().all(|k| (x - k).abs() > gap) {
                break x;
            }
        })
        .collect();
    Array::new(shape, data).unwrap()
}

/// Scalarizes `f(inputs)` with a fixed random projection and compares the
/// tape gradient of every input entry to central differences.
fn check<F>(name: &str, seed: u64, inputs: impl Fn(&mut Rng) -> Vec<Array>, f: F)
where
    F: for<'t> Fn(&'t Tape, &[Tensor<'t>]) -> Result<Tensor<'t>>,
{
    let mut rng = rng_from_seed(seed);
    let mut worst = 0.0f64;
    for trial in 0..TRIALS {
        let xs = inputs(&mut rng);
        let probe = {
            let tape = Tape::new();
            let ts: Vec<_> = xs.iter().map(|x| tape.constant(x.clone())).collect();
            f(&tape, &ts).unwrap().shape()
        };
        let proj = uniform(&mut rng, &probe, -1.0, 1.0);
        let eval = |xs: &[Array]| -> f64 {
            let tape = Tape::new();
            let ts: Vec<_> = xs.iter().map(|x| tape.constant(x.clone())).collect();
            let out = f(&tape, &ts).unwrap();
            out.mul(tape.constant(proj.clone())).unwrap().sum().item()
        };
        let tape = Tape::new();
        let ts: Vec<_> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        let out = f(&tape, &ts).unwrap();
        let loss = out.mul(tape.constant(proj.clone())).unwrap().sum();
        let grads = tape.gradients(loss, &ts).unwrap();
        for (k, g) in grads.iter().enumerate() {
            for i in 0..xs[k].numel() {
                let mut plus = xs.clone();
                plus[k].data_mut()[i] += STEP;
                let mut minus = xs.clone();
                minus[k].data_mut()[i] -= STEP;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * STEP);
                let e = rel_err(g.data()[i], numeric);
                worst = worst.max(e);
                assert!(
                    e <= TOL,
                    "{name}: trial {trial}, input {k}[{i}]: analytic {} vs numeric {numeric} (rel err {e:e})",
                    g.data()[i]
                );
            }
        }
    }
    eprintln!("{name}: worst relative error {worst:.2e} over {TRIALS} trials");
}

fn dims(rng: &mut Rng) -> (usize, usize) {
    (rng.random_range(1..5), rng.random_range(1..5))
}

pub fn matmul_and_bmm() {
    check(
        "matmul",
        1,
        |r| {
            let (m, k) = dims(r);
            let n = r.random_range(1..5);
            vec![uniform(r, &[m, k], -1.0, 1.0), uniform(r, &[k, n], -1.0, 1.0)]
        },
        |_, t| t[0].matmul(t[1]),
    );
    check(
        "bmm",
        2,
        |r| {
            let (b, m) = dims(r);
            let (k, n) = dims(r);
            vec![uniform(r, &[b, m, k], -1.0, 1.0), uniform(r, &[b, k, n], -1.0, 1.0)]
        },
        |_, t| t[0].bmm(t[1]),
    );
}

pub fn shape_operations() {
    check(
        "transpose",
        3,
        |r| {
            let (a, b) = dims(r);
            vec![uniform(r, &[2, a, b], -1.0, 1.0)]
        },
        |_, t| t[0].transpose(),
    );
    check(
        "reshape",
        4,
        |r| {
            let (a, b) = dims(r);
            vec![uniform(r, &[a, b], -1.0, 1.0)]
        },
        |_, t| {
            let n = t[0].value().numel();
            t[0].reshape(&[n])
        },
    );
    check(
        "concat",
        5,
        |r| {
            let (a, b) = dims(r);
            let c = r.random_range(1..4);
            vec![uniform(r, &[a, b], -1.0, 1.0), uniform(r, &[a, c], -1.0, 1.0)]
        },
        |_, t| {
            let cols = Tensor::concat(&[t[0], t[1]], 1)?;
            let rows = Tensor::concat(&[t[0].transpose()?, t[1].transpose()?], 0)?;
            cols.add(rows.transpose()?)
        },
    );
    check(
        "gather_rows",
        6,
        |r| {
            let (a, b) = dims(r);
            vec![uniform(r, &[a, b], -1.0, 1.0)]
        },
        |_, t| {
            let n = t[0].shape()[0];
            let idx: Vec<usize> = (0..2 * n).map(|i| (i * 7 + 3) % n).collect();
            t[0].gather_rows(&idx)
        },
    );
}

pub fn elementwise_binary() {
    let pair = |r: &mut Rng| {
        let (a, b) = dims(r);
        vec![uniform(r, &[a, b], -2.0, 2.0), uniform(r, &[a, b], -2.0, 2.0)]
    };
    check("add", 7, pair, |_, t| t[0].add(t[1]));
    check("sub", 8, pair, |_, t| t[0].sub(t[1]));
    check("mul", 9, pair, |_, t| t[0].mul(t[1]));
    check(
        "add_bias",
        10,
        |r| {
            let (a, b) = dims(r);
            vec![uniform(r, &[a, b], -1.0, 1.0), uniform(r, &[b], -1.0, 1.0)]
        },
        |_, t| t[0].add_bias(t[1]),
    );
    check(
        "scale_rows",
        11,
        |r| {
            let (a, b) = dims(r);
            vec![uniform(r, &[a, b], -1.0, 1.0), uniform(r, &[a, 1], -1.0, 1.0)]
        },
        |_, t| t[0].scale_rows(t[1]),
    );
}

pub fn elementwise_unary() {
    let one = |r: &mut Rng| {
        let (a, b) = dims(r);
        vec![uniform(r, &[a, b], -2.0, 2.0)]
    };
    check("scale", 12, one, |_, t| Ok(t[0].scale(-1.7)));
    check("add_scalar", 13, one, |_, t| Ok(t[0].add_scalar(0.3)));
    check("complement", 14, one, |_, t| Ok(t[0].complement()));
    check("sigmoid", 15, one, |_, t| Ok(t[0].sigmoid()));
    check("tanh", 16, one, |_, t| Ok(t[0].tanh()));
    check(
        "relu",
        17,
        |r| {
            let (a, b) = dims(r);
            vec![away_from(r, &[a, b], &[0.0], 1e-3)]
        },
        |_, t| Ok(t[0].relu()),
    );
    check(
        "clamp",
        18,
        |r| {
            let (a, b) = dims(r);
            vec![away_from(r, &[a, b], &[-0.5, 0.8], 1e-3)]
        },
        |_, t| Ok(t[0].clamp(-0.5, 0.8)),
    );
    check(
        "powf",
        19,
        |r| {
            let (a, b) = dims(r);
            vec![uniform(r, &[a, b], 0.5, 3.0)]
        },
        |_, t| Ok(t[0].powf(-0.5)),
    );
}

fn random_edges(r: &mut Rng, n: usize) -> (Rc<[usize]>, Rc<[usize]>) {
    let e = r.random_range(1..2 * n + 1);
    let (mut s, mut d) = (Vec::new(), Vec::new());
    for _ in 0..e {
        s.push(r.random_range(0..n));
        d.push(r.random_range(0..n));
    }
    (s.into(), d.into())
}

pub fn message_passing() {
    // The edge list is derived from the node count so every evaluation of a
    // trial sees the same graph.
    let edges = |n: usize| random_edges(&mut rng_from_seed(n as u64 * 31), n);
    check(
        "propagate",
        20,
        |r| {
            let n = r.random_range(2..6);
            let d = r.random_range(1..4);
            vec![uniform(r, &[n, d], -1.0, 1.0)]
        },
        move |_, t| {
            let (s, d) = edges(t[0].shape()[0]);
            t[0].propagate(None, &s, &d)
        },
    );
    check(
        "propagate_weighted",
        21,
        |r| {
            let n = r.random_range(2..6);
            let d = r.random_range(1..4);
            let e = edges(n).0.len();
            vec![uniform(r, &[n, d], -1.0, 1.0), uniform(r, &[e, 1], 0.0, 1.0)]
        },
        move |_, t| {
            let (s, d) = edges(t[0].shape()[0]);
            t[0].propagate(Some(t[1]), &s, &d)
        },
    );
}

pub fn reductions() {
    let segs = |n: usize| -> Vec<(usize, usize)> {
        let cut = n / 2;
        vec![(0, cut.max(1)), (cut.max(1), n)]
    };
    let rows = |r: &mut Rng| {
        let n = r.random_range(2..6);
        let d = r.random_range(1..4);
        vec![uniform(r, &[n, d], -1.0, 1.0)]
    };
    check("segment_sum", 22, rows, move |_, t| t[0].segment_sum(&segs(t[0].shape()[0])));
    check("segment_mean", 23, rows, move |_, t| {
        t[0].segment_mean(&segs(t[0].shape()[0]))
    });
    check("mean_rows", 24, rows, |_, t| t[0].mean_rows());
    check("sum", 25, rows, |_, t| Ok(t[0].sum()));
    check("mean", 26, rows, |_, t| Ok(t[0].mean()));
    check("softmax_rows", 27, rows, |_, t| t[0].softmax_rows());
}

pub fn losses() {
    let logits = |r: &mut Rng| {
        let m = r.random_range(1..6);
        let c = r.random_range(2..5);
        vec![uniform(r, &[m, c], -3.0, 3.0)]
    };
    let labels = |t: &Tensor<'_>| -> Vec<usize> {
        let s = t.shape();
        (0..s[0]).map(|i| (i * 5 + 1) % s[1]).collect()
    };
    check("cross_entropy", 28, logits, move |_, t| t[0].cross_entropy(&labels(&t[0])));
    // Logits are redrawn until no row loss sits near the cap, so the kink
    // never falls inside the difference stencil.
    let row_ce = |v: &Array| -> Vec<f64> {
        let c = v.shape()[1];
        v.data()
            .chunks(c)
            .enumerate()
            .map(|(i, row)| {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln() - row[(i * 5 + 1) % c]
            })
            .collect()
    };
    check(
        "cross_entropy_capped",
        29,
        move |r| loop {
            let x = logits(r);
            if row_ce(&x[0]).iter().all(|ce| (ce - 1.0).abs() > 1e-3) {
                break x;
            }
        },
        move |_, t| t[0].cross_entropy_capped(&labels(&t[0]), 1.0),
    );
    check(
        "kl_bernoulli",
        30,
        |r| {
            let n = r.random_range(1..8);
            vec![uniform(r, &[n, 1], 0.05, 0.95), uniform(r, &[1], 0.1, 0.9)]
        },
        |_, t| t[0].kl_bernoulli(t[1]),
    );
    check(
        "binary_concrete",
        31,
        |r| {
            let n = r.random_range(1..8);
            vec![uniform(r, &[n, 1], 0.05, 0.95)]
        },
        |_, t| {
            let n = t[0].value().numel();
            let noise: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin() * 2.0).collect();
            t[0].binary_concrete(&noise, 0.7)
        },
    );
}

pub fn sci_forward_composite() {
    let d = 8;
    let classes = 3;
    check(
        "sci_forward",
        32,
        |r| vec![uniform(r, &[3, d], -1.0, 1.0), uniform(r, &[3, d], -1.0, 1.0)],
        move |tape, t| {
            let mut store = cauemo::autodiff::ParameterStore::new(5);
            let weights = SciWeights::new(&mut store, d)?;
            let classifier = Classifier::new(&mut store, "classifier", d, classes)?;
            let config = SciConfig {
                heads: 2,
                noise_std: 0.5,
                ..SciConfig::default()
            };
            let mut rng = rng_from_seed(9);
            let out = sci_forward(tape, &store, t[0], t[1], &config, &weights, &classifier, Some(&mut rng))?;
            out.logits.cross_entropy(&[0, 1, 2])
        },
    );
}

fn tiny_model(seed: u64, objective: ObjectiveCenter) -> (Model, Vec<cauemo::graph::MolecularGraph>) {
    let ds = generate_spurious_motif(3, &MotifSpec::new(0.7), seed).unwrap();
    let config = ModelConfig {
        kind: ModelKind::Cauemo,
        gnn: GnnConfig {
            hidden_dim: 8,
            layers: 2,
            ..GnnConfig::default()
        },
        egib: Default::default(),
        sci: SciConfig {
            heads: 2,
            noise_std: 0.5,
            ..SciConfig::default()
        },
        objective,
        in_dim: ds.graphs[0].feature_dim(),
        num_classes: 3,
    };
    (Model::new(config, seed).unwrap(), ds.graphs)
}

/// Total training loss (mask sampling and attention noise under a fixed
/// seed) against every model parameter.
pub fn total_loss_composite() {
    let mut picker = rng_from_seed(77);
    let mut checked = 0usize;
    let mut skipped = 0usize;
    let mut worst = 0.0f64;
    for trial in 0..TRIALS {
        let objective = if trial % 4 == 3 {
            ObjectiveCenter::Subgraph
        } else {
            ObjectiveCenter::Environment
        };
        let (mut model, graphs) = tiny_model(trial as u64, objective);
        let batch = GraphBatch::new(graphs.iter().collect()).unwrap();
        let packed = PackedGraph::from_batch(&batch).unwrap();
        let labels = batch.labels().unwrap();
        let loss_of = |m: &Model| -> f64 {
            let tape = Tape::new();
            let mut rng = rng_from_seed(1000 + trial as u64);
            let fwd = m
                .forward(&tape, &packed, Mode::Train { rng: &mut rng, temperature: 0.8 })
                .unwrap();
            m.loss(&fwd, &labels).unwrap().total.item()
        };
        {
            let tape = Tape::new();
            let mut rng = rng_from_seed(1000 + trial as u64);
            let fwd = model
                .forward(&tape, &packed, Mode::Train { rng: &mut rng, temperature: 0.8 })
                .unwrap();
            let loss = model.loss(&fwd, &labels).unwrap().total;
            model.store.zero_grad();
            tape.backward(loss, &mut model.store).unwrap();
        }
        let ids: Vec<_> = model.store.ids().collect();
        // Five random scalars per trial, spread over all parameters.
        for _ in 0..5 {
            let id = ids[picker.random_range(0..ids.len())];
            let n = model.store.value(id).numel();
            let i = picker.random_range(0..n);
            let analytic = model.store.grad(id).map_or(0.0, |g| g[i]);
            let base = model.store.value(id).clone();
            let at = |delta: f64, m: &mut Model| -> f64 {
                let mut v = base.clone();
                v.data_mut()[i] += delta;
                m.store.set_value(id, v).unwrap();
                loss_of(m)
            };
            let (fp, f0, fm) = (at(STEP, &mut model), at(0.0, &mut model), at(-STEP, &mut model));
            model.store.set_value(id, base).unwrap();
            // A relu, clamp or cap boundary inside the stencil shows up as a
            // jump between the one-sided slopes; such points are not
            // differentiable and are resampled.
            let (right, left) = ((fp - f0) / STEP, (f0 - fm) / STEP);
            if rel_err(right, left) > 1e-2 {
                skipped += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * STEP);
            let e = rel_err(analytic, numeric);
            worst = worst.max(e);
            assert!(
                e <= TOL,
                "trial {trial}, {}[{i}]: analytic {analytic} vs numeric {numeric} (rel err {e:e})",
                model.store.name(id)
            );
            checked += 1;
        }
    }
    eprintln!("total loss: {checked} entries checked, {skipped} non-smooth skipped, worst {worst:.2e}");
    assert!(skipped * 20 <= checked, "too many non-smooth points: {skipped}");
}

/// Every check in the suite, by name.
pub const ALL: &[(&str, fn())] = &[
    ("matmul_and_bmm", matmul_and_bmm),
    ("shape_operations", shape_operations),
    ("elementwise_binary", elementwise_binary),
    ("elementwise_unary", elementwise_unary),
    ("message_passing", message_passing),
    ("reductions", reductions),
    ("losses", losses),
    ("sci_forward_composite", sci_forward_composite),
    ("total_loss_composite", total_loss_composite),
];
