//! Central finite differences (h = 1e-4) against the hand-written backward
//! passes. Each check compares the analytic and numeric gradients over a
//! set of coordinates as vectors, `||a - n|| / max(||a||, ||n||) <= 1e-4`.

use super::{gaussian_vec, rel_err, rng};
use mixnet::losses::{ce_logit_grad, ce_loss, mse_loss, triplet_loss};
use mixnet::model::{mine_semi_hard_triplets, MixNetModel, ModelDims, Triplet};
use mixnet::nn::{softmax_rows, AvgPool, BatchNorm, Conv, ConvTranspose, Dense, Elu, Layer, Mode, Tensor4};
use mixnet::trainer::{joint_backward, joint_losses, LabeledTensors};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-4;
pub const TOL: f64 = 1e-4;
pub const INSTANCES: u64 = 20;

fn random_tensor(r: &mut ChaCha8Rng, b: usize, w: usize, c: usize) -> Tensor4 {
    Tensor4::from_vec(b, w, c, gaussian_vec(r, b * w * c)).unwrap()
}

/// Up to `max` distinct coordinates of a vector of length `n`.
fn coords(r: &mut ChaCha8Rng, n: usize, max: usize) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    let mut v: Vec<usize> = (0..n).collect();
    for i in 0..max {
        let j = r.random_range(i..n);
        v.swap(i, j);
    }
    v.truncate(max);
    v
}

/// Checks input and parameter gradients of `<layer(x), g>` for random `g`.
fn check_layer<L: Layer>(layer: &mut L, x: &Tensor4, r: &mut ChaCha8Rng, input_grad: bool) -> f64 {
    let y = layer.forward(x, Mode::Train).unwrap();
    let g = random_tensor(r, y.batch, y.width, y.channels);
    for p in layer.params_mut() {
        p.zero_grad();
    }
    let dx = layer.backward(&g).unwrap();
    let f = |layer: &mut L, x: &Tensor4| layer.forward(x, Mode::Train).unwrap().dot(&g);

    let mut worst = 0.0f64;
    if input_grad {
        let idx = coords(r, x.data.len(), 60);
        let mut num = Vec::new();
        for &i in &idx {
            let mut xp = x.clone();
            xp.data[i] += H;
            let mut xm = x.clone();
            xm.data[i] -= H;
            num.push((f(layer, &xp) - f(layer, &xm)) / (2.0 * H));
        }
        let ana: Vec<f64> = idx.iter().map(|&i| dx.data[i]).collect();
        worst = worst.max(rel_err(&ana, &num));
    }
    let n_params = layer.params().len();
    for pi in 0..n_params {
        let len = layer.params()[pi].len();
        let idx = coords(r, len, 40);
        let ana: Vec<f64> = idx.iter().map(|&j| layer.params()[pi].grad[j]).collect();
        let mut num = Vec::new();
        for &j in &idx {
            let orig = layer.params()[pi].value[j];
            layer.params_mut()[pi].value[j] = orig + H;
            let fp = f(layer, x);
            layer.params_mut()[pi].value[j] = orig - H;
            let fm = f(layer, x);
            layer.params_mut()[pi].value[j] = orig;
            num.push((fp - fm) / (2.0 * H));
        }
        worst = worst.max(rel_err(&ana, &num));
    }
    worst
}

pub fn conv_gradients() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..INSTANCES {
        let mut r = rng(seed);
        let (cin, cout) = (r.random_range(1..4), r.random_range(1..4));
        let (k, s, w) = (r.random_range(1..8), r.random_range(1..4), r.random_range(5..20));
        let mut conv = Conv::new("c", cin, cout, k, s, &mut r);
        let b = r.random_range(1..4);
        let x = random_tensor(&mut r, b, w, cin);
        let e = check_layer(&mut conv, &x, &mut r, true);
        worst = worst.max(e);
    }
    worst
}

pub fn conv_transpose_gradients() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..INSTANCES {
        let mut r = rng(100 + seed);
        let (cin, cout) = (r.random_range(1..4), r.random_range(1..4));
        let (k, s, w) = (r.random_range(1..8), r.random_range(1..4), r.random_range(2..10));
        let mut conv = ConvTranspose::new("t", cin, cout, k, s, &mut r);
        let b = r.random_range(1..4);
        let x = random_tensor(&mut r, b, w, cin);
        let e = check_layer(&mut conv, &x, &mut r, true);
        worst = worst.max(e);
    }
    worst
}

pub fn dense_gradients() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..INSTANCES {
        let mut r = rng(200 + seed);
        let (i, o) = (r.random_range(1..7), r.random_range(1..6));
        let mut dense = Dense::new("d", i, o, &mut r);
        let b = r.random_range(1..5);
        let x = random_tensor(&mut r, b, 1, i);
        let e = check_layer(&mut dense, &x, &mut r, true);
        worst = worst.max(e);
    }
    worst
}

pub fn batchnorm_gradients() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..INSTANCES {
        let mut r = rng(300 + seed);
        let c = r.random_range(1..4);
        let mut bn = BatchNorm::new("bn", c);
        for p in bn.params_mut() {
            let v = gaussian_vec(&mut r, p.len());
            p.value = v;
        }
        let (b, w) = (r.random_range(2..5), r.random_range(1..6));
        let x = random_tensor(&mut r, b, w, c);
        let e = check_layer(&mut bn, &x, &mut r, true);
        worst = worst.max(e);
    }
    worst
}

pub fn elu_gradients() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..INSTANCES {
        let mut r = rng(400 + seed);
        let w = r.random_range(1..8);
        let mut x = random_tensor(&mut r, 2, w, 3);
        // keep clear of the kink at zero
        for v in &mut x.data {
            if v.abs() < 1e-2 {
                *v += 0.05;
            }
        }
        let e = check_layer(&mut Elu::new(), &x, &mut r, true);
        worst = worst.max(e);
    }
    worst
}

pub fn pool_gradients() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..INSTANCES {
        let mut r = rng(500 + seed);
        let p = r.random_range(1..5);
        let w = p * r.random_range(1..5);
        let x = random_tensor(&mut r, 2, w, 2);
        let e = check_layer(&mut AvgPool::new(p), &x, &mut r, true);
        worst = worst.max(e);
    }
    worst
}

pub fn softmax_cross_entropy_gradient() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..INSTANCES {
        let mut r = rng(600 + seed);
        let (b, c) = (r.random_range(1..6), r.random_range(2..5));
        let logits = random_tensor(&mut r, b, 1, c);
        let labels: Vec<usize> = (0..b).map(|_| r.random_range(0..c)).collect();
        let ana = ce_logit_grad(&labels, &softmax_rows(&logits));
        let f = |z: &Tensor4| ce_loss(&labels, &softmax_rows(z)).unwrap();
        let num: Vec<f64> = (0..logits.data.len())
            .map(|i| {
                let (mut p, mut m) = (logits.clone(), logits.clone());
                p.data[i] += H;
                m.data[i] -= H;
                (f(&p) - f(&m)) / (2.0 * H)
            })
            .collect();
        worst = worst.max(rel_err(&ana.data, &num));
    }
    worst
}

pub fn mse_and_triplet_gradients() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..INSTANCES {
        let mut r = rng(700 + seed);
        let x = random_tensor(&mut r, 3, 4, 2);
        let xh = random_tensor(&mut r, 3, 4, 2);
        let (_, g) = mse_loss(&x, &xh).unwrap();
        let num: Vec<f64> = (0..xh.data.len())
            .map(|i| {
                let (mut p, mut m) = (xh.clone(), xh.clone());
                p.data[i] += H;
                m.data[i] -= H;
                (mse_loss(&x, &p).unwrap().0 - mse_loss(&x, &m).unwrap().0) / (2.0 * H)
            })
            .collect();
        worst = worst.max(rel_err(&g.data, &num));

        let z = random_tensor(&mut r, 6, 1, 3);
        let labels = [0, 0, 0, 1, 1, 1];
        let mined = mine_semi_hard_triplets(&z, &labels, 10.0);
        let (_, g) = triplet_loss(&z, &mined.triplets, 10.0);
        let num: Vec<f64> = (0..z.data.len())
            .map(|i| {
                let (mut p, mut m) = (z.clone(), z.clone());
                p.data[i] += H;
                m.data[i] -= H;
                (triplet_loss(&p, &mined.triplets, 10.0).0 - triplet_loss(&m, &mined.triplets, 10.0).0)
                    / (2.0 * H)
            })
            .collect();
        worst = worst.max(rel_err(&g.data, &num));
    }
    worst
}

fn small_model(seed: u64) -> MixNetModel {
    MixNetModel::new(
        ModelDims {
            t: 100,
            u: 2,
            n_bands: 2,
            z: 4,
            n_classes: 2,
        },
        seed,
    )
    .unwrap()
}

pub fn joint_loss_through_model() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..INSTANCES {
        let mut r = rng(800 + seed);
        let mut model = small_model(seed);
        let batch = LabeledTensors::new(random_tensor(&mut r, 4, 100, 4), vec![0, 1, 0, 1]).unwrap();
        let raw: [f64; 3] = std::array::from_fn(|_| r.random_range(0.1..1.0));
        let sum: f64 = raw.iter().sum();
        let w = raw.map(|v| v / sum);
        let margin = 5.0;
        let out = model.forward(&batch.x, Mode::Train).unwrap();
        let triplets: Vec<Triplet> = mine_semi_hard_triplets(&out.latent, &batch.labels, margin).triplets;

        joint_backward(&mut model, &batch, &w, margin, Some(&triplets)).unwrap();
        let grads: Vec<Vec<f64>> = model.params().iter().map(|p| p.grad.clone()).collect();
        let total = |m: &mut MixNetModel| {
            joint_losses(m, &batch, margin, Some(&triplets), Mode::Train)
                .unwrap()
                .weighted_total(&w)
                .unwrap()
        };
        let mut ana = Vec::new();
        let mut num = Vec::new();
        for (pi, g) in grads.iter().enumerate() {
            for j in coords(&mut r, g.len(), 6) {
                let orig = model.params()[pi].value[j];
                model.params_mut()[pi].value[j] = orig + H;
                let fp = total(&mut model);
                model.params_mut()[pi].value[j] = orig - H;
                let fm = total(&mut model);
                model.params_mut()[pi].value[j] = orig;
                ana.push(g[j]);
                num.push((fp - fm) / (2.0 * H));
            }
        }
        let e = rel_err(&ana, &num);
        worst = worst.max(e);
    }
    worst
}

pub fn each_task_through_model() -> f64 {
    let mut worst = 0.0f64;
    for (task, seed) in (0..3).flat_map(|t| (0..7u64).map(move |s| (t, s))) {
        let mut r = rng(900 + 10 * task as u64 + seed);
        let mut model = small_model(1000 + seed);
        let batch = LabeledTensors::new(random_tensor(&mut r, 4, 100, 4), vec![0, 0, 1, 1]).unwrap();
        let mut w = [0.0; 3];
        w[task] = 1.0;
        let out = model.forward(&batch.x, Mode::Train).unwrap();
        let triplets = mine_semi_hard_triplets(&out.latent, &batch.labels, 5.0).triplets;
        joint_backward(&mut model, &batch, &w, 5.0, Some(&triplets)).unwrap();
        let grads: Vec<Vec<f64>> = model.params().iter().map(|p| p.grad.clone()).collect();
        let mut ana = Vec::new();
        let mut num = Vec::new();
        for (pi, g) in grads.iter().enumerate() {
            for j in coords(&mut r, g.len(), 4) {
                let orig = model.params()[pi].value[j];
                let eval = |v: f64, m: &mut MixNetModel| {
                    m.params_mut()[pi].value[j] = v;
                    joint_losses(m, &batch, 5.0, Some(&triplets), Mode::Train)
                        .unwrap()
                        .as_array()[task]
                };
                let fp = eval(orig + H, &mut model);
                let fm = eval(orig - H, &mut model);
                model.params_mut()[pi].value[j] = orig;
                ana.push(g[j]);
                num.push((fp - fm) / (2.0 * H));
            }
        }
        let e = rel_err(&ana, &num);
        worst = worst.max(e);
    }
    worst
}
