#![allow(dead_code)]

use std::path::Path;

use uctrl::cli::ExperimentConfig;
use uctrl::numerics::{sym_eig, Rng};
use uctrl::rate::{coding_rate, coding_rate_grad, pair_rate_reduction, pair_rate_reduction_grads, rate_reduction, rate_reduction_grad_membership, DistanceMode};
use uctrl::trainer::{decoder_grads, encoder_grads, ObjectiveVariant, VariantTag};
use uctrl::{Features, Matrix, Membership, Network, RateParams};

pub const FD_STEP: f64 = 1e-6;

/// Three rank-one classes in R^16, the shared synthetic fixture.
pub const FIXTURE_A: &str = "\
seed = 1
dataset.kind = synthetic
dataset.ambient_dim = 16
dataset.classes = 3
dataset.per_class_dim = 1
dataset.train_per_class = 200
dataset.test_per_class = 100
dataset.noise_sigma = 0.01
model.feature_dim = 8
model.hidden = 64
train.variant = I
train.lambda1 = 30
train.lambda2 = 30
train.batch_size = 128
train.iterations = 2000
cluster.k = 3
cluster.lr = 1e-2
cluster.restarts = 5
cluster.steps = 1000
";

/// `key = value` lines of `base` with those of `extra` replacing or appended.
pub fn merge_config(base: &str, extra: &str) -> String {
    let key = |l: &str| l.split('=').next().unwrap().trim().to_string();
    let mut lines: Vec<String> = base.lines().map(str::to_string).collect();
    for l in extra.lines().filter(|l| l.contains('=')) {
        match lines.iter().position(|b| b.contains('=') && key(b) == key(l)) {
            Some(i) => lines[i] = l.to_string(),
            None => lines.push(l.to_string()),
        }
    }
    lines.join("\n") + "\n"
}

/// Fixture A with overrides; `output.dir` points at `out`.
pub fn fixture_config(extra: &str, out: &Path) -> ExperimentConfig {
    let text = merge_config(FIXTURE_A, &format!("{extra}\noutput.dir = {}", out.display()));
    ExperimentConfig::parse(&text, out).expect("fixture config parses")
}

/// Small, fast variant of fixture A for pipeline tests.
pub fn tiny_config(extra: &str, out: &Path) -> ExperimentConfig {
    let base = "\
dataset.ambient_dim = 6
dataset.train_per_class = 8
dataset.test_per_class = 4
model.feature_dim = 3
model.hidden = 5
train.batch_size = 8
train.iterations = 5
cluster.steps = 20
cluster.restarts = 2
eval.probe_steps = 20
";
    fixture_config(&merge_config(base, extra), out)
}

pub fn gaussian(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.normal())
}

pub fn unit_columns(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    Features::normalized(gaussian(rng, rows, cols)).unwrap().into_matrix()
}

/// Haar-ish orthogonal matrix from the eigenvectors of a random symmetric one.
pub fn orthogonal(rng: &mut Rng, n: usize) -> Matrix {
    let a = gaussian(rng, n, n);
    let s = a.add(&a.transpose()).unwrap();
    sym_eig(&s).unwrap().vectors
}

pub fn random_membership(rng: &mut Rng, n: usize, k: usize) -> Membership {
    let mut p = Matrix::zeros(n, k);
    for i in 0..n {
        let e: Vec<f64> = (0..k).map(|_| rng.normal().exp()).collect();
        let s: f64 = e.iter().sum();
        for j in 0..k {
            p[(i, j)] = e[j] / s;
        }
    }
    Membership::new(p).unwrap()
}

/// Max abs difference between `grad` and central differences of `f` over
/// every entry of `x`.
pub fn fd_max_err(x: &Matrix, grad: &Matrix, f: impl Fn(&Matrix) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    for idx in 0..x.as_slice().len() {
        let mut p = x.clone();
        p.as_mut_slice()[idx] += FD_STEP;
        let mut m = x.clone();
        m.as_mut_slice()[idx] -= FD_STEP;
        let fd = (f(&p) - f(&m)) / (2.0 * FD_STEP);
        worst = worst.max((fd - grad.as_slice()[idx]).abs());
    }
    worst
}

/// Same as [`fd_max_err`] for every parameter of a network.
pub fn fd_network_err(net: &Network, grads: &[&[f64]], f: impl Fn(&Network) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (s, g) in grads.iter().enumerate() {
        for idx in 0..g.len() {
            let mut p = net.clone();
            p.params_mut()[s][idx] += FD_STEP;
            let mut m = net.clone();
            m.params_mut()[s][idx] -= FD_STEP;
            let fd = (f(&p) - f(&m)) / (2.0 * FD_STEP);
            worst = worst.max((fd - g[idx]).abs());
        }
    }
    worst
}

pub fn coding_rate_suite(seed: u64, instances: usize) -> f64 {
    let mut rng = Rng::new(seed);
    let p = RateParams::default();
    (0..instances)
        .map(|t| {
            let (d, n) = (2 + t % 4, 3 + t % 7);
            let z = gaussian(&mut rng, d, n).scale(0.7);
            let g = coding_rate_grad(&Features::new(z.clone()).unwrap(), &p).unwrap();
            fd_max_err(&z, &g, |z| coding_rate(&Features::new(z.clone()).unwrap(), &p).unwrap())
        })
        .fold(0.0, f64::max)
}

pub fn pair_suite(seed: u64, instances: usize) -> f64 {
    let mut rng = Rng::new(seed);
    let p = RateParams::default();
    (0..instances)
        .map(|t| {
            let (d, n) = (2 + t % 3, 2 + t % 6);
            let z = unit_columns(&mut rng, d, n);
            let zh = unit_columns(&mut rng, d, n);
            let f = |a: &Matrix, b: &Matrix| {
                pair_rate_reduction(&Features::new(a.clone()).unwrap(), &Features::new(b.clone()).unwrap(), &p).unwrap()
            };
            let (gz, gzh) =
                pair_rate_reduction_grads(&Features::new(z.clone()).unwrap(), &Features::new(zh.clone()).unwrap(), &p)
                    .unwrap();
            fd_max_err(&z, &gz, |z| f(z, &zh)).max(fd_max_err(&zh, &gzh, |zh| f(&z, zh)))
        })
        .fold(0.0, f64::max)
}

/// Directional derivatives along `e_ij − e_il`, which stay on the simplex,
/// against the projected gradient.
pub fn membership_suite(seed: u64, instances: usize) -> f64 {
    let mut rng = Rng::new(seed);
    let p = RateParams::default();
    let mut worst: f64 = 0.0;
    for t in 0..instances {
        let (d, n, k) = (2 + t % 3, 4 + t % 5, 2 + t % 3);
        let z = Features::new(unit_columns(&mut rng, d, n)).unwrap();
        let pi = random_membership(&mut rng, n, k);
        let g = rate_reduction_grad_membership(&z, &pi, &p).unwrap();
        let value = |m: &Matrix| rate_reduction(&z, &Membership::new(m.clone()).unwrap(), &p).unwrap().total;
        for i in 0..n {
            for j in 0..k {
                let l = (j + 1) % k;
                let mut plus = pi.matrix().clone();
                plus[(i, j)] += FD_STEP;
                plus[(i, l)] -= FD_STEP;
                let mut minus = pi.matrix().clone();
                minus[(i, j)] -= FD_STEP;
                minus[(i, l)] += FD_STEP;
                let fd = (value(&plus) - value(&minus)) / (2.0 * FD_STEP);
                worst = worst.max((fd - (g[(i, j)] - g[(i, l)])).abs());
            }
        }
    }
    worst
}

pub struct ChainInstance {
    pub encoder: Network,
    pub decoder: Network,
    pub x: Matrix,
    pub x_aug: Matrix,
    pub variant: ObjectiveVariant,
}

/// Zero biases let a narrow ReLU decoder collapse every hidden unit, which
/// sends `X̂` and then `Ẑ` to the origin.
pub fn with_random_biases(rng: &mut Rng, mut net: Network) -> Network {
    for layer in net.layers_mut() {
        layer.bias.iter_mut().for_each(|b| *b = 0.3 * rng.normal());
    }
    net
}

/// D = 6, d = 3, N = 8 with a rotating choice of variant and distance.
pub fn chain_instance(rng: &mut Rng, t: usize) -> ChainInstance {
    let (dim, d, n, hidden) = (6, 3, 8, 5);
    let x = unit_columns(rng, dim, n);
    let x_aug = Features::normalized(x.add(&gaussian(rng, dim, n).scale(0.1)).unwrap()).unwrap().into_matrix();
    let tag = VariantTag::ALL[t % VariantTag::ALL.len()];
    let mode = [DistanceMode::Cosine, DistanceMode::L2, DistanceMode::ExactDr][t % 3];
    let encoder = Network::encoder(dim, hidden, d, rng).unwrap();
    let decoder = Network::decoder(d, hidden, dim, rng).unwrap();
    ChainInstance {
        encoder: with_random_biases(rng, encoder),
        decoder: with_random_biases(rng, decoder),
        x,
        x_aug,
        variant: ObjectiveVariant::new(tag, 0.5 + t as f64 % 3.0, 1.5, mode).unwrap(),
    }
}

/// End-to-end parameter gradients of both players against central
/// differences of the scalar objectives.
pub fn chain_suite(seed: u64, instances: usize) -> f64 {
    let mut rng = Rng::new(seed);
    let p = RateParams::default();
    let mut worst: f64 = 0.0;
    for t in 0..instances {
        let c = chain_instance(&mut rng, t);
        let (_, _, ge) = encoder_grads(&c.encoder, &c.decoder, &c.x, &c.x_aug, &c.variant, &p, false).unwrap();
        worst = worst.max(fd_network_err(&c.encoder, &ge.slices(), |e| {
            encoder_grads(e, &c.decoder, &c.x, &c.x_aug, &c.variant, &p, false).unwrap().1
        }));
        let (_, _, gd) = decoder_grads(&c.encoder, &c.decoder, &c.x, &c.x_aug, &c.variant, &p).unwrap();
        worst = worst.max(fd_network_err(&c.decoder, &gd.slices(), |dec| {
            decoder_grads(&c.encoder, dec, &c.x, &c.x_aug, &c.variant, &p).unwrap().1
        }));
    }
    worst
}

/// Two hand-built CIFAR-10 records: label 3 with pixel `i mod 256`, then
/// label 9 with pixel `255 − (7i mod 256)`.
pub fn cifar_fixture_bytes() -> Vec<u8> {
    let mut out = vec![3u8];
    out.extend((0..3072).map(|i| (i % 256) as u8));
    out.push(9);
    out.extend((0..3072).map(|i| 255 - ((7 * i) % 256) as u8));
    out
}
