//! Helpers shared by the integration test targets.
#![allow(dead_code)]

pub mod finder;
pub mod tuner;

use raikit::model::*;
use rand::Rng as _;

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Central differences of `batch_loss` with step `h`.
pub fn finite_difference(
    net: &Network,
    x: &Design,
    labels: &[u8],
    w: &[f64],
    batch: &[usize],
    h: f64,
) -> Vec<f64> {
    let mut probe = net.clone();
    (0..net.params().len())
        .map(|k| {
            let p0 = net.params()[k];
            probe.params_mut()[k] = p0 + h;
            let up = batch_loss(&probe, x, labels, w, batch);
            probe.params_mut()[k] = p0 - h;
            let down = batch_loss(&probe, x, labels, w, batch);
            probe.params_mut()[k] = p0;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Relative error of `a` against `b` in the Euclidean norm.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-12)
}

pub struct Draw {
    pub net: Network,
    pub x: Design,
    pub labels: Vec<u8>,
    pub weights: Vec<f64>,
    pub batch: Vec<usize>,
}

pub fn random_draw(seed: u64) -> Draw {
    let mut rng = raikit::rng::seeded(seed);
    let d = rng.random_range(1..6);
    let hidden = if rng.random_bool(0.5) {
        Some(rng.random_range(1..5))
    } else {
        None
    };
    let activation = if rng.random_bool(0.5) {
        Activation::Tanh
    } else {
        Activation::Relu
    };
    let arch = Architecture {
        input_dim: d,
        hidden,
        activation,
    };
    let mut net = Network::init(arch, seed);
    for p in net.params_mut() {
        *p += rng.random_range(-0.5..0.5);
    }
    let n = rng.random_range(1..12);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let labels = (0..n).map(|_| rng.random_range(0..2)).collect();
    let weights = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
    let batch = (0..rng.random_range(1..8))
        .map(|_| rng.random_range(0..n))
        .collect();
    Draw {
        net,
        x: Design::from_rows(d, &rows),
        labels,
        weights,
        batch,
    }
}

/// Largest gradient relative error over 100 random model/batch draws.
pub fn worst_gradient_error() -> f64 {
    (0..100u64)
        .map(|seed| {
            let g = random_draw(seed);
            let analytic = gradient(&g.net, &g.x, &g.labels, &g.weights, &g.batch);
            let fd = finite_difference(&g.net, &g.x, &g.labels, &g.weights, &g.batch, 1e-5);
            relative_error(&analytic, &fd)
        })
        .fold(0.0, f64::max)
}
