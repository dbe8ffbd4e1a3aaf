//! Reference computations written independently of the library's kernels.

#![allow(dead_code, clippy::needless_range_loop)]

use sian::nn::{Mlp, Task};
use sian::sian::{GamArchitecture, InteractionSet};
use sian::{Matrix, Rng};

/// Plain triple-loop forward pass. Returns every hidden pre-activation too.
pub fn naive_forward(weights: &[Vec<Vec<f64>>], biases: &[Vec<f64>], x: &[f64]) -> (f64, Vec<f64>) {
    let mut h = x.to_vec();
    let mut pre = Vec::new();
    for (l, (w, b)) in weights.iter().zip(biases).enumerate() {
        let last = l + 1 == weights.len();
        let mut next = b.clone();
        for (i, hi) in h.iter().enumerate() {
            for (j, n) in next.iter_mut().enumerate() {
                *n += hi * w[i][j];
            }
        }
        if !last {
            pre.extend_from_slice(&next);
            next.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        h = next;
    }
    (h[0], pre)
}

pub fn naive_loss(weights: &[Vec<Vec<f64>>], biases: &[Vec<f64>], x: &Matrix, y: &[f64], task: Task) -> f64 {
    let mut total = 0.0;
    for r in 0..x.rows() {
        let (z, _) = naive_forward(weights, biases, x.row(r));
        total += match task {
            Task::Regression => (z - y[r]).powi(2),
            Task::Classification => {
                let p = 1.0 / (1.0 + (-z).exp());
                -(y[r] * p.ln() + (1.0 - y[r]) * (1.0 - p).ln())
            }
        };
    }
    total / x.rows() as f64
}

pub fn unpack(net: &Mlp) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>) {
    let w = net
        .weights()
        .iter()
        .map(|m| (0..m.rows()).map(|i| m.row(i).to_vec()).collect())
        .collect();
    (w, net.biases().to_vec())
}

/// Random network with nonzero biases and a batch whose hidden
/// pre-activations all sit at least `margin` away from the ReLU kink.
pub fn random_case(rng: &mut Rng, margin: f64) -> (Mlp, Matrix, Vec<f64>, Task) {
    loop {
        let d = 1 + rng.below(5);
        let mut widths = vec![d];
        for _ in 0..1 + rng.below(3) {
            widths.push(1 + rng.below(8));
        }
        widths.push(1);
        let base = Mlp::new(&widths, rng).unwrap();
        let biases: Vec<Vec<f64>> = base
            .biases()
            .iter()
            .map(|b| b.iter().map(|_| rng.uniform(-0.5, 0.5)).collect())
            .collect();
        let net = Mlp::from_parts(base.weights().to_vec(), biases).unwrap();
        let task = if rng.below(2) == 0 {
            Task::Regression
        } else {
            Task::Classification
        };
        let n = 6;
        let x = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.normal()).collect()).unwrap();
        let y: Vec<f64> = match task {
            Task::Regression => (0..n).map(|_| rng.normal()).collect(),
            Task::Classification => (0..n).map(|i| (i % 2) as f64).collect(),
        };
        let (w, b) = unpack(&net);
        let clear = (0..n).all(|r| naive_forward(&w, &b, x.row(r)).1.iter().all(|z| z.abs() >= margin));
        if clear {
            return (net, x, y, task);
        }
    }
}

/// Largest relative disagreement between backprop and central differences
/// over every parameter. Denominators are floored at 1e-6.
pub fn gradient_check(net: &Mlp, x: &Matrix, y: &[f64], task: Task, h: f64) -> f64 {
    let head = sian::nn::TaskHead { task };
    let cache = net.forward_cached(x).unwrap();
    let out = sian::nn::loss(head, &cache.output, y).unwrap();
    let grads = net.backward(&cache, &out.grad).unwrap();
    let (w, b) = unpack(net);
    let rel = |g: f64, fd: f64| (g - fd).abs() / g.abs().max(fd.abs()).max(1e-6);
    let mut worst: f64 = 0.0;
    for l in 0..w.len() {
        for i in 0..w[l].len() {
            for j in 0..w[l][i].len() {
                let mut plus = w.clone();
                let mut minus = w.clone();
                plus[l][i][j] += h;
                minus[l][i][j] -= h;
                let fd = (naive_loss(&plus, &b, x, y, task) - naive_loss(&minus, &b, x, y, task)) / (2.0 * h);
                worst = worst.max(rel(grads.weights[l].get(i, j), fd));
            }
        }
        for j in 0..b[l].len() {
            let mut plus = b.clone();
            let mut minus = b.clone();
            plus[l][j] += h;
            minus[l][j] -= h;
            let fd = (naive_loss(&w, &plus, x, y, task) - naive_loss(&w, &minus, x, y, task)) / (2.0 * h);
            worst = worst.max(rel(grads.biases[l][j], fd));
        }
    }
    worst
}

/// Random additive architecture: `d` features, up to `max_sets` distinct sets
/// of degree at most 3, one to three hidden layers.
pub fn random_arch(rng: &mut Rng, d: usize, max_sets: usize) -> GamArchitecture {
    let mut family: Vec<InteractionSet> = Vec::new();
    for _ in 0..1 + rng.below(max_sets) {
        let k = 1 + rng.below(3.min(d));
        let mut idx = rng.sample_indices(d, k);
        idx.sort_unstable();
        let s = InteractionSet::new(idx).unwrap();
        if !family.contains(&s) {
            family.push(s);
        }
    }
    let widths: Vec<usize> = (0..1 + rng.below(3)).map(|_| 1 + rng.below(6)).collect();
    GamArchitecture::new(d, family, widths, sian::nn::TaskHead::regression()).unwrap()
}
