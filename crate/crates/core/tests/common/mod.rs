//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use subcluster::classifier::MlpModel;
use subcluster::numerics::RngStream;

/// Logits by plain loops over the flattened parameters
/// (per layer: row-major `fan_in × fan_out` weights, then biases).
pub fn naive_logits(dims: &[usize], params: &[f64], x: &[f64]) -> Vec<f64> {
    let mut act = x.to_vec();
    let mut off = 0;
    let last = dims.len() - 2;
    for (l, w) in dims.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let weights = &params[off..off + fan_in * fan_out];
        let bias = &params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
        off += fan_in * fan_out + fan_out;
        let mut next = bias.to_vec();
        for (i, a) in act.iter().enumerate() {
            for (j, n) in next.iter_mut().enumerate() {
                *n += a * weights[i * fan_out + j];
            }
        }
        if l < last {
            for n in &mut next {
                *n = n.max(0.0);
            }
        }
        act = next;
    }
    act
}

/// Hidden pre-activations, for steering clear of ReLU kinks.
pub fn naive_preactivations(dims: &[usize], params: &[f64], x: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    let mut act = x.to_vec();
    let mut off = 0;
    for w in dims.windows(2).take(dims.len() - 2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let mut next = params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out].to_vec();
        for (i, a) in act.iter().enumerate() {
            for (j, n) in next.iter_mut().enumerate() {
                *n += a * params[off + i * fan_out + j];
            }
        }
        off += fan_in * fan_out + fan_out;
        out.extend_from_slice(&next);
        act = next.iter().map(|v| v.max(0.0)).collect();
    }
    out
}

pub fn naive_log_softmax(z: &[f64], t: f64) -> Vec<f64> {
    let m = z.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b)) / t;
    let lse = z.iter().map(|v| (v / t - m).exp()).sum::<f64>().ln() + m;
    z.iter().map(|v| v / t - lse).collect()
}

pub fn naive_mean_ce(dims: &[usize], params: &[f64], xs: &[Vec<f64>], ys: &[usize]) -> f64 {
    let total: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| -naive_log_softmax(&naive_logits(dims, params, x), 1.0)[y])
        .sum();
    total / xs.len() as f64
}

pub fn brute_auroc(normal: &[f64], anomaly: &[f64]) -> f64 {
    let mut wins = 0.0;
    for n in normal {
        for a in anomaly {
            if n > a {
                wins += 1.0;
            } else if n == a {
                wins += 0.5;
            }
        }
    }
    wins / (normal.len() * anomaly.len()) as f64
}

/// A model with parameters drawn uniformly from `[-scale, scale]`.
pub fn random_model(rng: &mut RngStream, dims: &[usize], scale: f64) -> MlpModel {
    let n: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    let params: Vec<f64> = (0..n).map(|_| rng.uniform(-scale, scale).unwrap()).collect();
    MlpModel::from_parameters(dims, &params, 0).unwrap()
}

pub fn random_vec(rng: &mut RngStream, n: usize, low: f64, high: f64) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(low, high).unwrap()).collect()
}

/// Directory holding the four MNIST IDX files (plain or gzipped):
/// `$MNIST_DIR`, else `/root/data/mnist`, else `data/mnist` in the workspace.
pub fn mnist_dir() -> Option<PathBuf> {
    let candidates = std::env::var_os("MNIST_DIR").map(PathBuf::from).into_iter().chain([
        PathBuf::from("/root/data/mnist"),
        PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/mnist")),
    ]);
    candidates.into_iter().find(|d| mnist_files(d).is_some())
}

/// `(train images, train labels)` inside `dir`, accepting either naming.
pub fn mnist_files(dir: &std::path::Path) -> Option<(PathBuf, PathBuf)> {
    let pick = |names: &[&str]| names.iter().map(|n| dir.join(n)).find(|p| p.is_file());
    let images = pick(&[
        "train-images.idx3-ubyte",
        "train-images-idx3-ubyte",
        "train-images-idx3-ubyte.gz",
        "train-images.idx3-ubyte.gz",
    ])?;
    let labels = pick(&[
        "train-labels.idx1-ubyte",
        "train-labels-idx1-ubyte",
        "train-labels-idx1-ubyte.gz",
        "train-labels.idx1-ubyte.gz",
    ])?;
    Some((images, labels))
}

/// Worst relative errors `(parameters, inputs)` of the analytic gradients of
/// one random net against central differences with step `h`.
///
/// Relative error is `|a − n| / max(|a|, |n|, 1e-6)`. Inputs are redrawn
/// until every hidden pre-activation is at least `1e-3` away from the ReLU
/// kink, where a finite difference would straddle the non-differentiability.
pub fn gradient_trial(rng: &mut RngStream, h: f64) -> (f64, f64) {
    use subcluster::classifier::{input_gradients, loss_and_grads};
    use subcluster::numerics::Matrix;

    let depth = 2 + rng.below(2);
    let mut dims = vec![1 + rng.below(6)];
    if depth == 3 {
        dims.push(1 + rng.below(5));
    }
    dims.push(2 + rng.below(3));
    let model = random_model(rng, &dims, 1.0);
    let params = model.parameters();
    let batch = 1 + rng.below(4);
    let mut xs = Vec::new();
    while xs.len() < batch {
        let x = random_vec(rng, dims[0], -1.0, 1.0);
        if naive_preactivations(&dims, &params, &x).iter().all(|z| z.abs() > 1e-3) {
            xs.push(x);
        }
    }
    let ys: Vec<usize> = (0..batch).map(|_| rng.below(*dims.last().unwrap())).collect();
    let temperature = if rng.below(2) == 0 {
        1.0
    } else {
        rng.uniform(0.5, 10.0).unwrap()
    };
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);

    let m = Matrix::from_rows(&xs).unwrap();
    let (_, grads) = loss_and_grads(&model, &m, &ys).unwrap();
    let analytic = grads.flatten();
    let mut worst_param: f64 = 0.0;
    for p in 0..params.len() {
        let mut plus = params.clone();
        let mut minus = params.clone();
        plus[p] += h;
        minus[p] -= h;
        let numeric = (naive_mean_ce(&dims, &plus, &xs, &ys) - naive_mean_ce(&dims, &minus, &xs, &ys)) / (2.0 * h);
        worst_param = worst_param.max(rel(analytic[p], numeric));
    }

    let dx = input_gradients(&model, &m, temperature).unwrap();
    let mut worst_input: f64 = 0.0;
    for (r, x) in xs.iter().enumerate() {
        let z = naive_logits(&dims, &params, x);
        let top = (0..z.len()).fold(0, |b, j| if z[j] > z[b] { j } else { b });
        let f = |v: &[f64]| naive_log_softmax(&naive_logits(&dims, &params, v), temperature)[top];
        for i in 0..x.len() {
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus[i] += h;
            minus[i] -= h;
            let numeric = (f(&plus) - f(&minus)) / (2.0 * h);
            worst_input = worst_input.max(rel(dx.row(r)[i], numeric));
        }
    }
    (worst_param, worst_input)
}
