//! Shared by the integration tests and the acceptance runner: a central
//! finite-difference gradient checker, scalar-loop oracles written without
//! the graph, and small random generators.
#![allow(dead_code)]

use avaew_core::avaew::Discriminator;
use avaew_core::ndcore::{Bound, Graph, ParamStore, Tensor, Var};
use avaew_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;
/// Gradient norms below this are compared absolutely: central differences
/// carry ~1e-11 of rounding noise, which would otherwise dominate the
/// relative error of an exactly-zero gradient.
pub const GRAD_FLOOR: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

pub fn randn(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor<f64> {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| scale * normal(rng)).collect()).unwrap()
}

/// `||a - b|| / max(||a||, ||b||, GRAD_FLOOR)`.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(GRAD_FLOOR)
}

/// Compares backprop against central differences for every parameter of
/// the store `store(model)`; returns `(name, relative error)` per tensor.
pub fn fd_check<M: Clone>(
    model: &M,
    store: impl Fn(&mut M) -> &mut ParamStore<f64>,
    loss: impl Fn(&M, &mut Graph<f64>) -> Result<(Bound, Var)>,
) -> Vec<(String, f64)> {
    let mut work = model.clone();
    let analytic = {
        let mut g = Graph::new();
        let (b, l) = loss(&work, &mut g).expect("loss builds");
        let grads = g.backward(l).expect("scalar loss");
        store(&mut work).gradients(&b, &grads)
    };
    let value = |m: &M| {
        let mut g = Graph::new();
        let (_, l) = loss(m, &mut g).expect("loss builds");
        g.value(l).item()
    };
    let n = store(&mut work).len();
    let mut out = Vec::with_capacity(n);
    for (i, exact) in analytic.iter().enumerate().take(n) {
        let len = store(&mut work).get(i).len();
        let mut numeric = vec![0.0; len];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let x = store(&mut work).get(i).data()[j];
            store(&mut work).get_mut(i).data_mut()[j] = x + FD_STEP;
            let up = value(&work);
            store(&mut work).get_mut(i).data_mut()[j] = x - FD_STEP;
            let down = value(&work);
            store(&mut work).get_mut(i).data_mut()[j] = x;
            *slot = (up - down) / (2.0 * FD_STEP);
        }
        let name = store(&mut work).name(i).to_string();
        out.push((name, rel_error(exact.data(), &numeric)));
    }
    out
}

pub fn worst(errors: &[(String, f64)]) -> (String, f64) {
    errors
        .iter()
        .cloned()
        .fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a })
}

// ---- scalar-loop oracles -------------------------------------------------

pub fn oracle_sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Mean binary cross-entropy with probabilities clamped to `[eps, 1 - eps]`.
pub fn oracle_bce(p: &[f64], y: &[f64], eps: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        let q = p[i].clamp(eps, 1.0 - eps);
        s -= y[i] * q.ln() + (1.0 - y[i]) * (1.0 - q).ln();
    }
    s / p.len() as f64
}

/// Row-averaged squared Euclidean distance.
pub fn oracle_recon(v: &[Vec<f64>], v_hat: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for i in 0..v.len() {
        for k in 0..v[i].len() {
            let d = v[i][k] - v_hat[i][k];
            s += d * d;
        }
    }
    s / v.len() as f64
}

/// Row-averaged squared W2 between diagonal Gaussians given by (mean, std).
pub fn oracle_w2(mu_a: &[Vec<f64>], sd_a: &[Vec<f64>], mu_b: &[Vec<f64>], sd_b: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for i in 0..mu_a.len() {
        for k in 0..mu_a[i].len() {
            s += (mu_a[i][k] - mu_b[i][k]).powi(2) + (sd_a[i][k] - sd_b[i][k]).powi(2);
        }
    }
    s / mu_a.len() as f64
}

/// `relu(relu(x W0 + b0) W1 + b1)` with plain loops over the stored tensors.
pub fn oracle_disc_features(disc: &Discriminator<f64>, x: &[f64]) -> Vec<f64> {
    let layer = |name: &str, input: &[f64]| -> Vec<f64> {
        let w = disc.store.get(disc.store.find(&format!("{name}.weight")).unwrap());
        let b = disc.store.get(disc.store.find(&format!("{name}.bias")).unwrap());
        (0..w.cols())
            .map(|o| {
                let mut acc = b.data()[o];
                for (i, xi) in input.iter().enumerate() {
                    acc += xi * w.data()[i * w.cols() + o];
                }
                acc.max(0.0)
            })
            .collect()
    };
    let h = layer("disc.trunk.0", x);
    layer("disc.trunk.1", &h)
}

pub fn oracle_group_fm(disc: &Discriminator<f64>, real: &[Vec<f64>], fake: &[Vec<f64>]) -> f64 {
    let mean = |rows: &[Vec<f64>]| {
        let feats: Vec<Vec<f64>> = rows.iter().map(|r| oracle_disc_features(disc, r)).collect();
        let mut m = vec![0.0; feats[0].len()];
        for f in &feats {
            for (a, b) in m.iter_mut().zip(f) {
                *a += b;
            }
        }
        m.iter().map(|a| a / feats.len() as f64).collect::<Vec<_>>()
    };
    let (a, b) = (mean(real), mean(fake));
    a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum()
}

pub fn oracle_pair_fm(disc: &Discriminator<f64>, real: &[Vec<f64>], fake: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for (r, f) in real.iter().zip(fake) {
        let (a, b) = (oracle_disc_features(disc, r), oracle_disc_features(disc, f));
        s += a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    }
    s / real.len() as f64
}

/// O(n²) pairwise AUC: positive-negative pairs ranked correctly, ties 1/2.
pub fn oracle_auc(pred: &[f64], labels: &[u8]) -> f64 {
    let (mut wins, mut ties, mut pos, mut neg) = (0u64, 0u64, 0u64, 0u64);
    for i in 0..pred.len() {
        if labels[i] == 1 {
            pos += 1;
        } else {
            neg += 1;
        }
        if labels[i] != 1 {
            continue;
        }
        for j in 0..pred.len() {
            if labels[j] == 0 {
                if pred[i] > pred[j] {
                    wins += 1;
                } else if pred[i] == pred[j] {
                    ties += 1;
                }
            }
        }
    }
    (wins as f64 + 0.5 * ties as f64) / (pos as f64 * neg as f64)
}

pub fn rows_of(t: &Tensor<f64>) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

pub mod suites;
