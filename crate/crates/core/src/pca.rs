//! Two-component PCA by power iteration with deflation.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

/// Power-iteration steps per component.
pub const POWER_ITERATIONS: usize = 100;

/// Projects `rows` onto their top two principal components. Rows are
/// centred first; the iteration starts from a fixed vector, so results are
/// deterministic.
pub fn project_2d(rows: &[Vec<f64>]) -> Vec<[f64; 2]> {
    let Some(first) = rows.first() else {
        return Vec::new();
    };
    let d = first.len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, &x) in mean.iter_mut().zip(r) {
            *m += x / n;
        }
    }
    let centred: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(&x, &m)| x - m).collect())
        .collect();

    // covariance (unnormalised)
    let mut cov = vec![0.0; d * d];
    for r in &centred {
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += r[i] * r[j];
            }
        }
    }

    let pc1 = leading_eigenvector(&cov, d);
    let lambda1 = rayleigh(&cov, &pc1, d);
    for i in 0..d {
        for j in 0..d {
            cov[i * d + j] -= lambda1 * pc1[i] * pc1[j];
        }
    }
    let mut pc2 = leading_eigenvector(&cov, d);
    // keep the pair orthonormal even when the residual is tiny
    let overlap = dot(&pc1, &pc2);
    pc2.iter_mut().zip(&pc1).for_each(|(b, &a)| *b -= overlap * a);
    normalize(&mut pc2);

    centred
        .iter()
        .map(|r| [dot(r, &pc1), dot(r, &pc2)])
        .collect()
}

fn leading_eigenvector(m: &[f64], d: usize) -> Vec<f64> {
    // Fixed, non-symmetric start so it is unlikely to be orthogonal to the target.
    let mut v: Vec<f64> = (0..d).map(|i| 1.0 + i as f64 / d as f64).collect();
    normalize(&mut v);
    for _ in 0..POWER_ITERATIONS {
        let mut w = vec![0.0; d];
        for i in 0..d {
            w[i] = dot(&m[i * d..(i + 1) * d], &v);
        }
        if Float::sqrt(dot(&w, &w)) < 1e-300 {
            break;
        }
        normalize(&mut w);
        v = w;
    }
    v
}

fn rayleigh(m: &[f64], v: &[f64], d: usize) -> f64 {
    (0..d).map(|i| v[i] * dot(&m[i * d..(i + 1) * d], v)).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let norm = Float::sqrt(dot(v, v));
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}
