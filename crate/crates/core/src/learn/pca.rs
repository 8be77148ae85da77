use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const TOLERANCE: f64 = 1e-9;
const MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    /// One row per sample, one column per component.
    pub projected: Vec<Vec<f64>>,
    pub explained_variance_ratio: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    n
}

/// Flips `v` so its largest-magnitude entry (first on ties) is positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let c = dot(v, b);
        for (x, y) in v.iter_mut().zip(b) {
            *x -= c * y;
        }
    }
}

/// Top-`k` principal components by power iteration with deflation.
pub fn pca_project(x: &[Vec<f64>], k: usize) -> Result<Pca> {
    let n = x.len();
    if n < 2 {
        return Err(Error::InsufficientData("PCA needs at least 2 samples".into()));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidData("ragged feature matrix".into()));
    }
    if k == 0 || k > (n - 1).min(d) {
        return Err(Error::OutOfRange(format!(
            "{k} components requested from {n} samples of {d} features"
        )));
    }
    let mut mean = vec![0.0; d];
    for row in x {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered: Vec<Vec<f64>> = x
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in &centered {
        for i in 0..d {
            if r[i] == 0.0 {
                continue;
            }
            for j in i..d {
                cov[i][j] += r[i] * r[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= (n - 1) as f64;
            cov[j][i] = cov[i][j];
        }
    }
    let trace: f64 = (0..d).map(|i| cov[i][i]).sum();
    if !(trace > 0.0) {
        return Err(Error::DegenerateCovariance);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut ratios = Vec::with_capacity(k);
    for _ in 0..k {
        let mut v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        orthogonalize(&mut v, &components);
        normalize(&mut v);
        let mut lambda = 0.0;
        for _ in 0..MAX_ITERATIONS {
            let mut w: Vec<f64> = cov.iter().map(|row| dot(row, &v)).collect();
            orthogonalize(&mut w, &components);
            let norm = normalize(&mut w);
            if norm <= trace * 1e-15 {
                // the remaining spectrum is numerically zero
                lambda = 0.0;
                break;
            }
            if dot(&w, &v) < 0.0 {
                for x in &mut w {
                    *x = -*x;
                }
            }
            let delta: f64 = w.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            v = w;
            lambda = norm;
            if delta < TOLERANCE {
                break;
            }
        }
        fix_sign(&mut v);
        for i in 0..d {
            for j in 0..d {
                cov[i][j] -= lambda * v[i] * v[j];
            }
        }
        ratios.push((lambda / trace).clamp(0.0, 1.0));
        components.push(v);
    }
    let projected = centered
        .iter()
        .map(|r| components.iter().map(|c| dot(r, c)).collect())
        .collect();
    Ok(Pca {
        projected,
        explained_variance_ratio: ratios,
        components,
        mean,
    })
}
