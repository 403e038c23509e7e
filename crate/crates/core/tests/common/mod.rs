#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use trace_pursuit::{slice_response, CenteredSample, Dataset};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random instance with a nonlinear response depending on the first two
/// predictors (or the only one).
pub fn random_sample(
    rng: &mut ChaCha8Rng,
    n: usize,
    p: usize,
    h: usize,
    uniform: bool,
) -> CenteredSample {
    let x = DMatrix::from_fn(n, p, |_, _| {
        if uniform {
            rng.random_range(-1.0..1.0)
        } else {
            StandardNormal.sample(rng)
        }
    });
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let a = x[(i, 0)];
            let b = x[(i, p.min(2) - 1)];
            let noise: f64 = StandardNormal.sample(rng);
            a + b * b + 0.5 * a * b + 0.3 * noise
        })
        .collect();
    let d = Dataset::new(x, y).unwrap();
    let s = slice_response(d.y(), h, false).unwrap();
    CenteredSample::new(&d, s).unwrap()
}

/// Picks `size` distinct indices from `0..p` plus one more candidate outside them.
pub fn random_set(rng: &mut ChaCha8Rng, p: usize, size: usize) -> (Vec<usize>, usize) {
    let mut idx: Vec<usize> = (0..p).collect();
    for i in (1..p).rev() {
        let k = rng.random_range(0..=i);
        idx.swap(i, k);
    }
    (idx[..size].to_vec(), idx[size])
}

/// Symmetric inverse square root by eigendecomposition.
pub fn oracle_inv_sqrt(s: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(s.clone());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Moments recomputed from the raw dataset by explicit loops: two-pass
/// means, then covariance and slice moments.
pub struct NaiveMoments {
    pub sigma: DMatrix<f64>,
    pub u: Vec<DVector<f64>>,
    pub v: Vec<DMatrix<f64>>,
    pub p: Vec<f64>,
}

pub fn naive_moments(
    x: &DMatrix<f64>,
    membership: &[usize],
    h: usize,
    f: &[usize],
) -> NaiveMoments {
    let n = x.nrows();
    let m = f.len();
    let mut mean = vec![0.0; m];
    for (a, &col) in f.iter().enumerate() {
        for i in 0..n {
            mean[a] += x[(i, col)];
        }
        mean[a] /= n as f64;
    }
    let c = |i: usize, a: usize| x[(i, f[a])] - mean[a];
    let mut sigma = DMatrix::zeros(m, m);
    let mut u = vec![DVector::zeros(m); h];
    let mut v = vec![DMatrix::zeros(m, m); h];
    let mut count = vec![0.0; h];
    for i in 0..n {
        let s = membership[i];
        count[s] += 1.0;
        for a in 0..m {
            u[s][a] += c(i, a);
            for b in 0..m {
                sigma[(a, b)] += c(i, a) * c(i, b);
                v[s][(a, b)] += c(i, a) * c(i, b);
            }
        }
    }
    sigma /= n as f64;
    for s in 0..h {
        u[s] /= count[s];
        v[s] /= count[s];
    }
    NaiveMoments {
        sigma,
        u,
        v,
        p: count.iter().map(|c| c / n as f64).collect(),
    }
}

/// Kernel trace from the explicitly materialized kernel matrix.
pub fn oracle_trace(method: trace_pursuit::Method, nm: &NaiveMoments) -> f64 {
    use trace_pursuit::Method;
    let m = nm.sigma.nrows();
    if m == 0 {
        return 0.0;
    }
    let w = oracle_inv_sqrt(&nm.sigma);
    let h = nm.p.len();
    let kernel = match method {
        Method::Sir => {
            let mut b = DMatrix::zeros(m, m);
            for s in 0..h {
                b += &nm.u[s] * nm.u[s].transpose() * nm.p[s];
            }
            &w * b * &w
        }
        Method::Save => {
            let mut k = DMatrix::zeros(m, m);
            for s in 0..h {
                let a = &w * (&nm.sigma - &nm.v[s] + &nm.u[s] * nm.u[s].transpose()) * &w;
                k += &a * &a * nm.p[s];
            }
            k
        }
        Method::Dr => {
            let mut first = DMatrix::zeros(m, m);
            let mut between = DMatrix::zeros(m, m);
            let mut scalar = 0.0;
            let sigma_inv = nm.sigma.clone().try_inverse().unwrap();
            for s in 0..h {
                let a = &w * &nm.v[s] * &w;
                first += &a * &a * nm.p[s];
                between += &w * &nm.u[s] * nm.u[s].transpose() * &w * nm.p[s];
                scalar += nm.p[s] * (nm.u[s].transpose() * &sigma_inv * &nm.u[s])[(0, 0)];
            }
            first * 2.0 + &between * &between * 2.0 + &between * (2.0 * scalar)
                - DMatrix::identity(m, m) * 2.0
        }
    };
    kernel.trace()
}
