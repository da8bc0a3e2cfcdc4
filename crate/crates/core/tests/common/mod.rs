#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roughlik::fbm::FbmIncrementModel;
use roughlik::field::ParametricVectorField;
use roughlik::flow::respond;
use roughlik::grid::{dyadic_grid, ObservationSet, PiecewiseLinearPath};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

/// Driver path and response on a dyadic grid.
pub fn simulate(
    field: &dyn ParametricVectorField,
    theta: &[f64],
    h: f64,
    level: u32,
    t_end: f64,
    seed: u64,
    y0: &[f64],
) -> (PiecewiseLinearPath, ObservationSet) {
    let grid = dyadic_grid(level, t_end).unwrap();
    let model = FbmIncrementModel::new(h, grid).unwrap();
    let x = model
        .sample(field.driver_dim(), seed)
        .cumsum(&DVector::zeros(field.driver_dim()))
        .unwrap();
    let y = respond(field, &v(y0), &x, theta, 16).unwrap();
    (x, y)
}

/// Max over all subsets (of size >= 2) of `Σ |v_{k+1} - v_k|^p`, to the `1/p`.
pub fn brute_force_p_variation(points: &[DVector<f64>], p: f64) -> f64 {
    let n = points.len();
    assert!(n <= 16);
    let mut best = 0.0f64;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() < 2 {
            continue;
        }
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let s: f64 = idx
            .windows(2)
            .map(|w| (&points[w[1]] - &points[w[0]]).norm().powf(p))
            .sum();
        best = best.max(s);
    }
    best.powf(1.0 / p)
}

/// Gauss–Hermite nodes and weights for `∫ e^{-x^2} f(x) dx` (Golub–Welsch).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i.abs_diff(j) == 1 {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let first = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], std::f64::consts::PI.sqrt() * first * first)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// Dense Gaussian log-density via an explicit inverse and determinant.
pub fn dense_gaussian_log_density(cov: &DMatrix<f64>, x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let inv = cov.clone().try_inverse().unwrap();
    let xv = DVector::from_column_slice(x);
    let quad = (xv.transpose() * inv * &xv)[(0, 0)];
    -0.5 * n * (2.0 * std::f64::consts::PI).ln() - 0.5 * cov.determinant().ln() - 0.5 * quad
}

/// fBm increment covariance built directly from the autocovariance formula.
pub fn fgn_cov(h: f64, delta: f64, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        let k = (i as f64 - j as f64).abs();
        0.5 * delta.powf(2.0 * h)
            * ((k + 1.0).powf(2.0 * h) + (k - 1.0).abs().powf(2.0 * h) - 2.0 * k.powf(2.0 * h))
    })
}

pub fn uniform(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * r.random::<f64>()
}

/// Central finite-difference Jacobian of `f: R^n -> R^m`.
pub fn fd_jacobian(f: impl Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>, step: f64) -> DMatrix<f64> {
    let f0 = f(x);
    let mut jac = DMatrix::zeros(f0.len(), x.len());
    for j in 0..x.len() {
        let h = step * (1.0 + x[j].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (f(&xp) - f(&xm)) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}
