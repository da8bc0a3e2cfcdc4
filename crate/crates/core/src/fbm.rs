//! Fractional-Brownian-motion increment law on a homogeneous grid.
//!
//! Increments of fBm with Hurst index `h` over intervals of width `δ` are
//! jointly Gaussian with mean zero and Toeplitz covariance
//!
//! ```text
//! Σ_ij = δ^{2h}/2 · (|j-i+1|^{2h} + |j-i-1|^{2h} - 2|j-i|^{2h})
//! ```
//!
//! The matrix is factorised densely (Cholesky, `O(N^3)`), which is adequate
//! up to a few thousand intervals. Coordinates of a multi-dimensional driver
//! are independent, each with the same `Σ_h`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::{IncrementSet, Partition};

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Dense covariance with its Cholesky factor and log-determinant.
#[derive(Debug, Clone)]
pub struct CovFactor {
    matrix: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_det: f64,
    jitter: f64,
}

/// `(Σ_h)_{ij}` as a function of the lag `|i - j|`.
pub fn fgn_autocovariance(h: f64, delta: f64, lag: usize) -> f64 {
    let two_h = 2.0 * h;
    let k = lag as f64;
    let core = (k + 1.0).powf(two_h) + (k - 1.0).abs().powf(two_h) - 2.0 * k.powf(two_h);
    delta.powf(two_h) / 2.0 * core
}

fn check_hurst(h: f64) -> Result<()> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "Hurst parameter must lie in (0, 1), got {h}"
        )));
    }
    Ok(())
}

/// Builds and factorises `Σ_h` for `n` intervals of width `delta`.
///
/// On Cholesky failure `1e-12·trace/N` is added to the diagonal once before
/// giving up.
pub fn covariance(h: f64, delta: f64, n: usize) -> Result<CovFactor> {
    check_hurst(h)?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "spacing must be positive, got {delta}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one interval".into()));
    }
    let acov: Vec<f64> = (0..n).map(|k| fgn_autocovariance(h, delta, k)).collect();
    let matrix = DMatrix::from_fn(n, n, |i, j| acov[i.abs_diff(j)]);
    CovFactor::from_matrix(matrix).map_err(|e| match e {
        Error::NotPositiveDefinite { jitter, .. } => Error::NotPositiveDefinite { h, n, jitter },
        other => other,
    })
}

impl CovFactor {
    /// Factorises an arbitrary symmetric matrix with the same jitter policy.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 || matrix.ncols() != n {
            return Err(Error::Dimension("covariance must be square and nonempty".into()));
        }
        let (chol, jitter) = match matrix.clone().cholesky() {
            Some(c) => (c.unpack(), 0.0),
            None => {
                let jitter = 1e-12 * matrix.trace() / n as f64;
                let mut bumped = matrix.clone();
                for i in 0..n {
                    bumped[(i, i)] += jitter;
                }
                match bumped.cholesky() {
                    Some(c) => {
                        log::warn!("covariance needed diagonal jitter {jitter:e}");
                        (c.unpack(), jitter)
                    }
                    None => {
                        return Err(Error::NotPositiveDefinite {
                            h: f64::NAN,
                            n,
                            jitter,
                        })
                    }
                }
            }
        };
        let log_det = 2.0 * chol.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(Self {
            matrix,
            chol,
            log_det,
            jitter,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Lower-triangular `L` with `L Lᵀ = Σ` (plus jitter, if any was needed).
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Gaussian log-density of `x`; the quadratic form uses a triangular solve.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        let n = self.dim();
        if x.len() != n {
            return Err(Error::Dimension(format!(
                "increment vector has length {}, covariance is {n}x{n}",
                x.len()
            )));
        }
        let z = self
            .chol
            .solve_lower_triangular(&DVector::from_column_slice(x))
            .ok_or_else(|| Error::Dimension("singular Cholesky factor".into()))?;
        Ok(-0.5 * n as f64 * LN_2PI - 0.5 * self.log_det - 0.5 * z.norm_squared())
    }

    /// `L z` with `z` standard normal drawn from `rng`.
    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.chol * z
    }

    /// Deterministic draw for a given seed.
    pub fn sample(&self, seed: u64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng)
    }
}

/// fBm increments on a homogeneous partition, independent across coordinates.
#[derive(Debug, Clone)]
pub struct FbmIncrementModel {
    h: f64,
    partition: Partition,
    factor: CovFactor,
}

impl FbmIncrementModel {
    pub fn new(h: f64, partition: Partition) -> Result<Self> {
        check_hurst(h)?;
        if !partition.is_homogeneous() {
            return Err(Error::InvalidPartition(
                "fBm increment model needs a homogeneous grid".into(),
            ));
        }
        let delta = partition.t_end() / partition.intervals() as f64;
        let factor = covariance(h, delta, partition.intervals())?;
        Ok(Self {
            h,
            partition,
            factor,
        })
    }

    pub fn hurst(&self) -> f64 {
        self.h
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn factor(&self) -> &CovFactor {
        &self.factor
    }

    pub fn intervals(&self) -> usize {
        self.partition.intervals()
    }

    /// Draws `m` independent coordinates of increments from an explicit generator.
    pub fn sample_with<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> IncrementSet {
        let coords: Vec<Vec<f64>> = (0..m)
            .map(|_| self.factor.sample_with(rng).as_slice().to_vec())
            .collect();
        IncrementSet::from_coordinates(self.partition.clone(), &coords)
            .expect("sampled coordinates match the partition")
    }

    /// Draws `m` coordinates of increments; reproducible given `seed`.
    pub fn sample(&self, m: usize, seed: u64) -> IncrementSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(m, &mut rng)
    }

    /// Joint log-density of all coordinates of `x`.
    pub fn log_density(&self, x: &IncrementSet) -> Result<f64> {
        self.log_density_of(x, 0..x.dim())
    }

    /// Joint log-density of the selected coordinates of `x`.
    pub fn log_density_of(
        &self,
        x: &IncrementSet,
        coords: impl IntoIterator<Item = usize>,
    ) -> Result<f64> {
        if x.len() != self.intervals() {
            return Err(Error::Dimension(format!(
                "{} increments for a model over {} intervals",
                x.len(),
                self.intervals()
            )));
        }
        coords
            .into_iter()
            .map(|j| self.factor.log_density(&x.coordinate(j)))
            .sum()
    }
}
