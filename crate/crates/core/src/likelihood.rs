//! Exact log-likelihood of discrete observations by change of variables,
//! its Monte-Carlo marginal when the driver has more coordinates than the
//! state, and multi-level regression of the likelihood onto powers of `N`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fbm::FbmIncrementModel;
use crate::field::ParametricVectorField;
use crate::grid::{IncrementSet, ObservationSet};
use crate::inverse::{
    invert_dataset, invert_dataset_constrained, jacobian_log_det, CoordinateSplit,
    InversionResult, NewtonOptions,
};

#[derive(Debug, Clone, Serialize)]
pub struct IntervalTerm {
    pub increment: Vec<f64>,
    pub z_det: f64,
    pub newton_iters: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct LogLikelihood {
    pub theta: Vec<f64>,
    pub loglik: f64,
    pub jacobian_term: f64,
    pub density_term: f64,
    pub per_interval: Vec<IntervalTerm>,
}

fn check_noise(obs: &ObservationSet, noise: &FbmIncrementModel) -> Result<()> {
    if noise.intervals() != obs.partition().intervals() {
        return Err(Error::Dimension(format!(
            "noise model covers {} intervals, observations {}",
            noise.intervals(),
            obs.partition().intervals()
        )));
    }
    Ok(())
}

fn assemble(theta: &[f64], inv: &InversionResult, density_term: f64) -> Result<LogLikelihood> {
    let jacobian_term = jacobian_log_det(inv)?;
    let per_interval = inv
        .increments
        .raw()
        .iter()
        .zip(&inv.z_dets)
        .zip(&inv.newton_iters)
        .map(|((dx, &z_det), &newton_iters)| IntervalTerm {
            increment: dx.as_slice().to_vec(),
            z_det,
            newton_iters,
        })
        .collect();
    Ok(LogLikelihood {
        theta: theta.to_vec(),
        loglik: density_term + jacobian_term,
        jacobian_term,
        density_term,
        per_interval,
    })
}

/// Log-likelihood of `obs` under `θ` for a square system (`m = d`).
pub fn log_likelihood(
    obs: &ObservationSet,
    theta: &[f64],
    field: &dyn ParametricVectorField,
    noise: &FbmIncrementModel,
    opts: &NewtonOptions,
) -> Result<LogLikelihood> {
    check_noise(obs, noise)?;
    let inv = invert_dataset(obs, theta, field, opts)?;
    let density = noise.log_density(&inv.increments)?;
    assemble(theta, &inv, density)
}

#[derive(Debug, Clone)]
pub struct MarginalOptions {
    pub samples: usize,
    pub seed: u64,
    pub split: CoordinateSplit,
    pub newton: NewtonOptions,
}

#[derive(Debug, Clone, Serialize)]
pub struct MarginalLogLik {
    pub value: f64,
    /// Standard error of `value` (delta method on the sample mean of weights).
    pub mc_stderr: f64,
    pub samples: usize,
    pub failures: usize,
    /// More than half of the samples failed inversion.
    pub warning: bool,
}

/// Conditional log-likelihood given the frozen coordinates' raw increments.
pub fn log_likelihood_given(
    obs: &ObservationSet,
    theta: &[f64],
    field: &dyn ParametricVectorField,
    noise: &FbmIncrementModel,
    split: &CoordinateSplit,
    frozen: &IncrementSet,
    opts: &NewtonOptions,
) -> Result<LogLikelihood> {
    check_noise(obs, noise)?;
    let inv = invert_dataset_constrained(obs, theta, field, split, frozen, opts)?;
    let density = noise.log_density_of(&inv.increments, split.solved().iter().copied())?;
    assemble(theta, &inv, density)
}

/// `log E[L(y | θ, x_frozen)]` over the frozen coordinates drawn from their
/// fBm law. Sample `j` uses stream `j` of a ChaCha generator keyed by `seed`.
pub fn log_likelihood_marginal(
    obs: &ObservationSet,
    theta: &[f64],
    field: &dyn ParametricVectorField,
    noise: &FbmIncrementModel,
    opts: &MarginalOptions,
) -> Result<MarginalLogLik> {
    let (d, m) = (field.state_dim(), field.driver_dim());
    if m <= d {
        return Err(Error::Dimension(format!(
            "marginal likelihood needs m > d (got d={d}, m={m})"
        )));
    }
    if opts.samples == 0 {
        return Err(Error::InvalidParameter("need at least one Monte-Carlo sample".into()));
    }
    check_noise(obs, noise)?;
    let free = opts.split.frozen().len();
    let logs: Vec<Option<f64>> = (0..opts.samples)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(j as u64);
            let frozen = noise.sample_with(free, &mut rng);
            match log_likelihood_given(obs, theta, field, noise, &opts.split, &frozen, &opts.newton)
            {
                Ok(l) if l.loglik.is_finite() => Some(l.loglik),
                Ok(_) => None,
                Err(e) => {
                    log::debug!("sample {j} failed: {e}");
                    None
                }
            }
        })
        .collect();
    let ok: Vec<f64> = logs.iter().flatten().copied().collect();
    let failures = opts.samples - ok.len();
    if ok.is_empty() {
        return Err(Error::AllSamplesFailed { samples: opts.samples });
    }
    let warning = 2 * failures > opts.samples;
    if warning {
        log::warn!("{failures} of {} Monte-Carlo samples failed inversion", opts.samples);
    }
    // failed samples contribute zero weight
    let k = opts.samples as f64;
    let shift = ok.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = ok.iter().map(|l| (l - shift).exp()).collect();
    let mean = w.iter().sum::<f64>() / k;
    let var = if opts.samples > 1 {
        let sq = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() + failures as f64 * mean * mean;
        sq / (k - 1.0)
    } else {
        0.0
    };
    Ok(MarginalLogLik {
        value: shift + mean.ln(),
        mc_stderr: var.sqrt() / (k.sqrt() * mean),
        samples: opts.samples,
        failures,
        warning,
    })
}

/// Multi-level fit of `ℓ(N) ≈ Σ_k ℓ⁽ᵏ⁾ N^{-α_k}`.
#[derive(Debug, Clone, Serialize)]
pub struct ScaleFit {
    pub alpha: Vec<f64>,
    pub sample_sizes: Vec<f64>,
    /// One row per θ; one fitted coefficient per exponent.
    pub components_on_grid: Vec<Vec<f64>>,
    /// Log-log slope of the extrapolation error against `N` (per θ, then median).
    pub remainder_slope: f64,
    pub remainder_slopes: Vec<f64>,
}

fn check_exponents(alpha: &[f64]) -> Result<()> {
    if alpha.is_empty() || alpha.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter(format!(
            "exponents must be nonempty and strictly increasing, got {alpha:?}"
        )));
    }
    Ok(())
}

fn design(ns: &[f64], alpha: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(ns.len(), alpha.len(), |i, k| ns[i].powf(-alpha[k]))
}

/// Least-squares coefficients with column scaling; errors when the design
/// has fewer effective rows than columns.
fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let scales: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    if scales.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::IllConditioned("degenerate design column".into()));
    }
    let scaled = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] / scales[j]);
    let svd = scaled.svd(true, true);
    let (smax, smin) = svd
        .singular_values
        .iter()
        .fold((0.0f64, f64::INFINITY), |(hi, lo), &s| (hi.max(s), lo.min(s)));
    if a.nrows() < a.ncols() || smin <= 1e-12 * smax {
        return Err(Error::IllConditioned(format!(
            "{} levels for {} coefficients (condition {:e})",
            a.nrows(),
            a.ncols(),
            smax / smin
        )));
    }
    let x = svd
        .solve(b, 0.0)
        .map_err(|e| Error::IllConditioned(e.to_string()))?;
    Ok(DVector::from_fn(x.len(), |j, _| x[j] / scales[j]))
}

/// Fits coefficients for one θ from values at sample sizes `ns`.
/// Returns the coefficients and the extrapolation errors: each window of
/// `M+1` consecutive levels is solved exactly and used to predict the next.
pub fn fit_scales(ns: &[f64], values: &[f64], alpha: &[f64]) -> Result<(Vec<f64>, Vec<(f64, f64)>)> {
    check_exponents(alpha)?;
    if ns.len() != values.len() {
        return Err(Error::Dimension("one value per sample size".into()));
    }
    let coeffs = lstsq(&design(ns, alpha), &DVector::from_column_slice(values))?;
    let width = alpha.len();
    let mut errors = Vec::new();
    for start in 0..ns.len().saturating_sub(width) {
        let win = &ns[start..start + width];
        let local = lstsq(
            &design(win, alpha),
            &DVector::from_column_slice(&values[start..start + width]),
        )?;
        let next = ns[start + width];
        let pred: f64 = alpha
            .iter()
            .zip(local.iter())
            .map(|(a, c)| c * next.powf(-a))
            .sum();
        errors.push((next, (values[start + width] - pred).abs()));
    }
    Ok((coeffs.as_slice().to_vec(), errors))
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, e)| *e > 0.0 && e.is_finite())
        .map(|&(n, e)| (n.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    ols_slope(&x, &y)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.retain(|x| x.is_finite());
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Regresses full log-likelihood evaluations across levels onto `N^{-α_k}`
/// for every θ in `thetas`. `N` is the interval count of each level's data.
pub fn decompose_scales<F>(
    evaluate: F,
    obs_per_level: &BTreeMap<u32, ObservationSet>,
    alpha: &[f64],
    thetas: &[Vec<f64>],
) -> Result<ScaleFit>
where
    F: Fn(&ObservationSet, &[f64]) -> Result<f64> + Sync,
{
    check_exponents(alpha)?;
    if obs_per_level.len() < alpha.len() + 1 {
        return Err(Error::IllConditioned(format!(
            "{} levels supplied; at least {} needed for {} exponents",
            obs_per_level.len(),
            alpha.len() + 1,
            alpha.len()
        )));
    }
    let ns: Vec<f64> = obs_per_level
        .values()
        .map(|o| o.partition().intervals() as f64)
        .collect();
    let fits: Vec<(Vec<f64>, f64)> = thetas
        .par_iter()
        .map(|theta| {
            let values = obs_per_level
                .values()
                .map(|o| evaluate(o, theta))
                .collect::<Result<Vec<_>>>()?;
            let (coeffs, errors) = fit_scales(&ns, &values, alpha)?;
            Ok((coeffs, log_log_slope(&errors)))
        })
        .collect::<Result<_>>()?;
    let (components_on_grid, remainder_slopes): (Vec<_>, Vec<_>) = fits.into_iter().unzip();
    Ok(ScaleFit {
        alpha: alpha.to_vec(),
        sample_sizes: ns,
        components_on_grid,
        remainder_slope: median(remainder_slopes.clone()),
        remainder_slopes,
    })
}

/// Data-bound scale components `θ ↦ ℓ⁽ᵏ⁾(y | θ)` with their exponents.
pub struct ScaledLogLik {
    exponents: Vec<f64>,
    components: Vec<Box<dyn Fn(&[f64]) -> f64 + Send + Sync>>,
    sample_size: f64,
}

impl std::fmt::Debug for ScaledLogLik {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScaledLogLik")
            .field("exponents", &self.exponents)
            .field("sample_size", &self.sample_size)
            .finish_non_exhaustive()
    }
}

impl ScaledLogLik {
    /// `sample_size` is the `N` used in the weights `N^{-α_k}`.
    pub fn new(
        exponents: Vec<f64>,
        components: Vec<Box<dyn Fn(&[f64]) -> f64 + Send + Sync>>,
        sample_size: f64,
    ) -> Result<Self> {
        check_exponents(&exponents)?;
        if components.len() != exponents.len() {
            return Err(Error::Dimension(format!(
                "{} components for {} exponents",
                components.len(),
                exponents.len()
            )));
        }
        if !(sample_size > 0.0) {
            return Err(Error::InvalidParameter("sample size must be positive".into()));
        }
        Ok(Self {
            exponents,
            components,
            sample_size,
        })
    }

    /// fOU components for Brownian noise; weights `N/T` and `1`.
    pub fn fou(stats: crate::fou::DiffusionStats) -> Self {
        let s0 = stats;
        let s1 = stats;
        Self {
            exponents: vec![-1.0, 0.0],
            components: vec![
                Box::new(move |t: &[f64]| s0.components(t[0], t[1]).0),
                Box::new(move |t: &[f64]| s1.components(t[0], t[1]).1),
            ],
            sample_size: stats.n as f64 / stats.t_end,
        }
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    pub fn order_count(&self) -> usize {
        self.exponents.len()
    }

    pub fn sample_size(&self) -> f64 {
        self.sample_size
    }

    pub fn component(&self, k: usize, theta: &[f64]) -> f64 {
        (self.components[k])(theta)
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.sample_size.powf(-self.exponents[k])
    }

    /// `Σ_k ℓ⁽ᵏ⁾(θ) N^{-α_k}`.
    pub fn reconstruct(&self, theta: &[f64]) -> f64 {
        (0..self.order_count())
            .map(|k| self.component(k, theta) * self.weight(k))
            .sum()
    }
}
