//! Closed forms for the scalar fractional Ornstein–Uhlenbeck model
//! `dY = -λY dt + σ dX` on a homogeneous grid.
//!
//! With `e = exp(-λδ)` the discrete map is
//! `y_{k+1} = e·y_k + σ(1-e)/(λδ)·Δx_{k+1}` and inverts to
//! `Δx_{k+1} = λδ(y_{k+1} - e·y_k) / (σ(1-e))`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fbm::{covariance, CovFactor, LN_2PI};
use crate::grid::{IncrementSet, ObservationSet, Partition, PiecewiseLinearPath};

/// Below this `|λδ|` the ratio `λδ/(1-e^{-λδ})` uses its Taylor series.
const SERIES_CUTOFF: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FouParams {
    pub lambda: f64,
    pub sigma: f64,
}

impl FouParams {
    pub fn new(lambda: f64, sigma: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self { lambda, sigma })
    }

    pub fn theta(&self) -> [f64; 2] {
        [self.lambda, self.sigma]
    }
}

/// `u / (1 - e^{-u})`.
fn gain(u: f64) -> f64 {
    if u.abs() < SERIES_CUTOFF {
        1.0 + u / 2.0 + u * u / 12.0
    } else {
        u / -(-u).exp_m1()
    }
}

/// `(1 - e^{-u}) / u`.
fn shrink(u: f64) -> f64 {
    if u.abs() < SERIES_CUTOFF {
        1.0 - u / 2.0 + u * u / 6.0
    } else {
        -(-u).exp_m1() / u
    }
}

fn scalar_check(y: &ObservationSet) -> Result<()> {
    if y.dim() != 1 {
        return Err(Error::Dimension(format!(
            "fOU observations are scalar, got dimension {}",
            y.dim()
        )));
    }
    Ok(())
}

fn homogeneous_spacing(p: &Partition) -> Result<f64> {
    if !p.is_homogeneous() {
        return Err(Error::InvalidPartition("fOU closed forms need a homogeneous grid".into()));
    }
    Ok(p.t_end() / p.intervals() as f64)
}

/// Closed-form inverse map: raw driver increments from observations.
pub fn fou_invert(y: &ObservationSet, p: &FouParams) -> Result<IncrementSet> {
    scalar_check(y)?;
    let part = y.partition();
    let v = y.coordinate(0);
    let raw = (0..part.intervals())
        .map(|k| {
            let u = p.lambda * part.spacing(k);
            let dl = v[k + 1] - v[k] * (-u).exp();
            DVector::from_element(1, gain(u) * dl / p.sigma)
        })
        .collect();
    IncrementSet::new(part.clone(), raw)
}

/// Closed-form forward map from `y0` and raw increments.
pub fn fou_forward(y0: f64, x: &IncrementSet, p: &FouParams) -> Result<ObservationSet> {
    if x.dim() != 1 {
        return Err(Error::Dimension("fOU driver is scalar".into()));
    }
    let part = x.partition();
    let mut values = Vec::with_capacity(x.len() + 1);
    values.push(y0);
    for (k, dx) in x.raw().iter().enumerate() {
        let u = p.lambda * part.spacing(k);
        let prev = values[k];
        values.push(prev * (-u).exp() + p.sigma * shrink(u) * dx[0]);
    }
    PiecewiseLinearPath::scalar(part.clone(), &values)
}

/// Increment-parametrised sensitivity `σ(1-e^{-λt})/(λδ)` at time `t ∈ [0, δ]`.
pub fn fou_sensitivity(p: &FouParams, delta: f64, t: f64) -> f64 {
    p.sigma * t * shrink(p.lambda * t) / delta
}

/// Full log-likelihood with fBm noise of Hurst index `h`, constants included.
pub fn fou_loglik(y: &ObservationSet, p: &FouParams, h: f64) -> Result<f64> {
    scalar_check(y)?;
    let delta = homogeneous_spacing(y.partition())?;
    let factor = covariance(h, delta, y.partition().intervals())?;
    fou_loglik_with(y, p, &factor)
}

/// As [`fou_loglik`] with a precomputed covariance factor.
pub fn fou_loglik_with(y: &ObservationSet, p: &FouParams, factor: &CovFactor) -> Result<f64> {
    scalar_check(y)?;
    let delta = homogeneous_spacing(y.partition())?;
    let n = y.partition().intervals();
    let x = fou_invert(y, p)?;
    let density = factor.log_density(&x.coordinate(0))?;
    Ok(density + n as f64 * (gain(p.lambda * delta) / p.sigma).ln())
}

/// Sufficient statistics of a scalar path for the Brownian (h = 1/2) case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionStats {
    pub n: usize,
    pub t_end: f64,
    /// `Σ (Δy_k)^2`
    pub s1: f64,
    /// `Σ y_k^2 δ`
    pub q: f64,
    /// `Σ y_k Δy_k`
    pub c: f64,
}

impl DiffusionStats {
    pub fn from_path(y: &ObservationSet) -> Result<Self> {
        scalar_check(y)?;
        let delta = homogeneous_spacing(y.partition())?;
        let v = y.coordinate(0);
        let n = v.len() - 1;
        let (mut s1, mut q, mut c) = (0.0, 0.0, 0.0);
        for k in 0..n {
            let dy = v[k + 1] - v[k];
            s1 += dy * dy;
            q += v[k] * v[k] * delta;
            c += v[k] * dy;
        }
        Ok(Self {
            n,
            t_end: y.partition().t_end(),
            s1,
            q,
            c,
        })
    }

    /// Brownian-noise log-likelihood at sample count `n` with these statistics
    /// held fixed; `Σ (y_{k+1} - e·y_k)^2 = S1 + (1-e)^2 Q n/T + 2(1-e) C`.
    /// At `n = self.n` this is [`ou_loglik`].
    pub fn loglik_at(&self, n: f64, p: &FouParams) -> f64 {
        let delta = self.t_end / n;
        let u = p.lambda * delta;
        let one_minus = -(-u).exp_m1();
        let sum_sq =
            self.s1 + one_minus * one_minus * self.q * n / self.t_end + 2.0 * one_minus * self.c;
        let g = gain(u);
        -0.5 * n * LN_2PI - n * p.sigma.ln() + n * g.ln()
            - g * g * sum_sq / (2.0 * p.sigma * p.sigma * delta)
    }

    /// `(ℓ⁽⁰⁾, ℓ⁽¹⁾)` with `ℓ ≈ (N/T)ℓ⁽⁰⁾ + ℓ⁽¹⁾`. Any real `λ`, `σ ≠ 0`.
    pub fn components(&self, lambda: f64, sigma: f64) -> (f64, f64) {
        let s2 = sigma * sigma;
        let l0 = -0.5 * (2.0 * std::f64::consts::PI * s2).ln() - self.s1 / (2.0 * self.t_end * s2);
        let l1 = lambda * self.t_end / 2.0
            - lambda * self.s1 / (2.0 * s2)
            - lambda * lambda * self.q / (2.0 * s2)
            - lambda * self.c / s2;
        (l0, l1)
    }

    /// `(σ̂², λ̂)`.
    pub fn mle(&self) -> Result<(f64, f64)> {
        if !(self.q > 0.0) {
            return Err(Error::InvalidParameter(
                "Σ y_k^2 δ vanishes; the mean-reversion estimate is undefined".into(),
            ));
        }
        Ok((self.s1 / self.t_end, -self.c / self.q + 0.0))
    }
}

/// Brownian-noise log-likelihood in the form that drops the `-(N/2) log δ`
/// constant; equals `fou_loglik(y, p, 0.5) + (N/2) log δ`.
pub fn ou_loglik(y: &ObservationSet, p: &FouParams) -> Result<f64> {
    let stats = DiffusionStats::from_path(y)?;
    Ok(stats.loglik_at(stats.n as f64, p))
}

/// `(ℓ⁽⁰⁾, ℓ⁽¹⁾)` of a scalar path.
pub fn fou_scaled_components(y: &ObservationSet, lambda: f64, sigma: f64) -> Result<(f64, f64)> {
    Ok(DiffusionStats::from_path(y)?.components(lambda, sigma))
}

/// `(σ̂², λ̂) = (Σ(Δy)²/T, -Σ y_k Δy_k / Σ y_k² δ)`.
pub fn fou_mle(y: &ObservationSet) -> Result<(f64, f64)> {
    DiffusionStats::from_path(y)?.mle()
}
