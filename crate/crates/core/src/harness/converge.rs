//! Convergence of discretised likelihoods as the observation grid refines.
//!
//! A fine driver `x` at level `n_ref` and its response `y` stand in for the
//! rough driver and its exact response. At each level `n` the likelihood of
//! `y` sampled on `D(n)` is compared with that of `y(n)`, the response to the
//! piecewise-linear restriction `π_n(x)`.

use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fbm::FbmIncrementModel;
use crate::field::ParametricVectorField;
use crate::flow::respond;
use crate::grid::{dyadic_grid, p_variation_distance, IncrementSet, ObservationSet};
use crate::inverse::NewtonOptions;
use crate::likelihood::{log_likelihood, ols_slope};

#[derive(Debug, Clone)]
pub struct ConvergeSettings {
    pub levels: Vec<u32>,
    pub n_ref: u32,
    pub t_end: f64,
    pub h: f64,
    pub seed: u64,
    /// True parameter used to simulate.
    pub theta: Vec<f64>,
    pub thetas: Vec<Vec<f64>>,
    pub y0: DVector<f64>,
    pub steps: usize,
    pub p: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub levels: Vec<u32>,
    pub n_ref: u32,
    /// `None` where some likelihood evaluation failed at that level.
    pub sup_gap: Vec<Option<f64>>,
    pub d_p: Vec<f64>,
    pub p: f64,
    /// Log-log slope of `sup_gap` against `N` over the successful levels.
    pub slope: f64,
    pub failures: Vec<Option<String>>,
}

impl ConvergenceReport {
    /// `level,sup_gap,d_p` rows for external plotting.
    pub fn write_plot_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["level", "sup_gap", "d_p"])
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        for ((level, gap), dp) in self.levels.iter().zip(&self.sup_gap).zip(&self.d_p) {
            let gap = gap.map(|g| g.to_string()).unwrap_or_else(|| "NaN".into());
            wtr.write_record([level.to_string(), gap, dp.to_string()])
                .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.sup_gap
            .windows(2)
            .all(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if b < a))
    }
}

/// `sup_θ |ℓ(a | θ) - ℓ(b | θ)|` over a finite set of parameters.
pub fn sup_gap(
    field: &dyn ParametricVectorField,
    a: &ObservationSet,
    b: &ObservationSet,
    thetas: &[Vec<f64>],
    noise: &FbmIncrementModel,
    opts: &NewtonOptions,
) -> Result<f64> {
    let gaps = thetas
        .par_iter()
        .map(|theta| {
            let la = log_likelihood(a, theta, field, noise, opts)?.loglik;
            let lb = log_likelihood(b, theta, field, noise, opts)?.loglik;
            Ok((la - lb).abs())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(gaps.into_iter().fold(0.0, f64::max))
}

pub fn run_convergence(
    field: &dyn ParametricVectorField,
    s: &ConvergeSettings,
) -> Result<ConvergenceReport> {
    if s.levels.is_empty() || s.levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("levels must be nonempty and strictly increasing".into()));
    }
    let max_level = *s.levels.last().unwrap();
    if s.n_ref < max_level + 4 {
        return Err(Error::Config(format!(
            "reference level {} must be at least the finest level plus 4 ({})",
            s.n_ref,
            max_level + 4
        )));
    }
    field.validate(&s.theta)?;
    let fine = dyadic_grid(s.n_ref, s.t_end)?;
    let model = FbmIncrementModel::new(s.h, fine.clone())?;
    let dx: IncrementSet = model.sample(field.driver_dim(), s.seed);
    let x = dx.cumsum(&DVector::zeros(field.driver_dim()))?;
    let y = respond(field, &s.y0, &x, &s.theta, s.steps)?;
    let opts = NewtonOptions::with_steps(s.steps);

    let per_level: Vec<(Option<f64>, f64, Option<String>)> = s
        .levels
        .par_iter()
        .map(|&n| {
            let grid = dyadic_grid(n, s.t_end)?;
            let xn = x.restrict(&grid)?;
            let dp = p_variation_distance(&xn.refine(&fine)?, &x, s.p)?;
            let attempt = (|| {
                let yn = respond(field, &s.y0, &xn, &s.theta, s.steps)?;
                let yd = y.restrict(&grid)?;
                let noise = FbmIncrementModel::new(s.h, grid.clone())?;
                sup_gap(field, &yd, &yn, &s.thetas, &noise, &opts)
            })();
            Ok(match attempt {
                Ok(g) => (Some(g), dp, None),
                Err(e) => {
                    log::warn!("level {n}: {e}");
                    (None, dp, Some(e.to_string()))
                }
            })
        })
        .collect::<Result<_>>()?;

    let mut sup = Vec::new();
    let mut d_p = Vec::new();
    let mut failures = Vec::new();
    for (g, dp, f) in per_level {
        sup.push(g);
        d_p.push(dp);
        failures.push(f);
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = s
        .levels
        .iter()
        .zip(&sup)
        .filter_map(|(&n, g)| {
            g.filter(|g| *g > 0.0)
                .map(|g| ((s.t_end * 2f64.powi(n as i32)).ln(), g.ln()))
        })
        .unzip();
    let slope = if lx.len() >= 2 { ols_slope(&lx, &ly) } else { f64::NAN };
    Ok(ConvergenceReport {
        levels: s.levels.clone(),
        n_ref: s.n_ref,
        sup_gap: sup,
        d_p,
        p: s.p,
        slope,
        failures,
    })
}
