//! Interval-by-interval inversion of the Itô map.
//!
//! For each interval `[t_i, t_{i+1}]` the driver slope `c` solves
//! `F_δ(y_{t_i}, c; θ) = y_{t_{i+1}}`. Newton's method uses `Z = D_c F_δ` from
//! the flow engine as its Jacobian. With `m > d` only `d` coordinates of `c`
//! are solved for; the remaining ones are frozen at supplied values.
//!
//! Determinants are reported for the raw-increment map (`Z / δ`), so the
//! change of variables from increments to observations needs no further
//! `δ` bookkeeping.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::ParametricVectorField;
use crate::flow::{flow, FlowOptions, FlowResult, DEFAULT_STEPS};
use crate::grid::{IncrementSet, ObservationSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Residual tolerance, relative to `1 + |y1|`.
    pub tol: f64,
    pub max_iter: usize,
    /// Backtracking halvings per Newton step.
    pub max_halvings: usize,
    /// RK4 substeps per interval.
    pub steps: usize,
    /// Threshold on `|det| / Π |column|` below which the Jacobian counts as singular.
    pub singular_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
            max_halvings: 20,
            steps: DEFAULT_STEPS,
            singular_tol: 1e-14,
        }
    }
}

impl NewtonOptions {
    pub fn with_steps(steps: usize) -> Self {
        Self {
            steps,
            ..Self::default()
        }
    }
}

/// Which driver coordinates are solved for when `m > d`; the rest are frozen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoordinateSplit {
    solved: Vec<usize>,
    frozen: Vec<usize>,
}

impl CoordinateSplit {
    pub fn new(solved: Vec<usize>, driver_dim: usize) -> Result<Self> {
        let mut seen = vec![false; driver_dim];
        for &j in &solved {
            if j >= driver_dim || seen[j] {
                return Err(Error::InvalidParameter(format!(
                    "solved coordinates {solved:?} must be distinct indices below {driver_dim}"
                )));
            }
            seen[j] = true;
        }
        let frozen = (0..driver_dim).filter(|&j| !seen[j]).collect();
        Ok(Self { solved, frozen })
    }

    /// First `d` coordinates solved, the remaining `m - d` frozen.
    pub fn leading(state_dim: usize, driver_dim: usize) -> Result<Self> {
        Self::new((0..state_dim).collect(), driver_dim)
    }

    pub fn solved(&self) -> &[usize] {
        &self.solved
    }

    pub fn frozen(&self) -> &[usize] {
        &self.frozen
    }
}

/// Solution of the interval system `F_δ(y0, c; θ) = y1`.
#[derive(Debug, Clone)]
pub struct IncrementSolution {
    /// Driver slope `c*` (all `m` coordinates).
    pub slope: DVector<f64>,
    /// Raw increment `c*·δ`.
    pub increment: DVector<f64>,
    /// `D_c F_δ` at `c*`, `d×m`, slope-parametrised.
    pub sensitivity: DMatrix<f64>,
    /// Flow evaluations at accepted iterates, including the initial guess.
    pub iterations: usize,
    pub residual: f64,
    /// `|det|` of the raw-increment Jacobian restricted to the solved coordinates.
    pub z_det: f64,
}

fn select_columns(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}

/// `|det| / Π |column|`: zero for singular matrices, one for orthogonal columns.
fn singularity_ratio(m: &DMatrix<f64>) -> (f64, f64) {
    let det = m.determinant();
    let scale: f64 = m.column_iter().map(|c| c.norm()).product();
    let ratio = if scale > 0.0 { det.abs() / scale } else { 0.0 };
    (det, ratio)
}

#[allow(clippy::too_many_arguments)]
fn newton(
    field: &dyn ParametricVectorField,
    y0: &DVector<f64>,
    y1: &DVector<f64>,
    delta: f64,
    theta: &[f64],
    split: &CoordinateSplit,
    frozen_slopes: &DVector<f64>,
    opts: &NewtonOptions,
) -> Result<IncrementSolution> {
    let d = field.state_dim();
    let m = field.driver_dim();
    if y0.len() != d || y1.len() != d {
        return Err(Error::Dimension(format!(
            "observations must lie in R^{d}, got {} and {}",
            y0.len(),
            y1.len()
        )));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("spacing must be positive, got {delta}")));
    }
    let solved = split.solved();
    let frozen = split.frozen();
    let singular_error = |ratio: f64| {
        if frozen.is_empty() {
            Error::SingularJacobian { ratio }
        } else {
            Error::SingularSubJacobian { ratio }
        }
    };

    // Initial guess: exact for constant coefficients.
    let mut c = DVector::zeros(m);
    for (k, &j) in frozen.iter().enumerate() {
        c[j] = frozen_slopes[k];
    }
    let b0 = field.diffusion(y0, theta);
    let target = (y1 - y0) / delta - field.drift(y0, theta) - &b0 * &c;
    let b_solved = select_columns(&b0, solved);
    let guess = b_solved
        .clone()
        .pseudo_inverse(1e-300)
        .map(|pinv| pinv * &target)
        .unwrap_or_else(|_| DVector::zeros(solved.len()));
    for (k, &j) in solved.iter().enumerate() {
        c[j] = guess[k];
    }

    let fopts = FlowOptions::with_steps(opts.steps);
    let tol = opts.tol * (1.0 + y1.norm());
    let eval = |c: &DVector<f64>| -> Result<(FlowResult, DVector<f64>, f64)> {
        let out = flow(field, y0, c, theta, delta, fopts)?;
        let g = &out.terminal_state - y1;
        let r = g.norm();
        Ok((out, g, r))
    };

    let (mut out, mut g, mut r) = eval(&c)?;
    let mut iterations = 1;
    loop {
        if r <= tol {
            let jac = select_columns(&out.sensitivity, solved) / delta;
            let (det, ratio) = singularity_ratio(&jac);
            if ratio < opts.singular_tol || !det.is_finite() {
                return Err(singular_error(ratio));
            }
            return Ok(IncrementSolution {
                increment: &c * delta,
                slope: c,
                sensitivity: out.sensitivity,
                iterations,
                residual: r,
                z_det: det.abs(),
            });
        }
        if iterations > opts.max_iter {
            return Err(Error::NonConvergence {
                iterations: iterations - 1,
                residual: r,
            });
        }
        let jac = select_columns(&out.sensitivity, solved);
        let (_, ratio) = singularity_ratio(&jac);
        if ratio < opts.singular_tol {
            return Err(singular_error(ratio));
        }
        let step = jac
            .lu()
            .solve(&(-&g))
            .ok_or_else(|| singular_error(0.0))?;

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let mut cand = c.clone();
            for (k, &j) in solved.iter().enumerate() {
                cand[j] += scale * step[k];
            }
            match eval(&cand) {
                Ok((o, gn, rn)) if rn < r => {
                    accepted = Some((cand, o, gn, rn));
                    break;
                }
                _ => scale *= 0.5,
            }
        }
        match accepted {
            Some((cand, o, gn, rn)) => {
                c = cand;
                out = o;
                g = gn;
                r = rn;
                iterations += 1;
            }
            None => {
                return Err(Error::NonConvergence {
                    iterations,
                    residual: r,
                })
            }
        }
    }
}

/// Solves `F_δ(y0, c; θ) = y1` for the slope `c` when `m = d`.
pub fn solve_increment(
    field: &dyn ParametricVectorField,
    y0: &DVector<f64>,
    y1: &DVector<f64>,
    delta: f64,
    theta: &[f64],
    opts: &NewtonOptions,
) -> Result<IncrementSolution> {
    let (d, m) = (field.state_dim(), field.driver_dim());
    if d > m {
        return Err(Error::Dimension(format!(
            "state dimension {d} exceeds driver dimension {m}; the inverse does not exist in general"
        )));
    }
    if d != m {
        return Err(Error::Dimension(format!(
            "solve_increment needs m = d (got d={d}, m={m}); use solve_increment_constrained"
        )));
    }
    let split = CoordinateSplit::leading(d, m)?;
    newton(field, y0, y1, delta, theta, &split, &DVector::zeros(0), opts)
}

/// Solves for the coordinates in `split.solved()` with the others frozen at
/// the given slopes (ordered as `split.frozen()`).
#[allow(clippy::too_many_arguments)]
pub fn solve_increment_constrained(
    field: &dyn ParametricVectorField,
    y0: &DVector<f64>,
    y1: &DVector<f64>,
    delta: f64,
    theta: &[f64],
    split: &CoordinateSplit,
    frozen_slopes: &DVector<f64>,
    opts: &NewtonOptions,
) -> Result<IncrementSolution> {
    let (d, m) = (field.state_dim(), field.driver_dim());
    if split.solved().len() != d || split.frozen().len() + d != m {
        return Err(Error::Dimension(format!(
            "split must solve exactly d={d} of m={m} coordinates"
        )));
    }
    if frozen_slopes.len() != m - d {
        return Err(Error::Dimension(format!(
            "expected {} frozen slopes, got {}",
            m - d,
            frozen_slopes.len()
        )));
    }
    newton(field, y0, y1, delta, theta, split, frozen_slopes, opts)
}

#[derive(Debug, Clone)]
pub struct InversionResult {
    /// Raw driver increments per interval.
    pub increments: IncrementSet,
    /// `|det|` of the raw-increment Jacobian per interval.
    pub z_dets: Vec<f64>,
    pub newton_iters: Vec<usize>,
    pub residuals: Vec<f64>,
}

fn collect_intervals(
    obs: &ObservationSet,
    results: Vec<Result<IncrementSolution>>,
) -> Result<InversionResult> {
    let mut raw = Vec::with_capacity(results.len());
    let mut z_dets = Vec::with_capacity(results.len());
    let mut newton_iters = Vec::with_capacity(results.len());
    let mut residuals = Vec::with_capacity(results.len());
    for (i, res) in results.into_iter().enumerate() {
        let sol = res.map_err(|e| e.at_interval(i))?;
        raw.push(sol.increment);
        z_dets.push(sol.z_det);
        newton_iters.push(sol.iterations);
        residuals.push(sol.residual);
    }
    Ok(InversionResult {
        increments: IncrementSet::new(obs.partition().clone(), raw)?,
        z_dets,
        newton_iters,
        residuals,
    })
}

/// Inverts every interval of an observation set (`m = d`). Intervals are
/// solved in parallel; the reported error is the one at the lowest index.
pub fn invert_dataset(
    obs: &ObservationSet,
    theta: &[f64],
    field: &dyn ParametricVectorField,
    opts: &NewtonOptions,
) -> Result<InversionResult> {
    field.validate(theta)?;
    if obs.dim() != field.state_dim() {
        return Err(Error::Dimension(format!(
            "observations have dimension {}, field state dimension {}",
            obs.dim(),
            field.state_dim()
        )));
    }
    let partition = obs.partition();
    let values = obs.values();
    let results: Vec<_> = (0..partition.intervals())
        .into_par_iter()
        .map(|i| {
            solve_increment(field, &values[i], &values[i + 1], partition.spacing(i), theta, opts)
        })
        .collect();
    collect_intervals(obs, results)
}

/// Inverts every interval with the frozen coordinates' raw increments given.
pub fn invert_dataset_constrained(
    obs: &ObservationSet,
    theta: &[f64],
    field: &dyn ParametricVectorField,
    split: &CoordinateSplit,
    frozen_increments: &IncrementSet,
    opts: &NewtonOptions,
) -> Result<InversionResult> {
    field.validate(theta)?;
    if obs.dim() != field.state_dim() {
        return Err(Error::Dimension(format!(
            "observations have dimension {}, field state dimension {}",
            obs.dim(),
            field.state_dim()
        )));
    }
    if frozen_increments.len() != obs.partition().intervals()
        || frozen_increments.dim() != split.frozen().len()
    {
        return Err(Error::Dimension(
            "frozen increments must cover every interval and every frozen coordinate".into(),
        ));
    }
    let partition = obs.partition();
    let values = obs.values();
    let frozen_slopes = frozen_increments.slopes();
    let results: Vec<_> = (0..partition.intervals())
        .into_par_iter()
        .map(|i| {
            solve_increment_constrained(
                field,
                &values[i],
                &values[i + 1],
                partition.spacing(i),
                theta,
                split,
                &frozen_slopes[i],
                opts,
            )
        })
        .collect();
    collect_intervals(obs, results)
}

/// `log |D I⁻¹|` = `-Σ log |det Z_i|` (block-triangular Jacobian).
pub fn jacobian_log_det(result: &InversionResult) -> Result<f64> {
    let mut total = 0.0;
    for (index, &value) in result.z_dets.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::NonPositiveDeterminant { index, value });
        }
        total -= value.ln();
    }
    Ok(total)
}
