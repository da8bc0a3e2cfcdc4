//! Interval flow `F_t(y0, c; θ)` of `ẏ = a(y; θ) + b(y; θ)·c` and its
//! sensitivity `Z_t = D_c F_t`, integrated jointly with fixed-step RK4.
//!
//! `Z` solves the variational equation
//! `d/dt Z^α = ∇(a + b·c)(F_t)·Z^α + b_α(F_t)` with `Z_0 = 0`, where `Z^α`
//! and `b_α` are the `α`-th columns. Here `c` is the slope of the driver on
//! the interval; the sensitivity with respect to the raw increment
//! `Δx = c·δ` is `Z / δ` (see [`FlowResult::increment_sensitivity`]).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::ParametricVectorField;
use crate::grid::{IncrementSet, ObservationSet, PiecewiseLinearPath};

pub const DEFAULT_STEPS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowOptions {
    /// RK4 substeps over the integration horizon.
    pub steps: usize,
    /// Integrate `Z` alongside the state.
    pub sensitivity: bool,
    /// Keep the state after every substep.
    pub keep_states: bool,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            steps: DEFAULT_STEPS,
            sensitivity: true,
            keep_states: false,
        }
    }
}

impl FlowOptions {
    pub fn with_steps(steps: usize) -> Self {
        Self {
            steps,
            ..Self::default()
        }
    }

    pub fn state_only(steps: usize) -> Self {
        Self {
            steps,
            sensitivity: false,
            keep_states: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowResult {
    pub terminal_state: DVector<f64>,
    /// `D_c F_t`, `d×m`; zero when sensitivities were not requested.
    pub sensitivity: DMatrix<f64>,
    pub dense_states: Option<Vec<DVector<f64>>>,
}

impl FlowResult {
    /// Sensitivity with respect to the raw increment over an interval of width `delta`.
    pub fn increment_sensitivity(&self, delta: f64) -> DMatrix<f64> {
        &self.sensitivity / delta
    }
}

struct Derivative {
    state: DVector<f64>,
    sens: Option<DMatrix<f64>>,
}

fn vector_field(
    field: &dyn ParametricVectorField,
    y: &DVector<f64>,
    z: Option<&DMatrix<f64>>,
    c: &DVector<f64>,
    theta: &[f64],
) -> Derivative {
    let b = field.diffusion(y, theta);
    let state = field.drift(y, theta) + &b * c;
    let sens = z.map(|z| {
        let mut jac = field.drift_jacobian(y, theta);
        for (j, db) in field.diffusion_jacobian(y, theta).iter().enumerate() {
            let col = db * c;
            let mut target = jac.column_mut(j);
            target += col;
        }
        jac * z + b
    });
    Derivative { state, sens }
}

/// Solves `ẏ = a(y;θ) + b(y;θ)·c` from `y0` over `[0, t]`.
pub fn flow(
    field: &dyn ParametricVectorField,
    y0: &DVector<f64>,
    c: &DVector<f64>,
    theta: &[f64],
    t: f64,
    opts: FlowOptions,
) -> Result<FlowResult> {
    let (d, m) = (field.state_dim(), field.driver_dim());
    if y0.len() != d || c.len() != m {
        return Err(Error::Dimension(format!(
            "flow expects y0 in R^{d} and c in R^{m}, got {} and {}",
            y0.len(),
            c.len()
        )));
    }
    if opts.steps == 0 {
        return Err(Error::InvalidParameter("flow needs at least one substep".into()));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("flow horizon must be >= 0, got {t}")));
    }
    let h = t / opts.steps as f64;
    let mut y = y0.clone();
    let mut z = opts.sensitivity.then(|| DMatrix::zeros(d, m));
    let mut dense = opts.keep_states.then(|| vec![y.clone()]);

    for step in 0..opts.steps {
        let k1 = vector_field(field, &y, z.as_ref(), c, theta);
        let y2 = &y + &k1.state * (h / 2.0);
        let z2 = z.as_ref().map(|z| z + k1.sens.as_ref().unwrap() * (h / 2.0));
        let k2 = vector_field(field, &y2, z2.as_ref(), c, theta);
        let y3 = &y + &k2.state * (h / 2.0);
        let z3 = z.as_ref().map(|z| z + k2.sens.as_ref().unwrap() * (h / 2.0));
        let k3 = vector_field(field, &y3, z3.as_ref(), c, theta);
        let y4 = &y + &k3.state * h;
        let z4 = z.as_ref().map(|z| z + k3.sens.as_ref().unwrap() * h);
        let k4 = vector_field(field, &y4, z4.as_ref(), c, theta);

        y += (k1.state + k2.state * 2.0 + k3.state * 2.0 + k4.state) * (h / 6.0);
        if let Some(z) = z.as_mut() {
            let incr = k1.sens.unwrap() + k2.sens.unwrap() * 2.0 + k3.sens.unwrap() * 2.0
                + k4.sens.unwrap();
            *z += incr * (h / 6.0);
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState {
                    substep: step + 1,
                    steps: opts.steps,
                });
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState {
                substep: step + 1,
                steps: opts.steps,
            });
        }
        if let Some(states) = dense.as_mut() {
            states.push(y.clone());
        }
    }

    Ok(FlowResult {
        terminal_state: y,
        sensitivity: z.unwrap_or_else(|| DMatrix::zeros(d, m)),
        dense_states: dense,
    })
}

/// Response of the field to a piecewise-linear driver, at the driver's grid times.
pub fn respond(
    field: &dyn ParametricVectorField,
    y0: &DVector<f64>,
    driver: &PiecewiseLinearPath,
    theta: &[f64],
    steps_per_interval: usize,
) -> Result<ObservationSet> {
    respond_increments(field, y0, &driver.increments(), theta, steps_per_interval)
}

/// As [`respond`], from the driver's raw increments.
pub fn respond_increments(
    field: &dyn ParametricVectorField,
    y0: &DVector<f64>,
    increments: &IncrementSet,
    theta: &[f64],
    steps_per_interval: usize,
) -> Result<ObservationSet> {
    if increments.dim() != field.driver_dim() {
        return Err(Error::Dimension(format!(
            "driver has dimension {}, field expects {}",
            increments.dim(),
            field.driver_dim()
        )));
    }
    let partition = increments.partition().clone();
    let opts = FlowOptions::state_only(steps_per_interval);
    let mut values = Vec::with_capacity(partition.intervals() + 1);
    values.push(y0.clone());
    for (i, slope) in increments.slopes().iter().enumerate() {
        let current = values.last().unwrap();
        let out = flow(field, current, slope, theta, partition.spacing(i), opts)
            .map_err(|e| e.at_interval(i))?;
        values.push(out.terminal_state);
    }
    PiecewiseLinearPath::new(partition, values)
}
