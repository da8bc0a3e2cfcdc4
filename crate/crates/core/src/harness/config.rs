//! Experiment configuration: a single JSON file whose fields can all be
//! overridden from the command line.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldRegistry, ParametricVectorField};
use crate::grid::{dyadic_grid, Partition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub id: String,
    pub theta: Vec<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            id: "fou".into(),
            theta: vec![1.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub h: f64,
    pub seed: Option<u64>,
    /// Debug switch: all driver increments zero.
    pub zero: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            h: 0.5,
            seed: None,
            zero: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub level: u32,
    pub t_end: f64,
    /// Explicit grid times; overrides `level`.
    pub times: Option<Vec<f64>>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            level: 6,
            t_end: 1.0,
            times: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub noise: NoiseConfig,
    pub grid: GridConfig,
    /// Initial state; zeros when absent.
    pub y0: Option<Vec<f64>>,
    /// RK4 substeps per interval.
    pub steps: usize,
    /// Observation CSV consumed by invert, loglik, mle and posterior.
    pub input: Option<PathBuf>,
    /// Driver CSV used as ground truth when reporting inversion error.
    pub driver: Option<PathBuf>,
    /// `lo:hi:n` per coordinate, comma separated.
    pub theta_grid: Option<String>,
    /// `A..B`, inclusive.
    pub levels: Option<String>,
    pub n_ref: Option<u32>,
    /// Driver coordinates solved for when `m > d`.
    pub split: Option<Vec<usize>>,
    pub mc_samples: usize,
    /// p used for the p-variation distance in the convergence study.
    pub p: Option<f64>,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            noise: NoiseConfig::default(),
            grid: GridConfig::default(),
            y0: None,
            steps: crate::flow::DEFAULT_STEPS,
            input: None,
            driver: None,
            theta_grid: None,
            levels: None,
            n_ref: None,
            split: None,
            mc_samples: 1000,
            p: None,
            out: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn field(&self, registry: &FieldRegistry) -> Result<Arc<dyn ParametricVectorField>> {
        registry.get(&self.model.id)
    }

    pub fn seed(&self) -> Result<u64> {
        self.noise
            .seed
            .ok_or_else(|| Error::Config("a seed is required (noise.seed or --seed)".into()))
    }

    pub fn partition(&self) -> Result<Partition> {
        match &self.grid.times {
            Some(t) => Partition::new(t.clone()),
            None => dyadic_grid(self.grid.level, self.grid.t_end),
        }
    }

    pub fn initial_state(&self, d: usize) -> Result<nalgebra::DVector<f64>> {
        match &self.y0 {
            Some(v) if v.len() == d => Ok(nalgebra::DVector::from_column_slice(v)),
            Some(v) => Err(Error::Config(format!(
                "y0 has {} entries, model state dimension is {d}",
                v.len()
            ))),
            None => Ok(nalgebra::DVector::zeros(d)),
        }
    }

    /// Checks the model id, θ, the Hurst index and the grid.
    pub fn validate(&self, registry: &FieldRegistry) -> Result<Arc<dyn ParametricVectorField>> {
        let field = self.field(registry)?;
        field.validate(&self.model.theta)?;
        if !(self.noise.h > 0.0 && self.noise.h < 1.0) {
            return Err(Error::Config(format!("h must lie in (0, 1), got {}", self.noise.h)));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be positive".into()));
        }
        self.partition()?;
        self.initial_state(field.state_dim())?;
        Ok(field)
    }

    pub fn theta_grid(&self, dim: usize) -> Result<Vec<Vec<f64>>> {
        match &self.theta_grid {
            Some(spec) => parse_theta_grid(spec, dim),
            None => Ok(self.model.theta.iter().map(|&v| vec![v]).collect()),
        }
    }

    pub fn level_range(&self) -> Result<Vec<u32>> {
        let spec = self
            .levels
            .as_deref()
            .ok_or_else(|| Error::Config("levels are required (A..B)".into()))?;
        parse_levels(spec)
    }
}

/// Parses `lo:hi:n` (or a single value) per coordinate, comma separated.
pub fn parse_theta_grid(spec: &str, dim: usize) -> Result<Vec<Vec<f64>>> {
    let bad = |msg: String| Error::Config(format!("theta grid `{spec}`: {msg}"));
    let axes: Vec<Vec<f64>> = spec
        .split(',')
        .map(|part| {
            let fields: Vec<&str> = part.trim().split(':').collect();
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
            match fields.as_slice() {
                [v] => Ok(vec![num(v)?]),
                [lo, hi, n] => {
                    let (lo, hi) = (num(lo)?, num(hi)?);
                    let n: usize = n.trim().parse().map_err(|e| bad(format!("`{n}`: {e}")))?;
                    if n == 0 || (n > 1 && !(hi > lo)) || (n == 1 && lo != hi) {
                        return Err(bad(format!("invalid axis {lo}:{hi}:{n}")));
                    }
                    Ok((0..n)
                        .map(|i| {
                            if n == 1 {
                                lo
                            } else {
                                lo + (hi - lo) * i as f64 / (n - 1) as f64
                            }
                        })
                        .collect())
                }
                _ => Err(bad(format!("axis `{part}` is neither `v` nor `lo:hi:n`"))),
            }
        })
        .collect::<Result<_>>()?;
    if axes.len() != dim {
        return Err(bad(format!("{} axes for {dim} parameters", axes.len())));
    }
    Ok(axes)
}

/// Parses `A..B` (inclusive).
pub fn parse_levels(spec: &str) -> Result<Vec<u32>> {
    let bad = || Error::Config(format!("levels must look like `A..B`, got `{spec}`"));
    let (a, b) = spec.split_once("..").ok_or_else(bad)?;
    let a: u32 = a.trim().parse().map_err(|_| bad())?;
    let b: u32 = b.trim().parse().map_err(|_| bad())?;
    if a > b {
        return Err(bad());
    }
    Ok((a..=b).collect())
}
