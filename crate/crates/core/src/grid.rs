//! Partitions of `[0, T]`, piecewise-linear paths on them, raw increments,
//! dyadic refinement and the exact p-variation distance between
//! piecewise-linear paths.
//!
//! Increments are stored raw (`x_{t_{i+1}} - x_{t_i}`); the slope over an
//! interval is obtained by dividing by its spacing. Grid times are compared
//! exactly: grids are constructed, never measured.

use std::io::{Read, Write};

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Ordered grid `0 = t_0 < t_1 < ... < t_N = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    times: Vec<f64>,
    level: Option<u32>,
    mesh: f64,
}

impl Partition {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidPartition(format!(
                "need at least two grid times, got {}",
                times.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidPartition(format!(
                "first grid time must be 0, got {}",
                times[0]
            )));
        }
        let mut mesh = 0.0f64;
        for (i, w) in times.windows(2).enumerate() {
            if !w[1].is_finite() || w[1] <= w[0] {
                return Err(Error::InvalidPartition(format!(
                    "grid times must be finite and strictly increasing (index {})",
                    i + 1
                )));
            }
            mesh = mesh.max(w[1] - w[0]);
        }
        Ok(Self {
            times,
            level: None,
            mesh,
        })
    }

    /// Dyadic grid `{k 2^-n : k = 0..N}` on `[0, T]` with `N = 2^n T`.
    pub fn dyadic(level: u32, t_end: f64) -> Result<Self> {
        dyadic_grid(level, t_end)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn level(&self) -> Option<u32> {
        self.level
    }

    /// Largest spacing.
    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    /// Number of intervals `N`.
    pub fn intervals(&self) -> usize {
        self.times.len() - 1
    }

    pub fn t_end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn spacing(&self, i: usize) -> f64 {
        self.times[i + 1] - self.times[i]
    }

    /// True when all spacings agree to relative `1e-9`.
    pub fn is_homogeneous(&self) -> bool {
        let nominal = self.t_end() / self.intervals() as f64;
        self.times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - nominal).abs() <= 1e-9 * nominal)
    }

    /// Position of `t` in the grid, if it is a grid time.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times.binary_search_by(|x| x.total_cmp(&t)).ok()
    }

    pub fn is_subset_of(&self, other: &Partition) -> bool {
        self.t_end() == other.t_end() && self.times.iter().all(|&t| other.index_of(t).is_some())
    }

    /// Coarsest common refinement of two partitions of the same interval.
    pub fn union(&self, other: &Partition) -> Result<Partition> {
        if self.t_end() != other.t_end() {
            return Err(Error::IntervalMismatch {
                left: self.t_end(),
                right: other.t_end(),
            });
        }
        if self == other {
            return Ok(self.clone());
        }
        let mut times: Vec<f64> = self.times.iter().chain(&other.times).copied().collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let mut merged = Partition::new(times)?;
        merged.level = match (self.level, other.level) {
            (Some(a), Some(b)) => Some(a.max(b)),
            _ => None,
        };
        Ok(merged)
    }

    /// Interval index `i` with `t_i <= t <= t_{i+1}`; clamps to the grid.
    fn locate(&self, t: f64) -> usize {
        match self.times.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => i.min(self.intervals() - 1),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.intervals() - 1),
        }
    }
}

/// Dyadic partition of `[0, T]` at level `n`: `N = 2^n T` intervals of width `2^-n`.
pub fn dyadic_grid(level: u32, t_end: f64) -> Result<Partition> {
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::InvalidPartition(format!(
            "horizon T must be positive and finite, got {t_end}"
        )));
    }
    let scale = 2f64.powi(level as i32);
    let count = t_end * scale;
    if count.fract() != 0.0 || count < 1.0 || count > u32::MAX as f64 {
        return Err(Error::NonIntegralDyadic {
            t_end,
            level,
            count,
        });
    }
    let n = count as usize;
    let step = 1.0 / scale;
    let times = (0..=n).map(|k| k as f64 * step).collect();
    Ok(Partition {
        times,
        level: Some(level),
        mesh: step,
    })
}

/// Values of an `R^m` path at the grid times; the path is their linear interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearPath {
    partition: Partition,
    values: Vec<DVector<f64>>,
}

/// Observations `y_D` on a grid; the first row is the initial condition.
pub type ObservationSet = PiecewiseLinearPath;

impl PiecewiseLinearPath {
    pub fn new(partition: Partition, values: Vec<DVector<f64>>) -> Result<Self> {
        if values.len() != partition.times.len() {
            return Err(Error::Dimension(format!(
                "{} values for {} grid times",
                values.len(),
                partition.times.len()
            )));
        }
        let dim = values[0].len();
        if dim == 0 || values.iter().any(|v| v.len() != dim) {
            return Err(Error::Dimension(
                "path values must share a nonzero dimension".into(),
            ));
        }
        Ok(Self { partition, values })
    }

    pub fn from_rows(partition: Partition, rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(partition, rows.into_iter().map(DVector::from_vec).collect())
    }

    /// Scalar path from plain values.
    pub fn scalar(partition: Partition, values: &[f64]) -> Result<Self> {
        Self::new(
            partition,
            values.iter().map(|&v| DVector::from_element(1, v)).collect(),
        )
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    /// Values of coordinate `j` at the grid times.
    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[j]).collect()
    }

    /// Linear interpolant at time `t` (clamped to `[0, T]`).
    pub fn evaluate(&self, t: f64) -> DVector<f64> {
        let i = self.partition.locate(t);
        let (t0, t1) = (self.partition.times[i], self.partition.times[i + 1]);
        if t == t0 {
            return self.values[i].clone();
        }
        if t == t1 {
            return self.values[i + 1].clone();
        }
        let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        &self.values[i] * (1.0 - w) + &self.values[i + 1] * w
    }

    pub fn restrict(&self, coarser: &Partition) -> Result<Self> {
        restrict(self, coarser)
    }

    /// Same path on a finer grid (the interpolant is unchanged).
    pub fn refine(&self, finer: &Partition) -> Result<Self> {
        if !self.partition.is_subset_of(finer) {
            return Err(Error::InvalidPartition(
                "refinement grid must contain every point of the path's grid".into(),
            ));
        }
        let values = finer.times.iter().map(|&t| self.evaluate(t)).collect();
        Self::new(finer.clone(), values)
    }

    pub fn increments(&self) -> IncrementSet {
        increments(self)
    }

    pub fn map_values(&self, f: impl Fn(&DVector<f64>) -> DVector<f64>) -> Self {
        Self {
            partition: self.partition.clone(),
            values: self.values.iter().map(f).collect(),
        }
    }

    /// Writes `t,<prefix>1,...,<prefix>m` CSV.
    pub fn write_csv<W: Write>(&self, out: W, prefix: &str) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim()).map(|j| format!("{prefix}{j}")));
        wtr.write_record(&header).map_err(csv_io)?;
        for (t, v) in self.partition.times.iter().zip(&self.values) {
            let mut row = vec![t.to_string()];
            row.extend(v.iter().map(|x| x.to_string()));
            wtr.write_record(&row).map_err(csv_io)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`write_csv`](Self::write_csv). Dyadic grids are
    /// recognised and tagged with their level.
    pub fn read_csv<R: Read>(input: R, prefix: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header = rdr
            .headers()
            .map_err(|e| Error::Parse {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        if header.len() < 2 || &header[0] != "t" {
            return Err(Error::Parse {
                line: 1,
                message: format!("header must be `t,{prefix}1,...`, got `{}`", header.iter().collect::<Vec<_>>().join(",")),
            });
        }
        for (j, name) in header.iter().enumerate().skip(1) {
            if name != format!("{prefix}{j}") {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("column {} must be `{prefix}{j}`, got `{name}`", j + 1),
                });
            }
        }
        let dim = header.len() - 1;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| Error::Parse {
                line: e.position().map(|p| p.line()).unwrap_or(0),
                message: e.to_string(),
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() != dim + 1 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {} columns, found {}", dim + 1, record.len()),
                });
            }
            let mut parsed = Vec::with_capacity(dim + 1);
            for field in record.iter() {
                parsed.push(field.parse::<f64>().map_err(|e| Error::Parse {
                    line,
                    message: format!("`{field}`: {e}"),
                })?);
            }
            times.push(parsed[0]);
            values.push(DVector::from_vec(parsed[1..].to_vec()));
        }
        if times.is_empty() {
            return Err(Error::Parse {
                line: 2,
                message: "no data rows".into(),
            });
        }
        let partition = match detect_dyadic(&times) {
            Some(p) => p,
            None => Partition::new(times)?,
        };
        Self::new(partition, values)
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn detect_dyadic(times: &[f64]) -> Option<Partition> {
    if times.len() < 2 {
        return None;
    }
    let step = times[1];
    if step <= 0.0 || step > 1.0 {
        return None;
    }
    let level = (-step.log2()).round();
    if level < 0.0 || 2f64.powi(-(level as i32)) != step {
        return None;
    }
    let candidate = dyadic_grid(level as u32, times[times.len() - 1]).ok()?;
    (candidate.times == times).then_some(candidate)
}

/// Samples `path` at the points of a coarser grid, giving `pi_coarse(path)`.
pub fn restrict(path: &PiecewiseLinearPath, coarser: &Partition) -> Result<PiecewiseLinearPath> {
    if coarser.t_end() != path.partition.t_end() {
        return Err(Error::IntervalMismatch {
            left: path.partition.t_end(),
            right: coarser.t_end(),
        });
    }
    let mut values = Vec::with_capacity(coarser.times.len());
    for &t in &coarser.times {
        let idx = path
            .partition
            .index_of(t)
            .ok_or(Error::NotNested { time: t })?;
        values.push(path.values[idx].clone());
    }
    PiecewiseLinearPath::new(coarser.clone(), values)
}

/// Raw increments `x_{t_{i+1}} - x_{t_i}` of a path.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementSet {
    partition: Partition,
    raw: Vec<DVector<f64>>,
}

impl IncrementSet {
    pub fn new(partition: Partition, raw: Vec<DVector<f64>>) -> Result<Self> {
        if raw.len() != partition.intervals() {
            return Err(Error::Dimension(format!(
                "{} increments for {} intervals",
                raw.len(),
                partition.intervals()
            )));
        }
        let dim = raw[0].len();
        if dim == 0 || raw.iter().any(|v| v.len() != dim) {
            return Err(Error::Dimension(
                "increments must share a nonzero dimension".into(),
            ));
        }
        Ok(Self { partition, raw })
    }

    /// Builds raw increments from per-interval slopes.
    pub fn from_slopes(partition: Partition, slopes: Vec<DVector<f64>>) -> Result<Self> {
        let raw = slopes
            .into_iter()
            .enumerate()
            .map(|(i, c)| c * partition.spacing(i))
            .collect();
        Self::new(partition, raw)
    }

    /// Builds from one series per coordinate.
    pub fn from_coordinates(partition: Partition, coords: &[Vec<f64>]) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Dimension("no coordinates".into()));
        }
        let n = coords[0].len();
        if coords.iter().any(|c| c.len() != n) {
            return Err(Error::Dimension("coordinate series differ in length".into()));
        }
        let raw = (0..n)
            .map(|i| DVector::from_iterator(coords.len(), coords.iter().map(|c| c[i])))
            .collect();
        Self::new(partition, raw)
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn raw(&self) -> &[DVector<f64>] {
        &self.raw
    }

    pub fn dim(&self) -> usize {
        self.raw[0].len()
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Normalised increments `Δx_i / (t_{i+1} - t_i)`.
    pub fn slopes(&self) -> Vec<DVector<f64>> {
        self.raw
            .iter()
            .enumerate()
            .map(|(i, dx)| dx / self.partition.spacing(i))
            .collect()
    }

    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        self.raw.iter().map(|v| v[j]).collect()
    }

    /// Path with initial value `x0` whose increments are these.
    pub fn cumsum(&self, x0: &DVector<f64>) -> Result<PiecewiseLinearPath> {
        if x0.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "initial value has dimension {}, increments {}",
                x0.len(),
                self.dim()
            )));
        }
        let mut values = Vec::with_capacity(self.raw.len() + 1);
        values.push(x0.clone());
        for dx in &self.raw {
            let next = values.last().unwrap() + dx;
            values.push(next);
        }
        PiecewiseLinearPath::new(self.partition.clone(), values)
    }
}

pub fn increments(path: &PiecewiseLinearPath) -> IncrementSet {
    let raw = path.values.windows(2).map(|w| &w[1] - &w[0]).collect();
    IncrementSet {
        partition: path.partition.clone(),
        raw,
    }
}

/// Level-1 p-variation of the piecewise-linear path through `points`.
///
/// For a piecewise-linear path the supremum over partitions is attained on a
/// subset of the grid points; `best[j]` is the largest `Σ |x_{τ_{k+1}} - x_{τ_k}|^p`
/// over increasing chains ending at point `j`. `O(N^2)`.
pub fn p_variation(points: &[DVector<f64>], p: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "p-variation needs finite p >= 1, got {p}"
        )));
    }
    let n = points.len();
    let half_p = p / 2.0;
    let mut best = vec![0.0f64; n];
    for j in 1..n {
        let mut acc = 0.0f64;
        for i in 0..j {
            let sq: f64 = points[j]
                .iter()
                .zip(points[i].iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let cand = best[i] + sq.powf(half_p);
            if cand > acc {
                acc = cand;
            }
        }
        best[j] = acc;
    }
    let total = best.iter().copied().fold(0.0, f64::max);
    Ok(total.powf(1.0 / p))
}

/// p-variation norm of `a - b`, computed on the common refinement of their grids.
pub fn p_variation_distance(
    a: &PiecewiseLinearPath,
    b: &PiecewiseLinearPath,
    p: f64,
) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!(
            "paths have dimensions {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "p-variation needs p >= 1, got {p}"
        )));
    }
    let diff: Vec<DVector<f64>> = if a.partition == b.partition {
        a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect()
    } else {
        let common = a.partition.union(&b.partition)?;
        common
            .times
            .iter()
            .map(|&t| a.evaluate(t) - b.evaluate(t))
            .collect()
    };
    p_variation(&diff, p)
}
