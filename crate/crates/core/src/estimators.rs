//! Scale-ordered estimation on a parameter grid: hierarchical maximum
//! likelihood and staged posterior updating.
//!
//! A coordinate has order `k` when `ℓ⁽ᵏ⁾` is the first component that
//! depends on it. Stage `k` maximises `ℓ⁽ᵏ⁾` over the order-`k` coordinates
//! with lower-order coordinates frozen at their estimates and the remaining
//! ones held at their grid midpoints.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::likelihood::ScaledLogLik;

/// Relative threshold on component variation for order detection.
pub const ORDER_THRESHOLD: f64 = 1e-8;
/// Total-variation threshold for posterior-based order detection.
pub const TV_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpace {
    names: Vec<String>,
    grid: Vec<Vec<f64>>,
    orders: Option<Vec<usize>>,
}

impl ParameterSpace {
    pub fn new(names: Vec<String>, grid: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != grid.len() || names.is_empty() {
            return Err(Error::Dimension(format!(
                "{} names for {} grid axes",
                names.len(),
                grid.len()
            )));
        }
        for (name, axis) in names.iter().zip(&grid) {
            if axis.is_empty() || axis.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::InvalidParameter(format!(
                    "grid for '{name}' must be nonempty and strictly increasing"
                )));
            }
        }
        Ok(Self {
            names,
            grid,
            orders: None,
        })
    }

    pub fn with_orders(mut self, orders: Vec<usize>) -> Result<Self> {
        if orders.len() != self.dim() {
            return Err(Error::Dimension("one order per coordinate".into()));
        }
        self.orders = Some(orders);
        Ok(self)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn grid(&self) -> &[Vec<f64>] {
        &self.grid
    }

    pub fn orders(&self) -> Option<&[usize]> {
        self.orders.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        let axis = &self.grid[i];
        0.5 * (axis[0] + axis[axis.len() - 1])
    }

    /// Number of points in the Cartesian grid.
    pub fn size(&self) -> usize {
        self.grid.iter().map(Vec::len).product()
    }

    /// Grid point with flat index `idx` (last coordinate varies fastest).
    pub fn point(&self, mut idx: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for i in (0..self.dim()).rev() {
            let len = self.grid[i].len();
            out[i] = self.grid[i][idx % len];
            idx /= len;
        }
        out
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.size()).map(|i| self.point(i)).collect()
    }

    fn spacing(&self, i: usize) -> f64 {
        let axis = &self.grid[i];
        if axis.len() < 2 {
            0.0
        } else {
            (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoordinateEstimate {
    pub coordinate: String,
    pub order: usize,
    pub estimate: f64,
    pub stage_argmax_on_boundary: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MleResult {
    pub theta: Vec<f64>,
    pub estimates: Vec<CoordinateEstimate>,
}

/// Cartesian product of the given axes' value indices.
fn index_product(lens: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &len in lens {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..len).map(move |j| {
                    let mut p = prefix.clone();
                    p.push(j);
                    p
                })
            })
            .collect();
    }
    out
}

/// Whether `ℓ⁽ᵏ⁾` varies along coordinate `i` over the grid of `free`
/// coordinates, with `base` supplying all other values.
fn sensitive(
    comp: &ScaledLogLik,
    k: usize,
    space: &ParameterSpace,
    base: &[f64],
    free: &[usize],
    i: usize,
) -> bool {
    let lens: Vec<usize> = free.iter().map(|&j| space.grid[j].len()).collect();
    let combos = index_product(&lens);
    let eval = |combo: &[usize]| {
        let mut theta = base.to_vec();
        for (&j, &ix) in free.iter().zip(combo) {
            theta[j] = space.grid[j][ix];
        }
        comp.component(k, &theta)
    };
    let values: Vec<f64> = combos.par_iter().map(|c| eval(c)).collect();
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if !(range > 0.0) {
        return false;
    }
    let pos = free.iter().position(|&j| j == i).expect("coordinate is free");
    let mut max_step = 0.0f64;
    for (c, v) in combos.iter().zip(&values) {
        if c[pos] + 1 < lens[pos] {
            let mut next = c.clone();
            next[pos] += 1;
            let w = eval(&next);
            max_step = max_step.max((w - v).abs());
        }
    }
    max_step > ORDER_THRESHOLD * range
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section maximisation of `f` on `[a, b]` to bracket width `tol`.
fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        }
    }
    0.5 * (a + b)
}

/// Newton steps on three-point parabolas around `x`, starting at half-width
/// `h`. A step is taken only where `f` is locally concave and it stays within
/// the current half-width and inside `bracket`.
fn parabolic_polish(f: impl Fn(f64) -> f64, mut x: f64, mut h: f64, bracket: (f64, f64)) -> f64 {
    if !(h > 0.0) {
        return x;
    }
    for _ in 0..3 {
        let (fm, f0, fp) = (f(x - h), f(x), f(x + h));
        let curv = fp - 2.0 * f0 + fm;
        if !(curv < 0.0) {
            break;
        }
        let step = -h * (fp - fm) / (2.0 * curv);
        let next = x + step;
        if !(step.abs() <= h) || next < bracket.0 || next > bracket.1 {
            break;
        }
        x = next;
        // narrower stencils cut the O(h²) bias of the vertex
        h *= 0.1;
    }
    x
}

/// Maximises `ℓ⁽ᵏ⁾` over `coords`: grid scan, then cyclic golden-section
/// refinement inside the neighbouring grid cells. Returns boundary flags.
fn maximise_stage(
    comp: &ScaledLogLik,
    k: usize,
    space: &ParameterSpace,
    theta: &mut [f64],
    coords: &[usize],
) -> Vec<bool> {
    let lens: Vec<usize> = coords.iter().map(|&j| space.grid[j].len()).collect();
    let combos = index_product(&lens);
    let base = theta.to_vec();
    let scored: Vec<f64> = combos
        .par_iter()
        .map(|c| {
            let mut t = base.clone();
            for (&j, &ix) in coords.iter().zip(c) {
                t[j] = space.grid[j][ix];
            }
            comp.component(k, &t)
        })
        .collect();
    let best = scored
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_nan())
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);
    let best_ix = &combos[best];
    let mut boundary = Vec::with_capacity(coords.len());
    let mut brackets = Vec::with_capacity(coords.len());
    for ((&j, &ix), &len) in coords.iter().zip(best_ix).zip(&lens) {
        theta[j] = space.grid[j][ix];
        boundary.push(len > 1 && (ix == 0 || ix + 1 == len));
        let axis = &space.grid[j];
        brackets.push((axis[ix.saturating_sub(1)], axis[(ix + 1).min(len - 1)]));
    }
    let sweeps = if coords.len() == 1 { 1 } else { 50 };
    for _ in 0..sweeps {
        let mut moved = 0.0f64;
        for (c, &j) in coords.iter().enumerate() {
            let (a, b) = brackets[c];
            if !(b > a) {
                continue;
            }
            let tol = 1e-6 * space.spacing(j);
            let snapshot = theta.to_vec();
            let eval = |x: f64| {
                let mut t = snapshot.clone();
                t[j] = x;
                comp.component(k, &t)
            };
            let x = parabolic_polish(&eval, golden_max(&eval, a, b, tol), 1e-3 * space.spacing(j), (a, b));
            if eval(x) >= eval(theta[j]) {
                moved = moved.max((x - theta[j]).abs() / space.spacing(j));
                theta[j] = x;
            }
        }
        if moved < 1e-6 {
            break;
        }
    }
    boundary
}

/// Assigns every coordinate an order, estimating each stage before probing
/// the next (lower orders frozen, unassigned coordinates free on the grid).
pub fn detect_orders(comp: &ScaledLogLik, space: &ParameterSpace) -> Result<Vec<usize>> {
    Ok(run_hierarchy(comp, space, None)?.1)
}

fn run_hierarchy(
    comp: &ScaledLogLik,
    space: &ParameterSpace,
    declared: Option<&[usize]>,
) -> Result<(MleResult, Vec<usize>)> {
    let dim = space.dim();
    let mut theta: Vec<f64> = (0..dim).map(|i| space.midpoint(i)).collect();
    let mut orders: Vec<Option<usize>> = match declared {
        Some(o) => {
            if o.len() != dim {
                return Err(Error::Dimension("one order per coordinate".into()));
            }
            if let Some(&bad) = o.iter().find(|&&k| k >= comp.order_count()) {
                return Err(Error::InvalidParameter(format!(
                    "order {bad} exceeds the {} available components",
                    comp.order_count()
                )));
            }
            o.iter().copied().map(Some).collect()
        }
        None => vec![None; dim],
    };
    let mut boundary = vec![false; dim];
    for k in 0..comp.order_count() {
        let stage: Vec<usize> = match declared {
            Some(_) => (0..dim).filter(|&i| orders[i] == Some(k)).collect(),
            None => {
                let free: Vec<usize> = (0..dim).filter(|&i| orders[i].is_none()).collect();
                let hits: Vec<usize> = free
                    .iter()
                    .copied()
                    .filter(|&i| sensitive(comp, k, space, &theta, &free, i))
                    .collect();
                for &i in &hits {
                    orders[i] = Some(k);
                }
                hits
            }
        };
        if stage.is_empty() {
            continue;
        }
        let flags = maximise_stage(comp, k, space, &mut theta, &stage);
        for (&i, b) in stage.iter().zip(flags) {
            boundary[i] = b;
            if b {
                log::warn!(
                    "stage {k} argmax for '{}' lies on the grid boundary",
                    space.names[i]
                );
            }
        }
    }
    let orders = orders
        .into_iter()
        .enumerate()
        .map(|(i, o)| o.ok_or_else(|| Error::Unestimable(space.names[i].clone())))
        .collect::<Result<Vec<_>>>()?;
    let estimates = (0..dim)
        .map(|i| CoordinateEstimate {
            coordinate: space.names[i].clone(),
            order: orders[i],
            estimate: theta[i],
            stage_argmax_on_boundary: boundary[i],
        })
        .collect();
    Ok((MleResult { theta, estimates }, orders))
}

/// Stage-wise maximum likelihood. Uses the space's declared orders when
/// present, otherwise detects them.
pub fn hierarchical_mle(comp: &ScaledLogLik, space: &ParameterSpace) -> Result<MleResult> {
    Ok(run_hierarchy(comp, space, space.orders())?.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct StagedPosterior {
    pub points: Vec<Vec<f64>>,
    /// `stages[0]` is the prior; `stages[k+1]` includes components `0..=k`.
    pub stages: Vec<Vec<f64>>,
}

impl StagedPosterior {
    /// Marginal of coordinate `i` at stage `s`, one mass per axis value.
    pub fn marginal(&self, space: &ParameterSpace, stage: usize, i: usize) -> Vec<f64> {
        let axis = &space.grid[i];
        let mut out = vec![0.0; axis.len()];
        for (p, &u) in self.points.iter().zip(&self.stages[stage]) {
            let j = axis.iter().position(|&v| v == p[i]).expect("grid value");
            out[j] += u;
        }
        out
    }

    /// Order of each coordinate: first component whose update moves its
    /// marginal by more than [`TV_THRESHOLD`] in total variation.
    pub fn detected_orders(&self, space: &ParameterSpace) -> Vec<Option<usize>> {
        (0..space.dim())
            .map(|i| {
                (1..self.stages.len()).find_map(|s| {
                    let a = self.marginal(space, s - 1, i);
                    let b = self.marginal(space, s, i);
                    let tv = 0.5 * a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>();
                    (tv > TV_THRESHOLD).then_some(s - 1)
                })
            })
            .collect()
    }

    pub fn mode(&self) -> &[f64] {
        let last = self.stages.last().expect("at least the prior");
        let best = last
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        &self.points[best]
    }
}

/// `u_k ∝ u_{k-1}·exp(ℓ⁽ᵏ⁾·N^{-α_k})` on the grid, computed in log space.
/// `prior` holds one nonnegative mass per grid point in [`ParameterSpace::point`] order.
pub fn staged_posterior(
    comp: &ScaledLogLik,
    space: &ParameterSpace,
    prior: &[f64],
) -> Result<StagedPosterior> {
    let log_prior: Vec<f64> = prior.iter().map(|p| p.ln()).collect();
    staged_posterior_log(comp, space, &log_prior)
}

/// As [`staged_posterior`] with the prior given as log-masses.
pub fn staged_posterior_log(
    comp: &ScaledLogLik,
    space: &ParameterSpace,
    log_prior: &[f64],
) -> Result<StagedPosterior> {
    if log_prior.len() != space.size() {
        return Err(Error::Dimension(format!(
            "prior has {} entries for {} grid points",
            log_prior.len(),
            space.size()
        )));
    }
    let points = space.points();
    let normalise = |logs: &[f64], stage: usize| -> Result<Vec<f64>> {
        let shift = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !shift.is_finite() {
            return Err(Error::PosteriorUnderflow { stage });
        }
        let w: Vec<f64> = logs.iter().map(|l| (l - shift).exp()).collect();
        let total: f64 = w.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::PosteriorUnderflow { stage });
        }
        Ok(w.into_iter().map(|x| x / total).collect())
    };
    let mut logs = log_prior.to_vec();
    let mut stages = vec![normalise(&logs, 0)?];
    for k in 0..comp.order_count() {
        let weight = comp.weight(k);
        let incr: Vec<f64> = points
            .par_iter()
            .map(|p| comp.component(k, p) * weight)
            .collect();
        for (l, d) in logs.iter_mut().zip(incr) {
            *l += d;
        }
        // keep the running log-masses bounded
        let shift = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if shift.is_finite() {
            logs.iter_mut().for_each(|l| *l -= shift);
        }
        stages.push(normalise(&logs, k + 1)?);
    }
    Ok(StagedPosterior { points, stages })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    fn planted() -> ScaledLogLik {
        ScaledLogLik::new(
            vec![-1.0, 0.0],
            vec![
                Box::new(|t: &[f64]| -(t[0] - 1.0).powi(2)),
                Box::new(|t: &[f64]| -(t[1] - 2.0).powi(2)),
            ],
            100.0,
        )
        .unwrap()
    }

    fn space2() -> ParameterSpace {
        ParameterSpace::new(
            vec!["a".into(), "b".into()],
            vec![axis(-0.3, 3.1, 11), axis(0.0, 5.0, 9)],
        )
        .unwrap()
    }

    #[test]
    fn planted_orders_and_estimates() {
        let s = space2();
        assert_eq!(detect_orders(&planted(), &s).unwrap(), vec![0, 1]);
        let mle = hierarchical_mle(&planted(), &s).unwrap();
        assert!((mle.theta[0] - 1.0).abs() < 1e-6 * 0.34);
        assert!((mle.theta[1] - 2.0).abs() < 1e-6 * 0.625);
        assert!(!mle.estimates[0].stage_argmax_on_boundary);
    }

    #[test]
    fn flat_coordinate_is_unestimable() {
        let s = ParameterSpace::new(
            vec!["a".into(), "dummy".into()],
            vec![axis(0.0, 2.0, 5), axis(0.0, 1.0, 3)],
        )
        .unwrap();
        let comp = ScaledLogLik::new(vec![0.0], vec![Box::new(|t: &[f64]| -(t[0] - 1.0).powi(2))], 1.0).unwrap();
        assert!(matches!(detect_orders(&comp, &s), Err(Error::Unestimable(name)) if name == "dummy"));
    }

    #[test]
    fn boundary_flag() {
        let s = ParameterSpace::new(vec!["a".into()], vec![axis(2.0, 3.0, 5)]).unwrap();
        let comp = ScaledLogLik::new(vec![0.0], vec![Box::new(|t: &[f64]| -(t[0] - 1.0).powi(2))], 1.0).unwrap();
        let mle = hierarchical_mle(&comp, &s).unwrap();
        assert!(mle.estimates[0].stage_argmax_on_boundary);
    }

    #[test]
    fn offsets_do_not_move_estimates() {
        let s = space2();
        let shifted = ScaledLogLik::new(
            vec![-1.0, 0.0],
            vec![
                Box::new(|t: &[f64]| -(t[0] - 1.0).powi(2) + 17.0),
                Box::new(|t: &[f64]| -(t[1] - 2.0).powi(2) - 3.0),
            ],
            100.0,
        )
        .unwrap();
        let a = hierarchical_mle(&planted(), &s).unwrap();
        let b = hierarchical_mle(&shifted, &s).unwrap();
        for (x, y) in a.theta.iter().zip(&b.theta) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn posterior_stages_normalised() {
        let s = space2();
        let prior = vec![1.0 / s.size() as f64; s.size()];
        let post = staged_posterior(&planted(), &s, &prior).unwrap();
        assert_eq!(post.stages.len(), 3);
        for st in &post.stages {
            assert_relative_eq!(st.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        assert_eq!(post.detected_orders(&s), vec![Some(0), Some(1)]);
        let mode = post.mode();
        assert!((mode[0] - 1.04).abs() < 0.35 && (mode[1] - 1.875).abs() < 0.63);
    }

    #[test]
    fn flat_component_leaves_posterior_unchanged() {
        let s = space2();
        let comp = ScaledLogLik::new(vec![0.0], vec![Box::new(|_: &[f64]| 4.2)], 10.0).unwrap();
        let prior: Vec<f64> = (0..s.size()).map(|i| 1.0 + i as f64).collect();
        let post = staged_posterior(&comp, &s, &prior).unwrap();
        for (a, b) in post.stages[0].iter().zip(&post.stages[1]) {
            assert_relative_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_prior_underflows() {
        let s = space2();
        assert!(matches!(
            staged_posterior(&planted(), &s, &vec![0.0; s.size()]),
            Err(Error::PosteriorUnderflow { stage: 0 })
        ));
    }

    #[test]
    fn point_indexing() {
        let s = space2();
        assert_eq!(s.point(0), vec![-0.3, 0.0]);
        assert_eq!(s.point(1), vec![-0.3, 0.625]);
        assert_eq!(s.point(9), vec![s.grid()[0][1], 0.0]);
    }
}
