//! Parametric vector fields `a(y; θ)`, `b(y; θ)` and their spatial gradients.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Central finite-difference step used when a field has no analytic gradients.
pub const FD_STEP: f64 = 1e-6;

/// Coefficients of `dY = a(Y; θ) dt + b(Y; θ) dX` with `Y ∈ R^d`, `X ∈ R^m`.
///
/// `drift_jacobian` returns `(∂_j a_i)`; `diffusion_jacobian` returns one
/// `d×m` matrix per state coordinate `j`, holding `∂_j b_{iβ}`. The default
/// gradient implementations are central finite differences with step
/// [`FD_STEP`], which is noticeably less accurate than analytic gradients.
pub trait ParametricVectorField: Send + Sync {
    fn state_dim(&self) -> usize;
    fn driver_dim(&self) -> usize;
    fn param_names(&self) -> Vec<String>;

    fn drift(&self, y: &DVector<f64>, theta: &[f64]) -> DVector<f64>;
    fn diffusion(&self, y: &DVector<f64>, theta: &[f64]) -> DMatrix<f64>;

    fn drift_jacobian(&self, y: &DVector<f64>, theta: &[f64]) -> DMatrix<f64> {
        fd_drift_jacobian(self, y, theta)
    }

    fn diffusion_jacobian(&self, y: &DVector<f64>, theta: &[f64]) -> Vec<DMatrix<f64>> {
        fd_diffusion_jacobian(self, y, theta)
    }

    /// False when the gradients are the finite-difference fallback.
    fn analytic_gradients(&self) -> bool {
        false
    }

    fn validate(&self, theta: &[f64]) -> Result<()> {
        let expected = self.param_names().len();
        if theta.len() != expected {
            return Err(Error::InvalidParameter(format!(
                "expected {expected} parameters ({}), got {}",
                self.param_names().join(", "),
                theta.len()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("parameters must be finite".into()));
        }
        Ok(())
    }
}

/// Central-difference `(∂_j a_i)`.
pub fn fd_drift_jacobian<F: ParametricVectorField + ?Sized>(
    field: &F,
    y: &DVector<f64>,
    theta: &[f64],
) -> DMatrix<f64> {
    let d = field.state_dim();
    let mut jac = DMatrix::zeros(d, d);
    for j in 0..d {
        let (mut up, mut dn) = (y.clone(), y.clone());
        up[j] += FD_STEP;
        dn[j] -= FD_STEP;
        let col = (field.drift(&up, theta) - field.drift(&dn, theta)) / (2.0 * FD_STEP);
        jac.set_column(j, &col);
    }
    jac
}

/// Central-difference `∂_j b` for each state coordinate `j`.
pub fn fd_diffusion_jacobian<F: ParametricVectorField + ?Sized>(
    field: &F,
    y: &DVector<f64>,
    theta: &[f64],
) -> Vec<DMatrix<f64>> {
    (0..field.state_dim())
        .map(|j| {
            let (mut up, mut dn) = (y.clone(), y.clone());
            up[j] += FD_STEP;
            dn[j] -= FD_STEP;
            (field.diffusion(&up, theta) - field.diffusion(&dn, theta)) / (2.0 * FD_STEP)
        })
        .collect()
}

fn check_positive(name: &str, value: f64) -> Result<()> {
    if !(value > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "{name} must be positive, got {value}"
        )));
    }
    Ok(())
}

/// One-dimensional fractional OU: `a = -λy`, `b = σ`; `θ = (λ, σ)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct FouField;

impl ParametricVectorField for FouField {
    fn state_dim(&self) -> usize {
        1
    }
    fn driver_dim(&self) -> usize {
        1
    }
    fn param_names(&self) -> Vec<String> {
        vec!["lambda".into(), "sigma".into()]
    }
    fn drift(&self, y: &DVector<f64>, theta: &[f64]) -> DVector<f64> {
        -y * theta[0]
    }
    fn diffusion(&self, _y: &DVector<f64>, theta: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, theta[1])
    }
    fn drift_jacobian(&self, _y: &DVector<f64>, theta: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, -theta[0])
    }
    fn diffusion_jacobian(&self, _y: &DVector<f64>, _theta: &[f64]) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(1, 1)]
    }
    fn analytic_gradients(&self) -> bool {
        true
    }
    fn validate(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != 2 {
            return Err(Error::InvalidParameter(format!(
                "fou expects (lambda, sigma), got {} values",
                theta.len()
            )));
        }
        if !theta[0].is_finite() {
            return Err(Error::InvalidParameter("lambda must be finite".into()));
        }
        check_positive("sigma", theta[1])
    }
}

/// `a ≡ 0`, `b = σ I_d`; `θ = (σ)`.
#[derive(Debug, Clone, Copy)]
pub struct PureIntegrator {
    pub dim: usize,
}

impl ParametricVectorField for PureIntegrator {
    fn state_dim(&self) -> usize {
        self.dim
    }
    fn driver_dim(&self) -> usize {
        self.dim
    }
    fn param_names(&self) -> Vec<String> {
        vec!["sigma".into()]
    }
    fn drift(&self, _y: &DVector<f64>, _theta: &[f64]) -> DVector<f64> {
        DVector::zeros(self.dim)
    }
    fn diffusion(&self, _y: &DVector<f64>, theta: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim) * theta[0]
    }
    fn drift_jacobian(&self, _y: &DVector<f64>, _theta: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(self.dim, self.dim)
    }
    fn diffusion_jacobian(&self, _y: &DVector<f64>, _theta: &[f64]) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(self.dim, self.dim); self.dim]
    }
    fn analytic_gradients(&self) -> bool {
        true
    }
    fn validate(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != 1 {
            return Err(Error::InvalidParameter("pure_integrator expects (sigma)".into()));
        }
        check_positive("sigma", theta[0])
    }
}

/// Two uncoupled OU coordinates; `θ = (λ1, σ1, λ2, σ2)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DiagonalFou;

impl ParametricVectorField for DiagonalFou {
    fn state_dim(&self) -> usize {
        2
    }
    fn driver_dim(&self) -> usize {
        2
    }
    fn param_names(&self) -> Vec<String> {
        ["lambda1", "sigma1", "lambda2", "sigma2"].map(String::from).to_vec()
    }
    fn drift(&self, y: &DVector<f64>, theta: &[f64]) -> DVector<f64> {
        DVector::from_vec(vec![-theta[0] * y[0], -theta[2] * y[1]])
    }
    fn diffusion(&self, _y: &DVector<f64>, theta: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![theta[1], theta[3]]))
    }
    fn drift_jacobian(&self, _y: &DVector<f64>, theta: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![-theta[0], -theta[2]]))
    }
    fn diffusion_jacobian(&self, _y: &DVector<f64>, _theta: &[f64]) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(2, 2); 2]
    }
    fn analytic_gradients(&self) -> bool {
        true
    }
}

/// Nonlinear planar test field with state-dependent, always invertible noise:
///
/// `a = ω(-y2, y1) - ε(y1³, y2³)`, `b = s·diag(1, 1 + y1²/(1 + y1²))`,
/// with `ε = 0.1` and `θ = (ω, s)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RotationField;

impl RotationField {
    pub const CUBIC: f64 = 0.1;
}

impl ParametricVectorField for RotationField {
    fn state_dim(&self) -> usize {
        2
    }
    fn driver_dim(&self) -> usize {
        2
    }
    fn param_names(&self) -> Vec<String> {
        vec!["omega".into(), "scale".into()]
    }
    fn drift(&self, y: &DVector<f64>, theta: &[f64]) -> DVector<f64> {
        let w = theta[0];
        DVector::from_vec(vec![
            -w * y[1] - Self::CUBIC * y[0].powi(3),
            w * y[0] - Self::CUBIC * y[1].powi(3),
        ])
    }
    fn diffusion(&self, y: &DVector<f64>, theta: &[f64]) -> DMatrix<f64> {
        let r = y[0] * y[0];
        DMatrix::from_diagonal(&DVector::from_vec(vec![
            theta[1],
            theta[1] * (1.0 + r / (1.0 + r)),
        ]))
    }
    fn drift_jacobian(&self, y: &DVector<f64>, theta: &[f64]) -> DMatrix<f64> {
        let w = theta[0];
        DMatrix::from_row_slice(
            2,
            2,
            &[
                -3.0 * Self::CUBIC * y[0] * y[0],
                -w,
                w,
                -3.0 * Self::CUBIC * y[1] * y[1],
            ],
        )
    }
    fn diffusion_jacobian(&self, y: &DVector<f64>, theta: &[f64]) -> Vec<DMatrix<f64>> {
        let denom = 1.0 + y[0] * y[0];
        let mut d1 = DMatrix::zeros(2, 2);
        d1[(1, 1)] = theta[1] * 2.0 * y[0] / (denom * denom);
        vec![d1, DMatrix::zeros(2, 2)]
    }
    fn analytic_gradients(&self) -> bool {
        true
    }
    fn validate(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != 2 || !theta[0].is_finite() {
            return Err(Error::InvalidParameter("rotation2d expects (omega, scale)".into()));
        }
        check_positive("scale", theta[1])
    }
}

/// Scalar OU driven by two noise coordinates: `a = -λy`, `b = (σ1, σ2)`;
/// `θ = (λ, σ1, σ2)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TwoDriverOu;

impl ParametricVectorField for TwoDriverOu {
    fn state_dim(&self) -> usize {
        1
    }
    fn driver_dim(&self) -> usize {
        2
    }
    fn param_names(&self) -> Vec<String> {
        vec!["lambda".into(), "sigma1".into(), "sigma2".into()]
    }
    fn drift(&self, y: &DVector<f64>, theta: &[f64]) -> DVector<f64> {
        -y * theta[0]
    }
    fn diffusion(&self, _y: &DVector<f64>, theta: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 2, &[theta[1], theta[2]])
    }
    fn drift_jacobian(&self, _y: &DVector<f64>, theta: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, -theta[0])
    }
    fn diffusion_jacobian(&self, _y: &DVector<f64>, _theta: &[f64]) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(1, 2)]
    }
    fn analytic_gradients(&self) -> bool {
        true
    }
}

type DriftFn = dyn Fn(&DVector<f64>, &[f64]) -> DVector<f64> + Send + Sync;
type DiffusionFn = dyn Fn(&DVector<f64>, &[f64]) -> DMatrix<f64> + Send + Sync;
type DriftJacFn = dyn Fn(&DVector<f64>, &[f64]) -> DMatrix<f64> + Send + Sync;
type DiffusionJacFn = dyn Fn(&DVector<f64>, &[f64]) -> Vec<DMatrix<f64>> + Send + Sync;

/// Field assembled from closures. Gradients not supplied fall back to
/// finite differences.
pub struct FnField {
    state_dim: usize,
    driver_dim: usize,
    names: Vec<String>,
    drift: Box<DriftFn>,
    diffusion: Box<DiffusionFn>,
    drift_jac: Option<Box<DriftJacFn>>,
    diffusion_jac: Option<Box<DiffusionJacFn>>,
}

impl FnField {
    pub fn new(
        state_dim: usize,
        driver_dim: usize,
        names: Vec<String>,
        drift: impl Fn(&DVector<f64>, &[f64]) -> DVector<f64> + Send + Sync + 'static,
        diffusion: impl Fn(&DVector<f64>, &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            state_dim,
            driver_dim,
            names,
            drift: Box::new(drift),
            diffusion: Box::new(diffusion),
            drift_jac: None,
            diffusion_jac: None,
        }
    }

    pub fn with_gradients(
        mut self,
        drift_jac: impl Fn(&DVector<f64>, &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
        diffusion_jac: impl Fn(&DVector<f64>, &[f64]) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.drift_jac = Some(Box::new(drift_jac));
        self.diffusion_jac = Some(Box::new(diffusion_jac));
        self
    }
}

impl fmt::Debug for FnField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnField")
            .field("state_dim", &self.state_dim)
            .field("driver_dim", &self.driver_dim)
            .field("names", &self.names)
            .field("analytic_gradients", &self.analytic_gradients())
            .finish()
    }
}

impl ParametricVectorField for FnField {
    fn state_dim(&self) -> usize {
        self.state_dim
    }
    fn driver_dim(&self) -> usize {
        self.driver_dim
    }
    fn param_names(&self) -> Vec<String> {
        self.names.clone()
    }
    fn drift(&self, y: &DVector<f64>, theta: &[f64]) -> DVector<f64> {
        (self.drift)(y, theta)
    }
    fn diffusion(&self, y: &DVector<f64>, theta: &[f64]) -> DMatrix<f64> {
        (self.diffusion)(y, theta)
    }
    fn drift_jacobian(&self, y: &DVector<f64>, theta: &[f64]) -> DMatrix<f64> {
        match &self.drift_jac {
            Some(f) => f(y, theta),
            None => fd_drift_jacobian(self, y, theta),
        }
    }
    fn diffusion_jacobian(&self, y: &DVector<f64>, theta: &[f64]) -> Vec<DMatrix<f64>> {
        match &self.diffusion_jac {
            Some(f) => f(y, theta),
            None => fd_diffusion_jacobian(self, y, theta),
        }
    }
    fn analytic_gradients(&self) -> bool {
        self.drift_jac.is_some() && self.diffusion_jac.is_some()
    }
}

type FieldFactory = Box<dyn Fn() -> Arc<dyn ParametricVectorField> + Send + Sync>;

/// Named field constructors used by the experiment harness.
pub struct FieldRegistry {
    factories: BTreeMap<String, FieldFactory>,
}

impl Default for FieldRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl FieldRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// `fou`, `pure_integrator`, `diag_fou`, `rotation2d`, `fou_two_driver`.
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("fou", || Arc::new(FouField));
        r.register("pure_integrator", || Arc::new(PureIntegrator { dim: 1 }));
        r.register("diag_fou", || Arc::new(DiagonalFou));
        r.register("rotation2d", || Arc::new(RotationField));
        r.register("fou_two_driver", || Arc::new(TwoDriverOu));
        r
    }

    pub fn register(
        &mut self,
        id: &str,
        factory: impl Fn() -> Arc<dyn ParametricVectorField> + Send + Sync + 'static,
    ) {
        self.factories.insert(id.to_string(), Box::new(factory));
    }

    pub fn get(&self, id: &str) -> Result<Arc<dyn ParametricVectorField>> {
        self.factories
            .get(id)
            .map(|f| f())
            .ok_or_else(|| Error::UnknownModel(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Central differences at step 1e-6 against the analytic gradients.
    fn check_gradients(field: &dyn ParametricVectorField, theta: &[f64], seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = field.state_dim();
        let h = 1e-6;
        for _ in 0..20 {
            let y = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
            let ja = field.drift_jacobian(&y, theta);
            let jb = field.diffusion_jacobian(&y, theta);
            for j in 0..d {
                let (mut up, mut dn) = (y.clone(), y.clone());
                up[j] += h;
                dn[j] -= h;
                let fa = (field.drift(&up, theta) - field.drift(&dn, theta)) / (2.0 * h);
                let fb = (field.diffusion(&up, theta) - field.diffusion(&dn, theta)) / (2.0 * h);
                let ea = (&fa - ja.column(j)).norm() / fa.norm().max(1.0);
                let eb = (&fb - &jb[j]).norm() / fb.norm().max(1.0);
                assert!(ea < 1e-5, "drift gradient error {ea}");
                assert!(eb < 1e-5, "diffusion gradient error {eb}");
            }
        }
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        check_gradients(&FouField, &[1.3, 0.7], 1);
        check_gradients(&PureIntegrator { dim: 3 }, &[0.4], 2);
        check_gradients(&DiagonalFou, &[1.0, 2.0, 0.5, 0.3], 3);
        check_gradients(&RotationField, &[0.8, 1.1], 4);
        check_gradients(&TwoDriverOu, &[0.8, 1.1, -0.4], 5);
    }

    #[test]
    fn diffusion_has_full_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let y = DVector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
            let b = RotationField.diffusion(&y, &[0.5, 0.9]);
            let sv = b.singular_values();
            assert!(sv.min() > 1e-10 * sv.max());
        }
    }

    #[test]
    fn fn_field_falls_back_to_finite_differences() {
        let f = FnField::new(
            1,
            1,
            vec!["k".into()],
            |y, th| DVector::from_element(1, th[0] * y[0].sin()),
            |y, _| DMatrix::from_element(1, 1, 1.0 + y[0] * y[0]),
        );
        assert!(!f.analytic_gradients());
        let y = DVector::from_element(1, 0.3);
        let ja = f.drift_jacobian(&y, &[2.0]);
        assert!((ja[(0, 0)] - 2.0 * 0.3f64.cos()).abs() < 1e-8);
        let jb = f.diffusion_jacobian(&y, &[2.0]);
        assert!((jb[0][(0, 0)] - 0.6).abs() < 1e-8);
    }

    #[test]
    fn registry_lookup() {
        let reg = FieldRegistry::with_builtins();
        assert_eq!(reg.get("fou").unwrap().state_dim(), 1);
        assert!(matches!(reg.get("nope"), Err(Error::UnknownModel(_))));
        assert!(FouField.validate(&[1.0, 0.0]).is_err());
        assert!(FouField.validate(&[1.0, 1.0]).is_ok());
    }
}
