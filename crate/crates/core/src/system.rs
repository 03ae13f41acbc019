//! Plant models: linear time-varying pairs `(A_t, B_t)` and control-affine
//! maps `x ↦ f(x) + g(x) u`.
//!
//! Both expose the same one-step structure through [`Dynamics`]: a drift term
//! and an input matrix, so that the successor is always affine in the input.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{check_len, check_shape, is_finite_mat, is_finite_vec, spectral_norm};

/// Slack allowed when checking stored norm bounds.
const BOUND_SLACK: f64 = 1e-9;

/// A time-indexed sequence of values.
#[derive(Clone)]
pub enum Schedule<T> {
    Constant(T),
    /// One entry per step; asking beyond the table is an error.
    Table(Vec<T>),
    Generator(Arc<dyn Fn(usize) -> T + Send + Sync>),
}

impl<T: Clone> Schedule<T> {
    pub fn at(&self, t: usize) -> Result<T> {
        match self {
            Schedule::Constant(v) => Ok(v.clone()),
            Schedule::Table(v) => v
                .get(t)
                .cloned()
                .ok_or_else(|| Error::dim(format!("schedule has {} entries, step {t} requested", v.len()))),
            Schedule::Generator(f) => Ok(f(t)),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Schedule::Constant(_))
    }

    /// Entries that can be inspected without evaluating a generator.
    fn stored(&self) -> Vec<&T> {
        match self {
            Schedule::Constant(v) => vec![v],
            Schedule::Table(v) => v.iter().collect(),
            Schedule::Generator(_) => Vec::new(),
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for Schedule<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            Schedule::Table(v) => f.debug_tuple("Table").field(&v.len()).finish(),
            Schedule::Generator(_) => f.write_str("Generator(..)"),
        }
    }
}

impl<T> From<T> for Schedule<T> {
    fn from(v: T) -> Self {
        Schedule::Constant(v)
    }
}

/// One-step dynamics `x⁺ = drift(t, x) + input_matrix(t, x)·u + w`.
pub trait Dynamics: Send + Sync {
    fn dim_x(&self) -> usize;
    fn dim_u(&self) -> usize;
    fn drift(&self, t: usize, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn input_matrix(&self, t: usize, x: &DVector<f64>) -> Result<DMatrix<f64>>;

    fn step(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("input", u, self.dim_u())?;
        check_len("noise", w, self.dim_x())?;
        let drift = self.drift(t, x)?;
        let g = self.input_matrix(t, x)?;
        Ok(drift + g * u + w)
    }
}

/// `x⁺ = A_t x + B_t u + w` with stored norm bounds `‖A_t‖ ≤ κ_A`, `‖B_t‖ ≤ κ_B`.
#[derive(Clone, Debug)]
pub struct LtvSystem {
    a: Schedule<DMatrix<f64>>,
    b: Schedule<DMatrix<f64>>,
    kappa_a: f64,
    kappa_b: f64,
    dim_x: usize,
    dim_u: usize,
}

impl LtvSystem {
    /// Validates dimensions and the norm bounds of every stored entry.
    /// Generator entries are validated when they are evaluated.
    pub fn new(
        a: Schedule<DMatrix<f64>>,
        b: Schedule<DMatrix<f64>>,
        kappa_a: f64,
        kappa_b: f64,
        dim_x: usize,
        dim_u: usize,
    ) -> Result<Self> {
        let sys = LtvSystem {
            a,
            b,
            kappa_a,
            kappa_b,
            dim_x,
            dim_u,
        };
        for m in sys.a.stored() {
            sys.check_a(m)?;
        }
        for m in sys.b.stored() {
            sys.check_b(m)?;
        }
        Ok(sys)
    }

    /// Time-invariant pair; the bounds are the actual spectral norms.
    pub fn lti(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let (dim_x, dim_u) = (a.nrows(), b.ncols());
        let (ka, kb) = (spectral_norm(&a), spectral_norm(&b));
        Self::new(a.into(), b.into(), ka, kb, dim_x, dim_u)
    }

    /// The scalar system `x⁺ = a x + b u + w`.
    pub fn scalar(a: f64, b: f64) -> Self {
        Self::lti(DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, b))
            .expect("scalar system is always well formed")
    }

    pub fn kappa_a(&self) -> f64 {
        self.kappa_a
    }

    pub fn kappa_b(&self) -> f64 {
        self.kappa_b
    }

    fn check_a(&self, m: &DMatrix<f64>) -> Result<()> {
        check_shape("A_t", m, self.dim_x, self.dim_x)?;
        if !is_finite_mat(m) || spectral_norm(m) > self.kappa_a + BOUND_SLACK {
            return Err(Error::config(format!(
                "‖A_t‖ = {} exceeds κ_A = {}",
                spectral_norm(m),
                self.kappa_a
            )));
        }
        Ok(())
    }

    fn check_b(&self, m: &DMatrix<f64>) -> Result<()> {
        check_shape("B_t", m, self.dim_x, self.dim_u)?;
        if !is_finite_mat(m) || spectral_norm(m) > self.kappa_b + BOUND_SLACK {
            return Err(Error::config(format!(
                "‖B_t‖ = {} exceeds κ_B = {}",
                spectral_norm(m),
                self.kappa_b
            )));
        }
        Ok(())
    }

    pub fn matrices(&self, t: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let a = self.a.at(t)?;
        let b = self.b.at(t)?;
        if matches!(self.a, Schedule::Generator(_)) {
            self.check_a(&a)?;
        }
        if matches!(self.b, Schedule::Generator(_)) {
            self.check_b(&b)?;
        }
        Ok((a, b))
    }

    /// `A_t x + B_t u + w`.
    pub fn step_ltv(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("state", x, self.dim_x)?;
        check_len("input", u, self.dim_u)?;
        check_len("noise", w, self.dim_x)?;
        let (a, b) = self.matrices(t)?;
        Ok(a * x + b * u + w)
    }
}

impl Dynamics for LtvSystem {
    fn dim_x(&self) -> usize {
        self.dim_x
    }

    fn dim_u(&self) -> usize {
        self.dim_u
    }

    fn drift(&self, t: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("state", x, self.dim_x)?;
        Ok(self.a.at(t)? * x)
    }

    fn input_matrix(&self, t: usize, _x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.matrices(t)?.1)
    }

    fn step(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.step_ltv(t, x, u, w)
    }
}

pub type DriftFn = Arc<dyn Fn(&DVector<f64>) -> Result<DVector<f64>, String> + Send + Sync>;
pub type InputGainFn = Arc<dyn Fn(&DVector<f64>) -> Result<DMatrix<f64>, String> + Send + Sync>;

/// `x⁺ = f(x) + g(x) u + w` with caller-supplied callbacks.
#[derive(Clone)]
pub struct ControlAffineSystem {
    f: DriftFn,
    g: InputGainFn,
    dim_x: usize,
    dim_u: usize,
    /// Declared Lipschitz constants of `f` and `g` (metadata only).
    pub lipschitz_f: f64,
    pub lipschitz_g: f64,
}

impl fmt::Debug for ControlAffineSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlAffineSystem")
            .field("dim_x", &self.dim_x)
            .field("dim_u", &self.dim_u)
            .field("lipschitz_f", &self.lipschitz_f)
            .field("lipschitz_g", &self.lipschitz_g)
            .finish()
    }
}

impl ControlAffineSystem {
    /// Checks that `f(0)` and `g(0)` evaluate to finite values of the right shape.
    pub fn new(
        dim_x: usize,
        dim_u: usize,
        f: DriftFn,
        g: InputGainFn,
        lipschitz_f: f64,
        lipschitz_g: f64,
    ) -> Result<Self> {
        let sys = ControlAffineSystem {
            f,
            g,
            dim_x,
            dim_u,
            lipschitz_f,
            lipschitz_g,
        };
        let zero = DVector::zeros(dim_x);
        sys.eval_f(&zero)?;
        sys.eval_g(&zero)?;
        Ok(sys)
    }

    /// Convenience constructor from plain closures.
    pub fn from_fns<F, G>(dim_x: usize, dim_u: usize, f: F, g: G) -> Result<Self>
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        G: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self::new(
            dim_x,
            dim_u,
            Arc::new(move |x| Ok(f(x))),
            Arc::new(move |x| Ok(g(x))),
            f64::INFINITY,
            f64::INFINITY,
        )
    }

    pub fn eval_f(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("state", x, self.dim_x)?;
        let v = (self.f)(x).map_err(Error::ModelEval)?;
        if v.len() != self.dim_x || !is_finite_vec(&v) {
            return Err(Error::ModelEval(format!(
                "drift returned a non-finite or mis-sized value (len {})",
                v.len()
            )));
        }
        Ok(v)
    }

    pub fn eval_g(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_len("state", x, self.dim_x)?;
        let m = (self.g)(x).map_err(Error::ModelEval)?;
        if m.nrows() != self.dim_x || m.ncols() != self.dim_u || !is_finite_mat(&m) {
            return Err(Error::ModelEval(format!(
                "input gain returned a non-finite or {}x{} value",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(m)
    }

    /// `f(x) + g(x) u + w`.
    pub fn step_affine(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("input", u, self.dim_u)?;
        check_len("noise", w, self.dim_x)?;
        Ok(self.eval_f(x)? + self.eval_g(x)? * u + w)
    }
}

impl Dynamics for ControlAffineSystem {
    fn dim_x(&self) -> usize {
        self.dim_x
    }

    fn dim_u(&self) -> usize {
        self.dim_u
    }

    fn drift(&self, _t: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.eval_f(x)
    }

    fn input_matrix(&self, _t: usize, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.eval_g(x)
    }

    fn step(&self, _t: usize, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.step_affine(x, u, w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn ltv_step_examples() {
        let sys = LtvSystem::scalar(0.9, 0.6);
        let x = sys.step_ltv(0, &v(&[1.0]), &v(&[0.5]), &v(&[0.1])).unwrap();
        assert!((x[0] - 1.3).abs() < 1e-15);
        let x = sys.step_ltv(0, &v(&[0.0]), &v(&[0.0]), &v(&[0.0])).unwrap();
        assert_eq!(x[0], 0.0);
        let x = sys.step_ltv(0, &v(&[2.0]), &v(&[-2.5]), &v(&[-1.0])).unwrap();
        assert!((x[0] + 0.7).abs() < 1e-15);
    }

    #[test]
    fn ltv_rejects_bad_dimensions_and_bounds() {
        let sys = LtvSystem::scalar(0.9, 0.6);
        let err = sys.step_ltv(0, &v(&[1.0, 2.0]), &v(&[0.5]), &v(&[0.1]));
        assert!(matches!(err, Err(Error::Dimension(_))));

        let a = DMatrix::from_element(1, 1, 2.0);
        let b = DMatrix::from_element(1, 1, 1.0);
        assert!(LtvSystem::new(a.into(), b.into(), 1.0, 1.0, 1, 1).is_err());
    }

    #[test]
    fn ltv_schedule_table_and_generator() {
        let a = Schedule::Table(vec![
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, -0.5),
        ]);
        let b = Schedule::Generator(Arc::new(|t| DMatrix::from_element(1, 1, t as f64)));
        let sys = LtvSystem::new(a, b, 1.0, 1.0, 1, 1).unwrap();
        let x1 = sys.step_ltv(1, &v(&[1.0]), &v(&[1.0]), &v(&[0.0])).unwrap();
        assert_eq!(x1[0], 0.5);
        assert!(sys.step_ltv(2, &v(&[1.0]), &v(&[1.0]), &v(&[0.0])).is_err());
        // generator entry at t = 5 violates κ_B
        let sys = LtvSystem::new(
            DMatrix::from_element(1, 1, 0.5).into(),
            Schedule::Generator(Arc::new(|t| DMatrix::from_element(1, 1, t as f64))),
            1.0,
            1.0,
            1,
            1,
        )
        .unwrap();
        assert!(sys.matrices(5).is_err());
    }

    #[test]
    fn affine_step_examples() {
        let sys = ControlAffineSystem::from_fns(1, 1, |x| x * 0.9, |_| DMatrix::from_element(1, 1, 0.6)).unwrap();
        let x = sys.step_affine(&v(&[1.0]), &v(&[0.5]), &v(&[0.1])).unwrap();
        assert!((x[0] - 1.3).abs() < 1e-15);

        let sin =
            ControlAffineSystem::from_fns(1, 1, |x| x.map(f64::sin), |_| DMatrix::from_element(1, 1, 1.0)).unwrap();
        let x = sin
            .step_affine(&v(&[std::f64::consts::FRAC_PI_2]), &v(&[-1.0]), &v(&[0.0]))
            .unwrap();
        assert!(x[0].abs() < 1e-15);
    }

    #[test]
    fn affine_callback_failure_is_model_error() {
        let sys = ControlAffineSystem::new(
            1,
            1,
            Arc::new(|x: &DVector<f64>| {
                if x[0] > 1.0 {
                    Err("out of model range".to_string())
                } else {
                    Ok(x.clone())
                }
            }),
            Arc::new(|_: &DVector<f64>| Ok(DMatrix::from_element(1, 1, 1.0))),
            1.0,
            0.0,
        )
        .unwrap();
        let err = sys.step_affine(&v(&[2.0]), &v(&[0.0]), &v(&[0.0]));
        assert!(matches!(err, Err(Error::ModelEval(_))));

        let nan = ControlAffineSystem::from_fns(1, 1, |_| v(&[f64::NAN]), |_| DMatrix::zeros(1, 1));
        assert!(matches!(nan, Err(Error::ModelEval(_))));
    }

    proptest! {
        #[test]
        fn ltv_step_is_affine(
            a in -1.0..1.0f64, b in -1.0..1.0f64,
            x1 in -3.0..3.0f64, x2 in -3.0..3.0f64,
            u1 in -3.0..3.0f64, u2 in -3.0..3.0f64,
            w1 in -1.0..1.0f64, w2 in -1.0..1.0f64,
            alpha in 0.0..=1.0f64,
        ) {
            let sys = LtvSystem::scalar(a, b);
            let mix = |p: f64, q: f64| alpha * p + (1.0 - alpha) * q;
            let lhs = sys.step_ltv(0, &v(&[mix(x1, x2)]), &v(&[mix(u1, u2)]), &v(&[mix(w1, w2)])).unwrap();
            let s1 = sys.step_ltv(0, &v(&[x1]), &v(&[u1]), &v(&[w1])).unwrap();
            let s2 = sys.step_ltv(0, &v(&[x2]), &v(&[u2]), &v(&[w2])).unwrap();
            prop_assert!((lhs[0] - mix(s1[0], s2[0])).abs() < 1e-12);
        }
    }
}
