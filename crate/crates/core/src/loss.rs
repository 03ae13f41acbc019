use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{check_len, is_finite_mat};

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-12;

/// Optional regularity constants of a loss (gradient bound, smoothness,
/// domain diameter). Carried for reporting; never enforced.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossConstants {
    pub beta: Option<f64>,
    pub gradient_bound: Option<f64>,
    pub diameter: Option<f64>,
}

/// `c(x⁺, u) = x⁺ᵀ Q x⁺ + uᵀ R u` with symmetric positive semidefinite `Q`, `R`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticLoss {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    pub constants: LossConstants,
}

fn check_psd(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() || !is_finite_mat(m) {
        return Err(Error::config(format!("{name} must be a finite square matrix")));
    }
    let asym = (m - m.transpose()).abs().max();
    if asym > SYMMETRY_TOL {
        return Err(Error::config(format!(
            "{name} is not symmetric (max asymmetry {asym:e})"
        )));
    }
    if m.nrows() > 0 {
        let min_eig = m.clone().symmetric_eigenvalues().min();
        if min_eig < -PSD_TOL {
            return Err(Error::config(format!("{name} has negative eigenvalue {min_eig:e}")));
        }
    }
    Ok(())
}

impl QuadraticLoss {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        check_psd("Q", &q)?;
        check_psd("R", &r)?;
        Ok(QuadraticLoss {
            q,
            r,
            constants: LossConstants::default(),
        })
    }

    pub fn diagonal(q: &[f64], r: &[f64]) -> Result<Self> {
        Self::new(
            DMatrix::from_diagonal(&DVector::from_column_slice(q)),
            DMatrix::from_diagonal(&DVector::from_column_slice(r)),
        )
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    fn check(&self, x_next: &DVector<f64>, u: &DVector<f64>) -> Result<()> {
        check_len("successor state", x_next, self.q.nrows())?;
        check_len("input", u, self.r.nrows())
    }

    pub fn eval(&self, x_next: &DVector<f64>, u: &DVector<f64>) -> Result<f64> {
        self.check(x_next, u)?;
        Ok(x_next.dot(&(&self.q * x_next)) + u.dot(&(&self.r * u)))
    }

    /// `(2 Q x⁺, 2 R u)`.
    pub fn grad_xu(&self, x_next: &DVector<f64>, u: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        self.check(x_next, u)?;
        Ok((&self.q * x_next * 2.0, &self.r * u * 2.0))
    }
}
