//! Polytopic constraint sets `{z | L z ≤ l}`, optionally intersected with a
//! euclidean ball or a spectral-norm ball on a reshaped matrix variable.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, unflatten};

/// Spectral-norm bound on a matrix variable stored row-major in a vector.
///
/// The matrix is `rows × (blocks·cols)`; each `rows × cols` column block is
/// bounded separately, which is how disturbance-action parameters are stored.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralBall {
    pub radius: f64,
    pub rows: usize,
    pub cols: usize,
    pub blocks: usize,
}

impl SpectralBall {
    pub fn single(radius: f64, rows: usize, cols: usize) -> Self {
        SpectralBall {
            radius,
            rows,
            cols,
            blocks: 1,
        }
    }

    pub fn dim(&self) -> usize {
        self.rows * self.cols * self.blocks
    }

    /// Largest block spectral norm of the flattened variable.
    pub fn norm_of(&self, z: &DVector<f64>) -> Result<f64> {
        let m = unflatten(z, self.rows, self.cols * self.blocks)?;
        Ok((0..self.blocks)
            .map(|k| spectral_norm(&m.columns(k * self.cols, self.cols).into_owned()))
            .fold(0.0, f64::max))
    }
}

/// Norm constraint attached to a decision variable.
#[derive(Clone, Debug, PartialEq)]
pub enum NormBound {
    Euclidean(f64),
    Spectral(SpectralBall),
}

impl NormBound {
    pub fn radius(&self) -> f64 {
        match self {
            NormBound::Euclidean(r) => *r,
            NormBound::Spectral(b) => b.radius,
        }
    }

    /// Amount by which `z` exceeds the bound (zero when inside).
    pub fn violation(&self, z: &DVector<f64>) -> Result<f64> {
        let norm = match self {
            NormBound::Euclidean(_) => z.norm(),
            NormBound::Spectral(b) => b.norm_of(z)?,
        };
        Ok((norm - self.radius()).max(0.0))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Polytope {
    normals: DMatrix<f64>,
    bounds: DVector<f64>,
    pub ball_radius: Option<f64>,
    pub spectral_ball: Option<SpectralBall>,
    /// A point known to lie inside, when one is available.
    pub interior_witness: Option<DVector<f64>>,
}

impl Polytope {
    pub fn new(normals: DMatrix<f64>, bounds: DVector<f64>) -> Result<Self> {
        if normals.nrows() != bounds.len() {
            return Err(Error::dim(format!(
                "constraint matrix has {} rows but bound vector has {} entries",
                normals.nrows(),
                bounds.len()
            )));
        }
        Ok(Polytope {
            normals,
            bounds,
            ball_radius: None,
            spectral_ball: None,
            interior_witness: None,
        })
    }

    /// The box `lower ≤ z ≤ upper`, encoded as `2d` rows (upper rows first).
    pub fn from_box(lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::dim("box bounds have different lengths"));
        }
        let d = lower.len();
        let mut normals = DMatrix::zeros(2 * d, d);
        let mut bounds = DVector::zeros(2 * d);
        for i in 0..d {
            normals[(i, i)] = 1.0;
            bounds[i] = upper[i];
            normals[(d + i, i)] = -1.0;
            bounds[d + i] = -lower[i];
        }
        let mut p = Polytope::new(normals, bounds)?;
        if lower.iter().zip(upper).all(|(l, u)| l <= u) {
            let mid: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect();
            p.interior_witness = Some(DVector::from_vec(mid));
        }
        Ok(p)
    }

    /// Symmetric box `|z_i| ≤ r_i`.
    pub fn symmetric_box(radii: &[f64]) -> Result<Self> {
        let lower: Vec<f64> = radii.iter().map(|r| -r).collect();
        Self::from_box(&lower, radii)
    }

    /// The whole space of dimension `dim` (no rows).
    pub fn unconstrained(dim: usize) -> Self {
        Polytope::new(DMatrix::zeros(0, dim), DVector::zeros(0)).expect("empty polytope")
    }

    pub fn with_ball(mut self, radius: f64) -> Self {
        self.ball_radius = Some(radius);
        self
    }

    pub fn with_spectral_ball(mut self, ball: SpectralBall) -> Self {
        self.spectral_ball = Some(ball);
        self
    }

    pub fn normals(&self) -> &DMatrix<f64> {
        &self.normals
    }

    pub fn bounds(&self) -> &DVector<f64> {
        &self.bounds
    }

    pub fn dim(&self) -> usize {
        self.normals.ncols()
    }

    pub fn rows(&self) -> usize {
        self.normals.nrows()
    }

    /// Componentwise slack `l − L z` (nonnegative when the row holds).
    pub fn slack(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        if z.len() != self.dim() {
            return Err(Error::dim(format!(
                "point has length {}, polytope lives in dimension {}",
                z.len(),
                self.dim()
            )));
        }
        Ok(&self.bounds - &self.normals * z)
    }

    /// Largest violation over rows and attached balls; zero when inside.
    pub fn max_violation(&self, z: &DVector<f64>) -> Result<f64> {
        let mut worst = self.slack(z)?.iter().fold(0.0_f64, |m, s| m.max(-s));
        if let Some(r) = self.ball_radius {
            worst = worst.max(z.norm() - r);
        }
        if let Some(ball) = &self.spectral_ball {
            worst = worst.max(ball.norm_of(z)? - ball.radius);
        }
        Ok(worst.max(0.0))
    }

    /// Membership with an absolute tolerance. Dimension mismatches count as
    /// non-membership.
    pub fn contains(&self, z: &DVector<f64>, tol: f64) -> bool {
        self.max_violation(z).is_ok_and(|v| v <= tol)
    }
}

/// Euclidean radius `W` of the noise ball.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseBound(f64);

impl NoiseBound {
    pub fn new(w: f64) -> Result<Self> {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::config(format!("noise bound must be finite and ≥ 0, got {w}")));
        }
        Ok(NoiseBound(w))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}
