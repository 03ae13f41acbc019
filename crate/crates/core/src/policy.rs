//! Linearly parameterized control policies.
//!
//! Every supported policy is linear in its parameters: `u = Φ · vec(θ)` where
//! `vec` flattens row-major and `Φ` depends on the current state (state
//! feedback) or on the recent noise (disturbance action). Safe sets,
//! gradients and projections all work through that map.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{check_len, flatten, spectral_norm};
use crate::polytope::{NormBound, SpectralBall};

const NORM_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyKind {
    /// `u = θ` with `θ` a `d_u × 1` column.
    DirectInput,
    /// `u = −K x` with `K` of shape `d_u × d_x`.
    StateFeedback,
    /// `u = Σ_{i=1..H} K⁽ⁱ⁾ w_{t−i}`, stored as `[K⁽¹⁾ … K⁽ᴴ⁾]` of shape `d_u × H·d_x`.
    DisturbanceAction { horizon: usize },
}

impl PolicyKind {
    pub fn param_shape(self, dim_u: usize, dim_x: usize) -> (usize, usize) {
        match self {
            PolicyKind::DirectInput => (dim_u, 1),
            PolicyKind::StateFeedback => (dim_u, dim_x),
            PolicyKind::DisturbanceAction { horizon } => (dim_u, horizon * dim_x),
        }
    }

    /// The norm constraint `‖θ‖ ≤ κ` for this kind: euclidean for inputs,
    /// blockwise spectral for gains. `None` when `κ` is infinite.
    pub fn norm_bound(self, kappa: f64, dim_u: usize, dim_x: usize) -> Option<NormBound> {
        if !kappa.is_finite() {
            return None;
        }
        Some(match self {
            PolicyKind::DirectInput => NormBound::Euclidean(kappa),
            PolicyKind::StateFeedback => NormBound::Spectral(SpectralBall::single(kappa, dim_u, dim_x)),
            PolicyKind::DisturbanceAction { horizon } => NormBound::Spectral(SpectralBall {
                radius: kappa,
                rows: dim_u,
                cols: dim_x,
                blocks: horizon,
            }),
        })
    }

    /// `Φ` with `u = Φ · vec(θ)`.
    ///
    /// `history` lists past noise most recent first (`w_{t−1}, w_{t−2}, …`).
    /// With `zero_pad`, missing history entries count as zero.
    pub fn input_map(
        self,
        dim_u: usize,
        dim_x: usize,
        x: &DVector<f64>,
        history: &[DVector<f64>],
        zero_pad: bool,
    ) -> Result<DMatrix<f64>> {
        match self {
            PolicyKind::DirectInput => Ok(DMatrix::identity(dim_u, dim_u)),
            PolicyKind::StateFeedback => {
                check_len("state", x, dim_x)?;
                let mut phi = DMatrix::zeros(dim_u, dim_u * dim_x);
                for i in 0..dim_u {
                    for j in 0..dim_x {
                        phi[(i, i * dim_x + j)] = -x[j];
                    }
                }
                Ok(phi)
            }
            PolicyKind::DisturbanceAction { horizon } => {
                if history.len() < horizon && !zero_pad {
                    return Err(Error::History {
                        needed: horizon,
                        available: history.len(),
                    });
                }
                let cols = horizon * dim_x;
                let mut phi = DMatrix::zeros(dim_u, dim_u * cols);
                for (h, w) in history.iter().take(horizon).enumerate() {
                    check_len("past noise", w, dim_x)?;
                    for i in 0..dim_u {
                        for j in 0..dim_x {
                            phi[(i, i * cols + h * dim_x + j)] = w[j];
                        }
                    }
                }
                Ok(phi)
            }
        }
    }
}

/// A policy kind together with its parameter block and norm bound `κ`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    pub kind: PolicyKind,
    pub theta: DMatrix<f64>,
    pub kappa: f64,
}

impl PolicyParams {
    /// Validates the parameter shape against `(d_u, d_x)` and the norm bound.
    pub fn new(kind: PolicyKind, theta: DMatrix<f64>, kappa: f64, dim_u: usize, dim_x: usize) -> Result<Self> {
        let (rows, cols) = kind.param_shape(dim_u, dim_x);
        if theta.shape() != (rows, cols) {
            return Err(Error::dim(format!(
                "policy parameters are {}x{}, expected {rows}x{cols}",
                theta.nrows(),
                theta.ncols()
            )));
        }
        let p = PolicyParams { kind, theta, kappa };
        if let Some(bound) = kind.norm_bound(kappa, dim_u, dim_x) {
            let excess = bound.violation(&p.flat())?;
            if excess > NORM_SLACK {
                return Err(Error::config(format!(
                    "policy parameters exceed κ = {kappa} by {excess:e}"
                )));
            }
        }
        Ok(p)
    }

    pub fn zeros(kind: PolicyKind, kappa: f64, dim_u: usize, dim_x: usize) -> Self {
        let (rows, cols) = kind.param_shape(dim_u, dim_x);
        PolicyParams {
            kind,
            theta: DMatrix::zeros(rows, cols),
            kappa,
        }
    }

    pub fn flat(&self) -> DVector<f64> {
        flatten(&self.theta)
    }

    pub fn dim_u(&self) -> usize {
        self.theta.nrows()
    }

    /// Same kind and bound, new parameters.
    pub fn with_theta(&self, theta: DMatrix<f64>) -> Self {
        PolicyParams {
            kind: self.kind,
            theta,
            kappa: self.kappa,
        }
    }

    /// Largest spectral norm over the parameter blocks.
    pub fn param_norm(&self) -> f64 {
        match self.kind {
            PolicyKind::DirectInput => self.theta.norm(),
            PolicyKind::StateFeedback => spectral_norm(&self.theta),
            PolicyKind::DisturbanceAction { horizon } => {
                let cols = self.theta.ncols() / horizon.max(1);
                (0..horizon)
                    .map(|k| spectral_norm(&self.theta.columns(k * cols, cols).into_owned()))
                    .fold(0.0, f64::max)
            }
        }
    }

    /// The control input produced at state `x` given past noise (most recent first).
    pub fn to_input(&self, x: &DVector<f64>, history: &[DVector<f64>], zero_pad: bool) -> Result<DVector<f64>> {
        match self.kind {
            PolicyKind::DirectInput => Ok(self.theta.column(0).into_owned()),
            PolicyKind::StateFeedback => {
                check_len("state", x, self.theta.ncols())?;
                Ok(-(&self.theta * x))
            }
            PolicyKind::DisturbanceAction { horizon } => {
                let dim_x = self.theta.ncols() / horizon.max(1);
                let phi = self.kind.input_map(self.dim_u(), dim_x, x, history, zero_pad)?;
                Ok(phi * self.flat())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn input_examples() {
        let fb = PolicyParams::new(PolicyKind::StateFeedback, DMatrix::from_element(1, 1, 0.5), 5.0, 1, 1).unwrap();
        assert_eq!(fb.to_input(&v(&[2.0]), &[], false).unwrap()[0], -1.0);

        let dac = PolicyParams::new(
            PolicyKind::DisturbanceAction { horizon: 2 },
            DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            5.0,
            1,
            1,
        )
        .unwrap();
        let u = dac.to_input(&v(&[0.0]), &[v(&[0.3]), v(&[0.1])], false).unwrap();
        assert!((u[0] - 0.2).abs() < 1e-15);

        let direct = PolicyParams::new(PolicyKind::DirectInput, DMatrix::from_element(1, 1, 1.5), 5.0, 1, 1).unwrap();
        assert_eq!(direct.to_input(&v(&[7.0]), &[], false).unwrap()[0], 1.5);
    }

    #[test]
    fn short_history_needs_zero_pad() {
        let dac = PolicyParams::new(
            PolicyKind::DisturbanceAction { horizon: 3 },
            DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]),
            5.0,
            1,
            1,
        )
        .unwrap();
        let hist = [v(&[1.0])];
        assert!(matches!(
            dac.to_input(&v(&[0.0]), &hist, false),
            Err(Error::History {
                needed: 3,
                available: 1
            })
        ));
        assert_eq!(dac.to_input(&v(&[0.0]), &hist, true).unwrap()[0], 1.0);
    }

    #[test]
    fn input_map_agrees_with_direct_evaluation() {
        let k = DMatrix::from_row_slice(2, 3, &[0.1, -0.2, 0.3, 0.4, 0.5, -0.6]);
        let fb = PolicyParams::new(PolicyKind::StateFeedback, k, 5.0, 2, 3).unwrap();
        let x = v(&[1.0, -2.0, 0.5]);
        let phi = fb.kind.input_map(2, 3, &x, &[], false).unwrap();
        let lhs = phi * fb.flat();
        let rhs = fb.to_input(&x, &[], false).unwrap();
        assert!((lhs - rhs).norm() < 1e-14);
    }

    #[test]
    fn norm_bound_is_validated() {
        let big = PolicyParams::new(PolicyKind::StateFeedback, DMatrix::from_element(1, 1, 6.0), 5.0, 1, 1);
        assert!(matches!(big, Err(Error::Config(_))));
        let dac = PolicyParams::new(
            PolicyKind::DisturbanceAction { horizon: 2 },
            DMatrix::from_row_slice(1, 2, &[4.0, -4.0]),
            5.0,
            1,
            1,
        );
        // each block is bounded separately
        assert!(dac.is_ok());
        assert_eq!(dac.unwrap().param_norm(), 4.0);
    }
}
