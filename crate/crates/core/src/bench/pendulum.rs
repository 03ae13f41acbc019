//! Inverted pendulum, discretized with forward Euler.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::system::ControlAffineSystem;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PendulumParams {
    pub g: f64,
    pub m: f64,
    pub l: f64,
    pub dt: f64,
    /// Use the equation exactly as printed: no velocity carry-over and no
    /// `Δt` on the gravity term.
    pub literal: bool,
}

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams {
            g: 10.0,
            m: 1.0,
            l: 1.0,
            dt: 0.05,
            literal: false,
        }
    }
}

impl PendulumParams {
    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        let (th, om) = (x[0], x[1]);
        let gravity = 1.5 * self.g / self.l * th.sin();
        let om_next = if self.literal { gravity } else { om + self.dt * gravity };
        DVector::from_column_slice(&[th + self.dt * om, om_next])
    }

    fn gain(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(2, 1, &[0.0, 3.0 * self.dt / (self.m * self.l * self.l)])
    }

    /// Jacobians of the drift and input map at the upright equilibrium.
    pub fn linearization(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let c = 1.5 * self.g / self.l;
        let a = if self.literal {
            DMatrix::from_row_slice(2, 2, &[1.0, self.dt, c, 0.0])
        } else {
            DMatrix::from_row_slice(2, 2, &[1.0, self.dt, self.dt * c, 1.0])
        };
        (a, self.gain())
    }

    pub fn system(self) -> Result<ControlAffineSystem> {
        let mut sys = ControlAffineSystem::from_fns(2, 1, move |x| self.drift(x), move |_| self.gain())?;
        let c = 1.5 * self.g / self.l;
        sys.lipschitz_f = if self.literal {
            1.0 + self.dt + c
        } else {
            1.0 + self.dt * (1.0 + c)
        };
        sys.lipschitz_g = 0.0;
        Ok(sys)
    }
}

/// `(θ, θ̇) ↦ (θ + Δt θ̇, θ̇ + Δt((3g/2l) sin θ + 3u/(ml²))) + w`.
pub fn pendulum_step(p: &PendulumParams, x: &DVector<f64>, u: f64, w: &DVector<f64>) -> DVector<f64> {
    p.drift(x) + p.gain() * u + w
}

/// The angle and rate limit used by the benchmark, `π/2`.
pub const STATE_LIMIT: f64 = PI / 2.0;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::Dynamics;

    fn v(a: f64, b: f64) -> DVector<f64> {
        DVector::from_column_slice(&[a, b])
    }

    #[test]
    fn step_examples() {
        let p = PendulumParams::default();
        let z = v(0.0, 0.0);
        assert_eq!(pendulum_step(&p, &z, 0.0, &z), z);

        let x = pendulum_step(&p, &v(PI / 6.0, 0.0), 0.0, &z);
        assert_eq!(x[0], PI / 6.0);
        assert!((x[1] - 0.375).abs() < 1e-15);

        // torque that cancels gravity leaves the rate untouched
        let th: f64 = 0.4;
        let u = -(p.m * p.l * p.l / 3.0) * (1.5 * p.g / p.l) * th.sin();
        let w = v(0.01, -0.02);
        let x = pendulum_step(&p, &v(th, 0.3), u, &w);
        assert!((x[1] - (0.3 - 0.02)).abs() < 1e-15);
    }

    #[test]
    fn system_matches_step_and_literal_differs() {
        let p = PendulumParams::default();
        let sys = p.system().unwrap();
        let x = v(0.2, -0.5);
        let u = DVector::from_element(1, 1.5);
        let w = v(0.001, 0.002);
        assert_eq!(sys.step(0, &x, &u, &w).unwrap(), pendulum_step(&p, &x, 1.5, &w));

        let lit = PendulumParams { literal: true, ..p };
        let y = pendulum_step(&lit, &x, 0.0, &v(0.0, 0.0));
        assert!((y[1] - 15.0 * 0.2f64.sin()).abs() < 1e-15);
        let (a, b) = p.linearization();
        assert_eq!(a[(1, 0)], 0.75);
        assert_eq!(b[(1, 0)], 0.15000000000000002);
    }
}
