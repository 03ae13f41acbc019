//! Safe online gradient descent on linearly parameterized policies.
//!
//! With `u = Φ θ` the realized one-step loss is
//! `f_t(θ) = c(drift_t(x_t) + G_t(x_t) Φ θ + w_t, Φ θ)`, which is convex in
//! `θ` whenever `c` is. Each step moves against its gradient and projects
//! onto the next safe decision set.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::linalg::{check_len, flatten, unflatten};
use crate::loss::QuadraticLoss;
use crate::policy::{PolicyKind, PolicyParams};
use crate::projection::{project_set, ProjectionConfig};
use crate::safeset::SafeDecisionSet;
use crate::system::Dynamics;

/// Everything the realized loss at step `t` depends on besides the decision.
#[derive(Clone, Copy)]
pub struct LossContext<'a> {
    pub dynamics: &'a dyn Dynamics,
    pub t: usize,
    pub x: &'a DVector<f64>,
    pub w: &'a DVector<f64>,
    /// Past noise, most recent first (disturbance-action policies).
    pub history: &'a [DVector<f64>],
}

pub(crate) struct Linearized {
    pub drift: DVector<f64>,
    pub g: DMatrix<f64>,
    pub phi: DMatrix<f64>,
}

impl LossContext<'_> {
    pub(crate) fn linearize(&self, kind: PolicyKind) -> Result<Linearized> {
        let (dx, du) = (self.dynamics.dim_x(), self.dynamics.dim_u());
        check_len("noise", self.w, dx)?;
        Ok(Linearized {
            drift: self.dynamics.drift(self.t, self.x)?,
            g: self.dynamics.input_matrix(self.t, self.x)?,
            phi: kind.input_map(du, dx, self.x, self.history, true)?,
        })
    }

    /// Successor and input produced by the flattened decision `theta`.
    pub fn rollout(&self, kind: PolicyKind, theta: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let lin = self.linearize(kind)?;
        check_len("decision", theta, lin.phi.ncols())?;
        let u = &lin.phi * theta;
        let x_next = &lin.drift + &lin.g * &u + self.w;
        Ok((x_next, u))
    }
}

/// `f_t(θ)`: the loss of the successor reached with the policy's input under
/// the realized noise.
pub fn policy_loss(c: &QuadraticLoss, ctx: &LossContext<'_>, p: &PolicyParams) -> Result<f64> {
    let (x_next, u) = ctx.rollout(p.kind, &p.flat())?;
    c.eval(&x_next, &u)
}

/// Analytic `∇_θ f_t`, shaped like `θ`.
///
/// By the chain rule through `u = Φ θ`: `Φᵀ (Gᵀ 2Q x⁺ + 2R u)`. For state
/// feedback this is `−Bᵀ(2Q x⁺) xᵀ − (2R u) xᵀ`.
pub fn policy_grad(c: &QuadraticLoss, ctx: &LossContext<'_>, p: &PolicyParams) -> Result<DMatrix<f64>> {
    let lin = ctx.linearize(p.kind)?;
    let theta = p.flat();
    check_len("decision", &theta, lin.phi.ncols())?;
    let u = &lin.phi * &theta;
    let x_next = &lin.drift + &lin.g * &u + ctx.w;
    let (gx, gu) = c.grad_xu(&x_next, &u)?;
    let flat = lin.phi.transpose() * (lin.g.transpose() * gx + gu);
    unflatten(&flat, p.theta.nrows(), p.theta.ncols())
}

/// Central finite-difference gradient of `θ ↦ loss(x⁺(θ), u(θ))` for any
/// convex stage loss, with step `h = 1e-6 (1 + ‖θ‖_F)`.
pub fn policy_grad_fd<L>(loss: L, ctx: &LossContext<'_>, p: &PolicyParams) -> Result<DMatrix<f64>>
where
    L: Fn(&DVector<f64>, &DVector<f64>) -> Result<f64>,
{
    let theta = p.flat();
    let h = 1e-6 * (1.0 + theta.norm());
    let mut grad = DVector::zeros(theta.len());
    for i in 0..theta.len() {
        let mut plus = theta.clone();
        let mut minus = theta.clone();
        plus[i] += h;
        minus[i] -= h;
        let (xp, up) = ctx.rollout(p.kind, &plus)?;
        let (xm, um) = ctx.rollout(p.kind, &minus)?;
        grad[i] = (loss(&xp, &up)? - loss(&xm, &um)?) / (2.0 * h);
    }
    unflatten(&grad, p.theta.nrows(), p.theta.ncols())
}

/// State of one Safe-OGD learner.
#[derive(Clone, Debug)]
pub struct OgdState {
    pub decision: PolicyParams,
    pub eta: f64,
    /// The set the current decision was projected onto.
    pub last_set: Option<SafeDecisionSet>,
    pub step_index: usize,
}

impl OgdState {
    pub fn new(decision: PolicyParams, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::config(format!("step size must be positive, got {eta}")));
        }
        Ok(OgdState {
            decision,
            eta,
            last_set: None,
            step_index: 0,
        })
    }

    pub fn with_set(mut self, set: SafeDecisionSet) -> Self {
        self.last_set = Some(set);
        self
    }
}

/// `‖Π_last(z) − Π_next(z)‖`, zero when the two sets coincide.
pub fn set_discrepancy(
    z: &DVector<f64>,
    last: Option<&SafeDecisionSet>,
    next: &SafeDecisionSet,
    projected_next: &DVector<f64>,
    cfg: &ProjectionConfig,
) -> Result<f64> {
    match last {
        Some(last) if !last.same_description(next) => Ok((project_set(z, last, cfg)? - projected_next).norm()),
        _ => Ok(0.0),
    }
}

/// One update: `z′ = θ − η ∇`, `θ⁺ = Π_next(z′)`, and the set variation
/// `ζ = ‖Π_last(z′) − Π_next(z′)‖`.
pub fn ogd_step(
    state: &OgdState,
    grad: &DMatrix<f64>,
    next_set: &SafeDecisionSet,
    cfg: &ProjectionConfig,
) -> Result<(OgdState, f64)> {
    let theta = &state.decision.theta;
    if grad.shape() != theta.shape() || next_set.shape() != theta.shape() {
        return Err(Error::dim("gradient, decision and set shapes differ"));
    }
    let z = flatten(&(theta - grad * state.eta));
    let projected = project_set(&z, next_set, cfg)?;
    let zeta = set_discrepancy(&z, state.last_set.as_ref(), next_set, &projected, cfg)?;
    let decision = state
        .decision
        .with_theta(unflatten(&projected, theta.nrows(), theta.ncols())?);
    Ok((
        OgdState {
            decision,
            eta: state.eta,
            last_set: Some(next_set.clone()),
            step_index: state.step_index + 1,
        },
        zeta,
    ))
}

/// `η = D_f / (G_f √T)`.
pub fn default_step_size(horizon: usize, diameter: f64, grad_bound: f64) -> Result<f64> {
    if horizon == 0 || !(diameter > 0.0) || !(grad_bound > 0.0) {
        return Err(Error::config(format!(
            "step-size rule needs T ≥ 1, D_f > 0, G_f > 0 (got {horizon}, {diameter}, {grad_bound})"
        )));
    }
    Ok(diameter / (grad_bound * (horizon as f64).sqrt()))
}

/// Frobenius diameter of the norm ball `‖θ‖ ≤ κ`: `2κ √rank` per block.
pub fn default_diameter(kind: PolicyKind, kappa: f64, dim_u: usize, dim_x: usize) -> f64 {
    match kind {
        PolicyKind::DirectInput => 2.0 * kappa,
        PolicyKind::StateFeedback => 2.0 * kappa * (dim_u.min(dim_x) as f64).sqrt(),
        PolicyKind::DisturbanceAction { horizon } => 2.0 * kappa * ((horizon * dim_u.min(dim_x)) as f64).sqrt(),
    }
}

/// Sampling region for [`estimate_gradient_bound`].
pub struct GradientProbe<'a> {
    pub dynamics: &'a dyn Dynamics,
    pub kind: PolicyKind,
    pub kappa: f64,
    pub x_lower: &'a [f64],
    pub x_upper: &'a [f64],
    pub noise_bound: f64,
}

/// Empirical `G_f`: 1.5 × the largest gradient norm over `n` random draws of
/// state (in the box), noise (in the ball) and decision (in the norm ball).
pub fn estimate_gradient_bound(c: &QuadraticLoss, probe: &GradientProbe<'_>, n: usize, seed: u64) -> Result<f64> {
    let dyn_ = probe.dynamics;
    let (dx, du) = (dyn_.dim_x(), dyn_.dim_u());
    if probe.x_lower.len() != dx || probe.x_upper.len() != dx {
        return Err(Error::dim("sampling box does not match the state dimension"));
    }
    if !probe.kappa.is_finite() {
        return Err(Error::config("gradient bound estimation needs a finite κ"));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (rows, cols) = probe.kind.param_shape(du, dx);
    let horizon = match probe.kind {
        PolicyKind::DisturbanceAction { horizon } => horizon,
        _ => 0,
    };
    let mut best: f64 = 0.0;
    for _ in 0..n {
        let x = DVector::from_fn(dx, |i, _| rng.random_range(probe.x_lower[i]..=probe.x_upper[i]));
        let mut w = DVector::from_fn(dx, |_, _| rng.random_range(-1.0..=1.0));
        if w.norm() > 1.0 {
            w /= w.norm();
        }
        w *= probe.noise_bound;
        let history: Vec<DVector<f64>> = (0..horizon)
            .map(|_| DVector::from_fn(dx, |_, _| rng.random_range(-1.0..=1.0)) * probe.noise_bound)
            .collect();
        let raw = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..=1.0));
        let scale = rng.random_range(0.0..=1.0) * probe.kappa;
        let tmp = PolicyParams {
            kind: probe.kind,
            theta: raw.clone(),
            kappa: f64::INFINITY,
        };
        let norm = tmp.param_norm();
        let theta = if norm > 0.0 { raw * (scale / norm) } else { raw };
        let p = tmp.with_theta(theta);
        let ctx = LossContext {
            dynamics: dyn_,
            t: 0,
            x: &x,
            w: &w,
            history: &history,
        };
        best = best.max(policy_grad(c, &ctx, &p)?.norm());
    }
    Ok(1.5 * best.max(f64::MIN_POSITIVE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::Polytope;
    use crate::system::{ControlAffineSystem, LtvSystem};
    use proptest::prelude::{prop, prop_assert, proptest};
    use rand::Rng;

    fn s(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    fn gain(k: f64) -> PolicyParams {
        PolicyParams {
            kind: PolicyKind::StateFeedback,
            theta: DMatrix::from_element(1, 1, k),
            kappa: 5.0,
        }
    }

    fn interval(lo: f64, hi: f64) -> SafeDecisionSet {
        SafeDecisionSet::from_polytope((1, 1), Polytope::from_box(&[lo], &[hi]).unwrap()).unwrap()
    }

    #[test]
    fn loss_and_gradient_examples() {
        let sys = LtvSystem::scalar(0.9, 0.6);
        let c = QuadraticLoss::diagonal(&[1.0], &[1.0]).unwrap();
        let (x, w) = (s(1.0), s(0.0));
        let ctx = LossContext {
            dynamics: &sys,
            t: 0,
            x: &x,
            w: &w,
            history: &[],
        };
        assert!((policy_loss(&c, &ctx, &gain(1.0)).unwrap() - 1.09).abs() < 1e-15);
        let g = policy_grad(&c, &ctx, &gain(1.0)).unwrap();
        assert!((g[(0, 0)] - 1.64).abs() < 1e-14);
        let fd = policy_grad_fd(|xn, u| c.eval(xn, u), &ctx, &gain(1.0)).unwrap();
        assert!((fd[(0, 0)] - 1.64).abs() < 1e-6);

        // deadbeat: a − bK = 0
        let dead = policy_loss(&c, &ctx, &gain(1.5)).unwrap();
        assert!((dead - 2.25).abs() < 1e-15);

        let (x0, w0) = (s(0.0), s(0.7));
        let ctx0 = LossContext { x: &x0, w: &w0, ..ctx };
        assert!((policy_loss(&c, &ctx0, &gain(3.0)).unwrap() - 0.49).abs() < 1e-15);
        assert_eq!(policy_grad(&c, &ctx0, &gain(3.0)).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn ogd_step_examples() {
        let cfg = ProjectionConfig::default();
        let set = interval(0.0, 2.5);
        let st = OgdState::new(gain(1.0), 0.1).unwrap().with_set(set.clone());
        let (next, zeta) = ogd_step(&st, &DMatrix::from_element(1, 1, 1.64), &set, &cfg).unwrap();
        assert!((next.decision.theta[(0, 0)] - 0.836).abs() < 1e-15);
        assert_eq!(zeta, 0.0);
        assert_eq!(next.step_index, 1);

        let st = OgdState::new(gain(0.1), 0.1).unwrap().with_set(interval(-1.0, 2.5));
        let (next, zeta) = ogd_step(&st, &DMatrix::from_element(1, 1, 2.0), &set, &cfg).unwrap();
        assert_eq!(next.decision.theta[(0, 0)], 0.0);
        // z′ = −0.1 is inside the previous set
        assert!((zeta - 0.1).abs() < 1e-15);
    }

    #[test]
    fn step_size_examples() {
        assert!((default_step_size(100, 1.0, 1.0).unwrap() - 0.1).abs() < 1e-15);
        assert!((default_step_size(400, 2.0, 1.0).unwrap() - 0.1).abs() < 1e-15);
        let a = default_step_size(50, 1.0, 1.0).unwrap();
        let b = default_step_size(200, 1.0, 1.0).unwrap();
        assert!((a / b - 2.0).abs() < 1e-14);
        assert!(default_step_size(0, 1.0, 1.0).is_err());
        assert_eq!(default_diameter(PolicyKind::StateFeedback, 5.0, 1, 1), 10.0);
    }

    #[test]
    fn gradient_bound_covers_samples() {
        let sys = LtvSystem::scalar(0.9, 0.6);
        let c = QuadraticLoss::diagonal(&[1.0], &[1.0]).unwrap();
        let probe = GradientProbe {
            dynamics: &sys,
            kind: PolicyKind::StateFeedback,
            kappa: 5.0,
            x_lower: &[-2.0],
            x_upper: &[2.0],
            noise_bound: 1.0,
        };
        let g = estimate_gradient_bound(&c, &probe, 1000, 7).unwrap();
        // worst case over the box: |2·0.6·(0.9·2 + 0.6·10 + 1)·2| + |2·10·2| ≈ 61
        assert!(g > 10.0 && g < 1.5 * 62.0, "{g}");
        assert_eq!(g, estimate_gradient_bound(&c, &probe, 1000, 7).unwrap());
    }

    fn random_ltv(rng: &mut impl Rng) -> LtvSystem {
        let a = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(2, 1, |_, _| rng.random_range(-1.0..1.0));
        LtvSystem::lti(a, b).unwrap()
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for i in 0..100 {
            let sys = random_ltv(&mut rng);
            let c = QuadraticLoss::diagonal(
                &[rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)],
                &[rng.random_range(0.0..2.0)],
            )
            .unwrap();
            let x = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
            let w = DVector::from_fn(2, |_, _| rng.random_range(-0.5..0.5));
            let hist = [w.clone(), x.clone()];
            let kind = if i % 2 == 0 {
                PolicyKind::StateFeedback
            } else {
                PolicyKind::DisturbanceAction { horizon: 2 }
            };
            let (r, cc) = kind.param_shape(1, 2);
            let p = PolicyParams {
                kind,
                theta: DMatrix::from_fn(r, cc, |_, _| rng.random_range(-2.0..2.0)),
                kappa: f64::INFINITY,
            };
            let ctx = LossContext {
                dynamics: &sys,
                t: 0,
                x: &x,
                w: &w,
                history: &hist,
            };
            let g = policy_grad(&c, &ctx, &p).unwrap();
            let fd = policy_grad_fd(|xn, u| c.eval(xn, u), &ctx, &p).unwrap();
            let rel = (&g - &fd).norm() / g.norm().max(1.0);
            assert!(rel <= 1e-6, "relative error {rel}");
        }
    }

    #[test]
    fn direct_input_gradient_on_affine_system() {
        let sys = ControlAffineSystem::from_fns(
            2,
            1,
            |x| DVector::from_column_slice(&[x[0] + 0.05 * x[1], x[1] + 0.75 * x[0].sin()]),
            |_| DMatrix::from_column_slice(2, 1, &[0.0, 0.15]),
        )
        .unwrap();
        let c = QuadraticLoss::diagonal(&[1.0, 0.1], &[0.001]).unwrap();
        let x = DVector::from_column_slice(&[0.2, -0.1]);
        let w = DVector::from_column_slice(&[0.01, -0.02]);
        let ctx = LossContext {
            dynamics: &sys,
            t: 0,
            x: &x,
            w: &w,
            history: &[],
        };
        let p = PolicyParams {
            kind: PolicyKind::DirectInput,
            theta: DMatrix::from_element(1, 1, 0.7),
            kappa: f64::INFINITY,
        };
        let g = policy_grad(&c, &ctx, &p).unwrap();
        let fd = policy_grad_fd(|xn, u| c.eval(xn, u), &ctx, &p).unwrap();
        assert!((&g - &fd).norm() <= 1e-6 * g.norm().max(1.0));
    }

    proptest! {
        #[test]
        fn loss_is_convex_along_lines(
            k1 in prop::collection::vec(-3.0..3.0f64, 2),
            k2 in prop::collection::vec(-3.0..3.0f64, 2),
            x in prop::collection::vec(-2.0..2.0f64, 2),
            alpha in 0.0..=1.0f64,
        ) {
            let sys = LtvSystem::lti(
                DMatrix::from_row_slice(2, 2, &[1.0, 0.05, 0.3, 0.9]),
                DMatrix::from_row_slice(2, 1, &[0.0, 0.5]),
            ).unwrap();
            let c = QuadraticLoss::diagonal(&[1.0, 0.1], &[0.5]).unwrap();
            let x = DVector::from_vec(x);
            let w = DVector::from_column_slice(&[0.1, -0.2]);
            let ctx = LossContext { dynamics: &sys, t: 0, x: &x, w: &w, history: &[] };
            let mk = |k: &[f64]| PolicyParams {
                kind: PolicyKind::StateFeedback,
                theta: DMatrix::from_row_slice(1, 2, k),
                kappa: f64::INFINITY,
            };
            let (p1, p2) = (mk(&k1), mk(&k2));
            let mid = p1.with_theta(&p1.theta * alpha + &p2.theta * (1.0 - alpha));
            let lhs = policy_loss(&c, &ctx, &mid).unwrap();
            let rhs = alpha * policy_loss(&c, &ctx, &p1).unwrap()
                + (1.0 - alpha) * policy_loss(&c, &ctx, &p2).unwrap();
            prop_assert!(lhs <= rhs + 1e-12);
        }
    }
}
