//! Reference controllers: discrete LQR and the greedy hindsight comparator.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::unflatten;
use crate::loss::QuadraticLoss;
use crate::metrics::{ComparatorStep, ComparatorTrajectory, RunLog};
use crate::ogd::LossContext;
use crate::policy::PolicyKind;
use crate::projection::{project_set, ProjectionConfig};
use crate::safeset::SafeDecisionSet;
use crate::system::Dynamics;

#[derive(Clone, Debug, PartialEq)]
pub struct LqrSolution {
    /// Feedback gain for `u = −K x`.
    pub k: DMatrix<f64>,
    /// Riccati fixed point.
    pub p: DMatrix<f64>,
    pub iterations: usize,
}

fn lqr_gain_from(a: &DMatrix<f64>, b: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let bt_p = b.transpose() * p;
    let s = r + &bt_p * b;
    let rhs = &bt_p * a;
    s.clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| s.lu().solve(&rhs))
        .ok_or_else(|| Error::numerical("R + BᵀPB is singular", f64::NAN))
}

/// Fixed-point iteration of the discrete algebraic Riccati equation from
/// `P = Q` until the largest entry change is at most `tol`.
pub fn lqr_solve(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    iters: usize,
    tol: f64,
) -> Result<LqrSolution> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n || q.shape() != (n, n) || r.shape() != (b.ncols(), b.ncols()) {
        return Err(Error::dim("LQR matrices are not conformable"));
    }
    let mut p = q.clone();
    for it in 1..=iters {
        let k = lqr_gain_from(a, b, r, &p)?;
        let next = q + a.transpose() * &p * a - a.transpose() * &p * b * &k;
        let next = (&next + next.transpose()) * 0.5;
        let delta = (&next - &p).amax();
        if !delta.is_finite() {
            return Err(Error::numerical("Riccati iteration diverged", delta));
        }
        p = next;
        if delta <= tol {
            let k = lqr_gain_from(a, b, r, &p)?;
            return Ok(LqrSolution { k, p, iterations: it });
        }
    }
    Err(Error::numerical(
        format!("Riccati iteration did not converge in {iters} steps"),
        f64::NAN,
    ))
}

pub fn lqr_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    iters: usize,
    tol: f64,
) -> Result<DMatrix<f64>> {
    lqr_solve(a, b, q, r, iters, tol).map(|s| s.k)
}

/// How the comparator's state evolves.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ComparatorMode {
    /// Each step restarts from the realized state `x_t`.
    #[default]
    FromActual,
    /// The comparator follows its own state chain from `x_1`.
    Coupled,
}

/// Builds the step-`t` decision set at a given state and noise history.
pub type SetBuilder<'a> = dyn Fn(usize, &DVector<f64>, &[DVector<f64>]) -> Result<SafeDecisionSet> + Sync + 'a;

pub struct GreedyProblem<'a> {
    pub dynamics: &'a dyn Dynamics,
    pub loss: &'a QuadraticLoss,
    pub kind: PolicyKind,
    pub sets: &'a SetBuilder<'a>,
    pub proj: ProjectionConfig,
}

/// Convergence threshold on the projected-gradient iterate.
pub const GREEDY_TOL: f64 = 1e-8;
const GREEDY_MAX_ITERS: usize = 200_000;

/// Minimizes the realized one-step loss over the step's safe set by
/// accelerated projected gradient descent.
pub fn greedy_step(
    problem: &GreedyProblem<'_>,
    t: usize,
    x: &DVector<f64>,
    w: &DVector<f64>,
    history: &[DVector<f64>],
) -> Result<ComparatorStep> {
    let set = (problem.sets)(t, x, history)?;
    let ctx = LossContext {
        dynamics: problem.dynamics,
        t,
        x,
        w,
        history,
    };
    let lin = ctx.linearize(problem.kind)?;
    let q = problem.loss.q();
    let r = problem.loss.r();
    let gphi = &lin.g * &lin.phi;
    // f(θ) = (c + GΦθ)ᵀQ(c + GΦθ) + θᵀΦᵀRΦθ with c = drift + w
    let hess = (gphi.transpose() * q * &gphi + lin.phi.transpose() * r * &lin.phi) * 2.0;
    let lin_term = gphi.transpose() * q * (&lin.drift + w) * 2.0;
    let lipschitz = hess.clone().symmetric_eigenvalues().amax();

    let mut theta = project_set(&DVector::zeros(set.dim()), &set, &problem.proj)?;
    if lipschitz > 1e-300 {
        let mut y = theta.clone();
        let mut momentum: f64 = 1.0;
        let mut converged = false;
        for _ in 0..GREEDY_MAX_ITERS {
            let grad = &hess * &y + &lin_term;
            let next = project_set(&(&y - grad / lipschitz), &set, &problem.proj)?;
            let step = (&next - &theta).norm();
            let m_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            y = &next + (&next - &theta) * ((momentum - 1.0) / m_next);
            momentum = m_next;
            theta = next;
            if step <= GREEDY_TOL * 1e-2 * (1.0 + theta.norm()) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::numerical(
                format!("greedy comparator did not converge at step {t}"),
                f64::NAN,
            ));
        }
    }
    let u = &lin.phi * &theta;
    let x_next = &lin.drift + &lin.g * &u + w;
    let loss = problem.loss.eval(&x_next, &u)?;
    let (rows, cols) = set.shape();
    Ok(ComparatorStep {
        x: x.clone(),
        u,
        decision: unflatten(&theta, rows, cols)?,
        loss,
    })
}

fn history_at(log: &RunLog, t: usize, len: usize) -> Vec<DVector<f64>> {
    (1..=len)
        .map(|i| match t.checked_sub(i) {
            Some(s) => log.steps[s].w.clone(),
            None => DVector::zeros(log.steps[t].w.len()),
        })
        .collect()
}

/// The per-step optimal decision in hindsight, evaluated on the run's noise.
pub fn greedy_comparator(
    log: &RunLog,
    problem: &GreedyProblem<'_>,
    mode: ComparatorMode,
) -> Result<ComparatorTrajectory> {
    let hist_len = match problem.kind {
        PolicyKind::DisturbanceAction { horizon } => horizon,
        _ => 0,
    };
    let mut steps = Vec::with_capacity(log.steps.len());
    let mut x_star = log.steps.first().map(|s| s.x.clone());
    for (t, rec) in log.steps.iter().enumerate() {
        let history = history_at(log, t, hist_len);
        let x = match mode {
            ComparatorMode::FromActual => rec.x.clone(),
            ComparatorMode::Coupled => x_star.clone().unwrap_or_else(|| rec.x.clone()),
        };
        let step = greedy_step(problem, rec.t, &x, &rec.w, &history)?;
        if mode == ComparatorMode::Coupled {
            x_star = Some(problem.dynamics.step(rec.t, &x, &step.u, &rec.w)?);
        }
        steps.push(step);
    }
    Ok(ComparatorTrajectory { steps })
}
