//! The closed loop: build the safe set, act, observe, learn.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::ader::{ader_update, ader_update_with_losses, make_ader_config, AderState, MetaLoss};
use crate::baselines::{greedy_comparator, greedy_step, GreedyProblem};
use crate::bench::noise::sample_noise;
use crate::bench::scenario::{Algorithm, GradientMode, Init, Plant, Scenario};
use crate::error::{Error, Result};
use crate::linalg::unflatten;
use crate::metrics::{dynamic_regret, ComparatorTrajectory, RunLog, RunMeta, StepRecord};
use crate::ogd::{
    default_diameter, default_step_size, estimate_gradient_bound, ogd_step, policy_grad, policy_grad_fd, policy_loss,
    GradientProbe, LossContext, OgdState,
};
use crate::policy::{PolicyKind, PolicyParams};
use crate::projection::{project_set, ProjectionConfig};
use crate::safeset::{build_policy_set, PolicySetRequest, SafeDecisionSet, StabilityConstraint};

/// Tolerance of the logged safety flags.
pub const SAFETY_TOL: f64 = 1e-9;
const GRADIENT_SAMPLES: usize = 1000;

impl Scenario {
    /// Safe decision set for step `t` at state `x` and noise history.
    pub fn safe_set(&self, t: usize, x: &DVector<f64>, history: &[DVector<f64>]) -> Result<SafeDecisionSet> {
        let p = &self.params;
        let stability = match (&self.plant, p.gamma) {
            (Plant::Ltv(sys), Some(gamma)) => {
                let (a, b) = sys.matrices(t)?;
                Some(StabilityConstraint {
                    a,
                    b,
                    radius: 1.0 - gamma,
                })
            }
            _ => None,
        };
        build_policy_set(&PolicySetRequest {
            dynamics: self.dynamics(),
            t,
            kind: p.kind,
            x_t: x,
            history,
            state_con_next: self.state_at(t + 1),
            input_con: &self.input,
            noise: self.noise_bound,
            kappa: p.kappa,
            dcbf: p.cbf.map(|c| (c, self.state_at(t))),
            stability,
            tightening: p.tightening,
        })
    }

    fn param_shape(&self) -> (usize, usize) {
        let d = self.dynamics();
        self.params.kind.param_shape(d.dim_u(), d.dim_x())
    }

    fn zero_params(&self) -> PolicyParams {
        let (r, c) = self.param_shape();
        PolicyParams {
            kind: self.params.kind,
            theta: DMatrix::zeros(r, c),
            kappa: self.params.kappa,
        }
    }

    /// `D_f` from the configuration or the norm-ball default.
    pub fn diameter(&self) -> f64 {
        let d = self.dynamics();
        self.params
            .diameter
            .unwrap_or_else(|| default_diameter(self.params.kind, self.params.kappa, d.dim_u(), d.dim_x()))
    }

    /// `G_f` from the configuration or the empirical estimate.
    pub fn grad_bound(&self) -> Result<f64> {
        if let Some(g) = self.params.grad_bound {
            return Ok(g);
        }
        let kappa = if self.params.kappa.is_finite() {
            self.params.kappa
        } else {
            return Err(Error::config("set grad_bound explicitly when κ is infinite"));
        };
        estimate_gradient_bound(
            &self.loss,
            &GradientProbe {
                dynamics: self.dynamics(),
                kind: self.params.kind,
                kappa,
                x_lower: &self.state_lower,
                x_upper: &self.state_upper,
                noise_bound: self.noise_bound.value(),
            },
            GRADIENT_SAMPLES,
            0,
        )
    }

    /// OGD step size: configured, or `D_f / (G_f √T)`.
    pub fn step_size(&self) -> Result<f64> {
        match self.params.eta {
            Some(eta) => Ok(eta),
            None => default_step_size(self.horizon, self.diameter(), self.grad_bound()?),
        }
    }

    fn greedy_problem<'a>(&'a self, sets: &'a crate::baselines::SetBuilder<'a>) -> GreedyProblem<'a> {
        GreedyProblem {
            dynamics: self.dynamics(),
            loss: &self.loss,
            kind: self.params.kind,
            sets,
            proj: ProjectionConfig::default(),
        }
    }
}

#[allow(clippy::large_enum_variant)] // one learner per run
enum Learner {
    Ogd(OgdState),
    Ader(Box<AderState>, crate::ader::AderConfig),
    Lqr(DMatrix<f64>),
    Greedy,
}

fn is_empty_set(e: &Error) -> bool {
    matches!(e, Error::SafeSetEmpty { .. })
}

/// Runs one seed of a scenario.
///
/// An empty safe set ends the run early; the log records why. Other errors
/// are returned.
pub fn run_scenario(scn: &Scenario, seed: u64) -> Result<RunLog> {
    let dyn_ = scn.dynamics();
    let proj = ProjectionConfig::default();
    let noise = scn.noise_spec(seed)?;
    let p = &scn.params;
    let hist_len = match p.kind {
        PolicyKind::DisturbanceAction { horizon } => horizon,
        _ => 0,
    };
    let meta = RunMeta {
        scenario: scn.name.clone(),
        algorithm: p.algorithm.name().into(),
        noise: scn.distribution.name().into(),
        seed,
        horizon: scn.horizon,
    };
    let mut log = RunLog::new(meta, scn.x0.clone());
    let mut x = scn.x0.clone();
    let mut history: Vec<DVector<f64>> = vec![DVector::zeros(dyn_.dim_x()); hist_len];

    let mut set = match scn.safe_set(0, &x, &history) {
        Ok(s) => s,
        Err(e) if is_empty_set(&e) => {
            log.aborted = Some(e.to_string());
            log.final_safe = scn.state_at(0).contains(&x, SAFETY_TOL);
            return Ok(log);
        }
        Err(e) => return Err(e),
    };
    let (rows, cols) = scn.param_shape();
    let start = match p.init {
        Init::Zero => scn.zero_params(),
        Init::Lqr => scn.zero_params().with_theta(scn.lqr_gain()?),
    };
    let start = start.with_theta(unflatten(&project_set(&start.flat(), &set, &proj)?, rows, cols)?);

    let mut learner = match p.algorithm {
        Algorithm::SafeOgd => Learner::Ogd(OgdState::new(start, scn.step_size()?)?.with_set(set.clone())),
        Algorithm::SafeAder => {
            let cfg = make_ader_config(scn.horizon, scn.diameter(), scn.grad_bound()?)?;
            Learner::Ader(Box::new(AderState::new(&cfg, start, set.clone())?), cfg)
        }
        Algorithm::Lqr => Learner::Lqr(scn.lqr_gain()?),
        Algorithm::GreedyOracle => Learner::Greedy,
    };
    let sets = |t: usize, x: &DVector<f64>, h: &[DVector<f64>]| scn.safe_set(t, x, h);
    let problem = scn.greedy_problem(&sets);

    for t in 0..scn.horizon {
        let safe_state = scn.state_at(t).contains(&x, SAFETY_TOL);
        let w = sample_noise(&noise, t);
        let decision = match &learner {
            Learner::Ogd(s) => s.decision.clone(),
            Learner::Ader(s, _) => s.combined.clone(),
            Learner::Lqr(k) => {
                let z = project_set(&crate::linalg::flatten(k), &set, &proj)?;
                scn.zero_params().with_theta(unflatten(&z, rows, cols)?)
            }
            Learner::Greedy => {
                let step = greedy_step(&problem, t, &x, &w, &history)?;
                scn.zero_params().with_theta(step.decision)
            }
        };
        let u = decision.to_input(&x, &history, true)?;
        let safe_input = scn.input.contains(&u, SAFETY_TOL);
        let x_next = dyn_.step(t, &x, &u, &w)?;
        // the learner only sees the noise through the model residual
        let w_seen = &x_next - dyn_.drift(t, &x)? - dyn_.input_matrix(t, &x)? * &u;
        let loss = scn.loss.eval(&x_next, &u)?;

        let mut zeta = 0.0;
        let mut abort = None;
        if t + 1 < scn.horizon {
            let mut next_history = history.clone();
            if hist_len > 0 {
                next_history.pop();
                next_history.insert(0, w_seen.clone());
            }
            match scn.safe_set(t + 1, &x_next, &next_history) {
                Ok(next_set) => {
                    let ctx = LossContext {
                        dynamics: dyn_,
                        t,
                        x: &x,
                        w: &w_seen,
                        history: &history,
                    };
                    let grad = |d: &PolicyParams| match p.gradient {
                        GradientMode::Analytic => policy_grad(&scn.loss, &ctx, d),
                        GradientMode::FiniteDifference => policy_grad_fd(|xn, un| scn.loss.eval(xn, un), &ctx, d),
                    };
                    match &mut learner {
                        Learner::Ogd(s) => {
                            let g = grad(&s.decision)?;
                            let (next, z) = ogd_step(s, &g, &next_set, &proj)?;
                            *s = next;
                            zeta = z;
                        }
                        Learner::Ader(s, cfg) => {
                            let g = grad(&s.combined)?;
                            let step = match p.meta_loss {
                                MetaLoss::Linearized => ader_update(s, &g, &next_set, &proj, cfg)?,
                                MetaLoss::Full => {
                                    let losses = s
                                        .bases
                                        .iter()
                                        .map(|b| policy_loss(&scn.loss, &ctx, &b.decision))
                                        .collect::<Result<Vec<_>>>()?;
                                    ader_update_with_losses(s, &g, &losses, &next_set, &proj, cfg)?
                                }
                            };
                            **s = step.state;
                            zeta = step.zeta;
                        }
                        Learner::Lqr(_) | Learner::Greedy => {}
                    }
                    set = next_set;
                    history = next_history;
                }
                Err(e) if is_empty_set(&e) => abort = Some(e.to_string()),
                Err(e) => return Err(e),
            }
        }
        log.steps.push(StepRecord {
            t,
            x: x.clone(),
            u,
            w,
            loss,
            zeta,
            safe_state,
            safe_input,
            decision: decision.flat(),
        });
        x = x_next;
        if abort.is_some() {
            log.aborted = abort;
            break;
        }
    }
    log.final_safe = scn.state_at(log.steps.len()).contains(&x, SAFETY_TOL);
    log.final_state = x;
    Ok(log)
}

/// Runs every seed in parallel; results come back in seed order.
pub fn run_seeds(scn: &Scenario, seeds: &[u64]) -> Result<Vec<RunLog>> {
    seeds.par_iter().map(|&s| run_scenario(scn, s)).collect()
}

/// The greedy comparator on the run's noise, in the scenario's mode, and
/// the regret against it.
pub fn evaluate_regret(scn: &Scenario, log: &RunLog) -> Result<(ComparatorTrajectory, f64)> {
    let sets = |t: usize, x: &DVector<f64>, h: &[DVector<f64>]| scn.safe_set(t, x, h);
    let problem = scn.greedy_problem(&sets);
    let comp = greedy_comparator(log, &problem, scn.params.comparator)?;
    let regret = dynamic_regret(log, &comp)?;
    Ok((comp, regret))
}
