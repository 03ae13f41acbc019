//! Safe-Ader: a geometric grid of Safe-OGD base learners mixed by an
//! exponentially weighted meta-learner.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::frobenius_dot;
use crate::ogd::{ogd_step, OgdState};
use crate::policy::PolicyParams;
use crate::projection::ProjectionConfig;
use crate::safeset::SafeDecisionSet;

/// Smallest weight an expert can fall to; keeps every expert revivable.
pub const WEIGHT_FLOOR: f64 = 1e-300;

/// What the meta-learner charges each expert.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MetaLoss {
    /// `⟨∇f_t(K_t), K_{t,i} − K_t⟩`, one gradient per step.
    #[default]
    Linearized,
    /// `f_t(K_{t,i})`, evaluated by the caller for every expert.
    Full,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AderConfig {
    pub n: usize,
    pub etas: Vec<f64>,
    pub p1: Vec<f64>,
    pub epsilon: f64,
    pub horizon: usize,
    pub diameter: f64,
    pub grad_bound: f64,
}

/// Number of experts, step-size grid, prior and meta rate for horizon `T`.
///
/// ```
/// let cfg = safe_nsc::ader::make_ader_config(200, 1.0, 1.0).unwrap();
/// assert_eq!(cfg.n, 5);
/// assert_eq!(cfg.epsilon, 0.1);
/// ```
pub fn make_ader_config(horizon: usize, diameter: f64, grad_bound: f64) -> Result<AderConfig> {
    if horizon == 0 || !(diameter > 0.0 && diameter.is_finite()) || !(grad_bound > 0.0 && grad_bound.is_finite()) {
        return Err(Error::config(format!(
            "Ader needs T ≥ 1, finite D_f > 0, G_f > 0 (got {horizon}, {diameter}, {grad_bound})"
        )));
    }
    let t = horizon as f64;
    let n = (0.5 * (1.0 + 8.0 * t / 7.0).log2()).ceil() as usize + 1;
    let base = (7.0 * diameter * diameter / (2.0 * t * grad_bound * grad_bound)).sqrt();
    let etas = (0..n).map(|i| base * 2f64.powi(i as i32)).collect();
    let nf = n as f64;
    let p1 = (1..=n)
        .map(|i| {
            let i = i as f64;
            (nf + 1.0) / (nf * i * (i + 1.0))
        })
        .collect();
    let epsilon = (2.0 / (t * diameter * diameter * grad_bound * grad_bound)).sqrt();
    Ok(AderConfig {
        n,
        etas,
        p1,
        epsilon,
        horizon,
        diameter,
        grad_bound,
    })
}

#[derive(Clone, Debug)]
pub struct AderState {
    pub bases: Vec<OgdState>,
    pub weights: Vec<f64>,
    log_weights: Vec<f64>,
    pub combined: PolicyParams,
}

impl AderState {
    /// All experts start from `initial`, assumed to lie in `set`.
    pub fn new(cfg: &AderConfig, initial: PolicyParams, set: SafeDecisionSet) -> Result<Self> {
        if cfg.etas.len() != cfg.n || cfg.p1.len() != cfg.n || cfg.n == 0 {
            return Err(Error::config("Ader configuration lists have the wrong length"));
        }
        let bases = cfg
            .etas
            .iter()
            .map(|&eta| OgdState::new(initial.clone(), eta).map(|s| s.with_set(set.clone())))
            .collect::<Result<Vec<_>>>()?;
        let log_weights: Vec<f64> = cfg.p1.iter().map(|p| p.ln()).collect();
        let weights = normalize(&log_weights).1;
        let mut state = AderState {
            bases,
            weights,
            log_weights,
            combined: initial,
        };
        state.combined = ader_combine(&state)?;
        Ok(state)
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }
}

/// `K_t = Σ p_i K_{t,i}`.
pub fn ader_combine(state: &AderState) -> Result<PolicyParams> {
    let first = state
        .bases
        .first()
        .ok_or_else(|| Error::config("Ader state without experts"))?;
    if state.weights.len() != state.bases.len() {
        return Err(Error::dim("weights and experts differ in number"));
    }
    let shape = first.decision.theta.shape();
    let mut acc = DMatrix::zeros(shape.0, shape.1);
    for (b, &p) in state.bases.iter().zip(&state.weights) {
        if b.decision.theta.shape() != shape {
            return Err(Error::dim("experts disagree on decision shape"));
        }
        if p == 1.0 {
            // unit mass reproduces the expert bit for bit
            return Ok(b.decision.clone());
        }
        acc += &b.decision.theta * p;
    }
    Ok(first.decision.with_theta(acc))
}

/// `⟨grad, K_i − K⟩`.
pub fn surrogate_meta_loss(grad: &DMatrix<f64>, k_i: &DMatrix<f64>, k: &DMatrix<f64>) -> Result<f64> {
    if grad.shape() != k_i.shape() || k_i.shape() != k.shape() {
        return Err(Error::dim("meta-loss operands differ in shape"));
    }
    Ok(frobenius_dot(grad, &(k_i - k)))
}

/// Renormalizes log weights; returns them shifted so the largest is 0 and
/// floored, together with the probability vector.
fn normalize(log_w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = WEIGHT_FLOOR.ln();
    let shifted: Vec<f64> = log_w.iter().map(|l| l - max).collect();
    let lse = shifted.iter().map(|l| l.exp()).sum::<f64>().ln();
    let logs: Vec<f64> = shifted.iter().map(|l| (l - lse).max(floor)).collect();
    let w: Vec<f64> = logs.iter().map(|l| l.exp()).collect();
    let total: f64 = w.iter().sum();
    let w = w.into_iter().map(|x| x / total).collect();
    (logs, w)
}

/// Multiplicative-weights step in the log domain. Losses are shifted by their
/// minimum first, so a common offset cancels before it touches the weights.
pub fn reweight(log_w: &[f64], losses: &[f64], epsilon: f64) -> (Vec<f64>, Vec<f64>) {
    let min = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let updated: Vec<f64> = log_w
        .iter()
        .zip(losses)
        .map(|(l, loss)| l - epsilon * (loss - min))
        .collect();
    normalize(&updated)
}

/// Result of one Safe-Ader step.
#[derive(Clone, Debug)]
pub struct AderStep {
    pub state: AderState,
    /// Weight-averaged set variation of the experts.
    pub zeta: f64,
    pub meta_losses: Vec<f64>,
}

/// Linearized update: every expert steps on `⟨grad, ·⟩`, weights follow the
/// surrogate meta-losses.
pub fn ader_update(
    state: &AderState,
    grad: &DMatrix<f64>,
    next_set: &SafeDecisionSet,
    proj: &ProjectionConfig,
    cfg: &AderConfig,
) -> Result<AderStep> {
    let losses = state
        .bases
        .iter()
        .map(|b| surrogate_meta_loss(grad, &b.decision.theta, &state.combined.theta))
        .collect::<Result<Vec<_>>>()?;
    ader_update_with_losses(state, grad, &losses, next_set, proj, cfg)
}

/// Same as [`ader_update`] but with caller-supplied meta-losses, e.g. the full
/// loss of each expert.
pub fn ader_update_with_losses(
    state: &AderState,
    grad: &DMatrix<f64>,
    meta_losses: &[f64],
    next_set: &SafeDecisionSet,
    proj: &ProjectionConfig,
    cfg: &AderConfig,
) -> Result<AderStep> {
    if meta_losses.len() != state.bases.len() {
        return Err(Error::dim("one meta-loss per expert required"));
    }
    if meta_losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::numerical("non-finite meta-loss", f64::NAN));
    }
    let stepped = state
        .bases
        .par_iter()
        .map(|b| ogd_step(b, grad, next_set, proj))
        .collect::<Result<Vec<_>>>()?;
    let zeta = stepped.iter().zip(&state.weights).map(|((_, z), p)| z * p).sum();
    let (log_weights, weights) = reweight(&state.log_weights, meta_losses, cfg.epsilon);
    let mut next = AderState {
        bases: stepped.into_iter().map(|(s, _)| s).collect(),
        weights,
        log_weights,
        combined: state.combined.clone(),
    };
    next.combined = ader_combine(&next)?;
    Ok(AderStep {
        state: next,
        zeta,
        meta_losses: meta_losses.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::QuadraticLoss;
    use crate::ogd::{policy_grad, LossContext};
    use crate::policy::PolicyKind;
    use crate::polytope::Polytope;
    use crate::system::LtvSystem;
    use nalgebra::DVector;

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
    fn config_examples() {
        let cfg = make_ader_config(200, 1.0, 1.0).unwrap();
        assert_eq!(cfg.n, 5);
        let expect = [0.6, 0.2, 0.1, 0.06, 0.04];
        for (p, e) in cfg.p1.iter().zip(expect) {
            assert!((p - e).abs() < 1e-15);
        }
        assert!((cfg.p1.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((cfg.etas[0] - (7.0f64 / 400.0).sqrt()).abs() < 1e-16);
        assert!((cfg.etas[0] - 0.132288).abs() < 1e-6);
        for w in cfg.etas.windows(2) {
            assert_eq!(w[1] / w[0], 2.0);
        }
        assert_eq!(cfg.epsilon, 0.1);
        assert_eq!(make_ader_config(1, 1.0, 1.0).unwrap().n, 2);
        assert!(make_ader_config(0, 1.0, 1.0).is_err());
        assert!(make_ader_config(10, 0.0, 1.0).is_err());
    }

    #[test]
    fn combine_examples() {
        let cfg = make_ader_config(1, 1.0, 1.0).unwrap();
        assert_eq!(cfg.n, 2);
        let mut st = AderState::new(&cfg, gain(1.0), interval(0.0, 5.0)).unwrap();
        st.bases[1].decision = gain(3.0);
        st.weights = vec![0.5, 0.5];
        assert_eq!(ader_combine(&st).unwrap().theta[(0, 0)], 2.0);
        st.weights = vec![0.0, 1.0];
        assert_eq!(ader_combine(&st).unwrap().theta[(0, 0)], 3.0);

        let cfg = make_ader_config(200, 1.0, 1.0).unwrap();
        let st = AderState::new(&cfg, gain(0.7), interval(0.0, 5.0)).unwrap();
        assert!((st.combined.theta[(0, 0)] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn reweight_example_and_shift_invariance() {
        let log_w = [0.5f64.ln(), 0.5f64.ln()];
        let (_, p) = reweight(&log_w, &[0.0, 1.0], 0.1);
        let e = (-0.1f64).exp();
        assert!((p[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((p[0] - 0.52498).abs() < 1e-5 && (p[1] - 0.47502).abs() < 1e-5);

        let (_, shifted) = reweight(&log_w, &[7.0, 8.0], 0.1);
        assert_eq!(p, shifted);
        let (_, big) = reweight(&log_w, &[1e6, 1e6 + 1.0], 0.1);
        assert_eq!(p, big);

        let (_, same) = reweight(&log_w, &[3.0, 3.0], 0.1);
        assert_eq!(same, vec![0.5, 0.5]);
    }

    #[test]
    fn weight_floor_keeps_experts_alive() {
        let log_w = [0.0, 0.0];
        let (logs, p) = reweight(&log_w, &[0.0, 1e6], 1.0);
        assert!(p[1] > 0.0);
        assert!(logs[1] >= WEIGHT_FLOOR.ln());
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let cfg = make_ader_config(50, 10.0, 20.0).unwrap();
        let set = interval(0.0, 2.5);
        let st = AderState::new(&cfg, gain(1.2), set.clone()).unwrap();
        let out = ader_update(&st, &DMatrix::zeros(1, 1), &set, &ProjectionConfig::default(), &cfg).unwrap();
        assert_eq!(out.state.weights, st.weights);
        assert_eq!(out.zeta, 0.0);
        for b in &out.state.bases {
            assert_eq!(b.decision.theta[(0, 0)], 1.2);
        }
    }

    #[test]
    fn simplex_and_feasibility_hold_along_a_run() {
        let sys = LtvSystem::scalar(0.9, 0.6);
        let c = QuadraticLoss::diagonal(&[1.0], &[1.0]).unwrap();
        let cfg = make_ader_config(100, 10.0, 25.0).unwrap();
        let proj = ProjectionConfig::default();
        let mut set = interval(-5.0, 5.0);
        let mut st = AderState::new(&cfg, gain(0.0), set.clone()).unwrap();
        let mut x = DVector::from_element(1, 1.0);
        for t in 0..100 {
            let w = DVector::from_element(1, ((t * 37 % 11) as f64 - 5.0) / 10.0);
            let ctx = LossContext {
                dynamics: &sys,
                t,
                x: &x,
                w: &w,
                history: &[],
            };
            let g = policy_grad(&c, &ctx, &st.combined).unwrap();
            let u = -st.combined.theta[(0, 0)] * x[0];
            x = DVector::from_element(1, 0.9 * x[0] + 0.6 * u + w[0]);
            set = if t % 10 == 9 {
                interval(-1.0 - 0.1 * (t as f64 / 10.0), 2.5)
            } else {
                set
            };
            st = ader_update(&st, &g, &set, &proj, &cfg).unwrap().state;
            assert!((st.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(set.max_violation(&st.combined.flat()).unwrap() <= 1e-7);
        }
    }

    #[test]
    fn single_expert_matches_ogd() {
        let sys = LtvSystem::scalar(0.9, 0.6);
        let c = QuadraticLoss::diagonal(&[1.0], &[1.0]).unwrap();
        let mut cfg = make_ader_config(100, 10.0, 25.0).unwrap();
        cfg.n = 1;
        cfg.etas.truncate(1);
        cfg.p1 = vec![1.0];
        let proj = ProjectionConfig::default();
        let set = interval(0.0, 2.5);
        let mut ader = AderState::new(&cfg, gain(0.0), set.clone()).unwrap();
        let mut ogd = OgdState::new(gain(0.0), cfg.etas[0]).unwrap().with_set(set.clone());
        let x = DVector::from_element(1, 1.5);
        for t in 0..50 {
            let w = DVector::from_element(1, 0.01 * t as f64);
            let ctx = LossContext {
                dynamics: &sys,
                t,
                x: &x,
                w: &w,
                history: &[],
            };
            let g = policy_grad(&c, &ctx, &ogd.decision).unwrap();
            assert_eq!(g, policy_grad(&c, &ctx, &ader.combined).unwrap());
            ogd = ogd_step(&ogd, &g, &set, &proj).unwrap().0;
            ader = ader_update(&ader, &g, &set, &proj, &cfg).unwrap().state;
            assert_eq!(ogd.decision.theta, ader.combined.theta);
        }
    }
}
