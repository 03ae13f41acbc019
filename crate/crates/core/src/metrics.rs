//! Run logs and the evaluation quantities computed from them.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One closed-loop step: the state the decision was taken in, what was
/// applied, and what it cost.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub w: DVector<f64>,
    /// `c_t(x_{t+1}, u_t)`.
    pub loss: f64,
    pub zeta: f64,
    /// `x_t` lies in the step's state polytope.
    pub safe_state: bool,
    /// `u_t` lies in the step's input polytope.
    pub safe_input: bool,
    /// Flattened policy parameters used at this step.
    pub decision: DVector<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunMeta {
    pub scenario: String,
    pub algorithm: String,
    pub noise: String,
    pub seed: u64,
    pub horizon: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunLog {
    pub meta: RunMeta,
    pub steps: Vec<StepRecord>,
    /// State after the last step.
    pub final_state: DVector<f64>,
    pub final_safe: bool,
    /// Reason the run stopped early, if it did.
    pub aborted: Option<String>,
}

impl RunLog {
    pub fn new(meta: RunMeta, x0: DVector<f64>) -> Self {
        RunLog {
            meta,
            steps: Vec::new(),
            final_state: x0,
            final_safe: true,
            aborted: None,
        }
    }

    pub fn cumulative_loss(&self) -> f64 {
        self.steps.iter().fold(0.0, |acc, s| acc + s.loss)
    }

    pub fn losses(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.loss).collect()
    }

    /// Every recorded state and input respected its constraints and the run
    /// finished.
    pub fn is_safe(&self) -> bool {
        self.aborted.is_none() && self.final_safe && self.steps.iter().all(|s| s.safe_state && s.safe_input)
    }

    /// Realized states `x_1, …, x_{T+1}`.
    pub fn states(&self) -> Vec<DVector<f64>> {
        let mut xs: Vec<_> = self.steps.iter().map(|s| s.x.clone()).collect();
        xs.push(self.final_state.clone());
        xs
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparatorStep {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub decision: DMatrix<f64>,
    pub loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ComparatorTrajectory {
    pub steps: Vec<ComparatorStep>,
}

impl ComparatorTrajectory {
    pub fn cumulative_loss(&self) -> f64 {
        self.steps.iter().fold(0.0, |acc, s| acc + s.loss)
    }
}

/// `Σ c_t(x_{t+1}, u_t) − Σ c_t(x*_{t+1}, u*_t)`.
pub fn dynamic_regret(log: &RunLog, comp: &ComparatorTrajectory) -> Result<f64> {
    if log.steps.len() != comp.steps.len() {
        return Err(Error::dim(format!(
            "run has {} steps, comparator {}",
            log.steps.len(),
            comp.steps.len()
        )));
    }
    Ok(log.steps.iter().zip(&comp.steps).map(|(a, b)| a.loss - b.loss).sum())
}

/// Path length `C_T = Σ_{t≥2} ‖θ*_{t−1} − θ*_t‖_F` of the comparator.
pub fn path_length_ct(comp: &ComparatorTrajectory) -> f64 {
    comp.steps
        .windows(2)
        .fold(0.0, |acc, w| acc + (&w[0].decision - &w[1].decision).norm())
}

/// Set variation `S_T = Σ ζ_t`.
pub fn set_variation_st(log: &RunLog) -> f64 {
    log.steps.iter().fold(0.0, |acc, s| acc + s.zeta)
}

/// Fraction of runs that stayed safe throughout.
pub fn safety_rate(logs: &[RunLog]) -> Result<f64> {
    if logs.is_empty() {
        return Err(Error::config("safety rate of zero runs"));
    }
    Ok(logs.iter().filter(|l| l.is_safe()).count() as f64 / logs.len() as f64)
}

/// Sample mean and (n−1) standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
