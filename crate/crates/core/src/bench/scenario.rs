//! Scenario files.
//!
//! A scenario is a TOML document with the sections `[system]`,
//! `[constraints]`, `[loss]`, `[algorithm]`, `[noise]` and `[run]`. Every
//! algorithm and noise parameter has a default; see `scenarios/*.toml` for
//! annotated examples.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::ader::MetaLoss;
use crate::baselines::{lqr_gain, ComparatorMode};
use crate::bench::noise::{Distribution, NoiseSpec};
use crate::bench::pendulum::PendulumParams;
use crate::error::{Error, Result};
use crate::linalg::{matrix_from_rows, spectral_norm};
use crate::loss::QuadraticLoss;
use crate::policy::PolicyKind;
use crate::polytope::{NoiseBound, Polytope};
use crate::safeset::{CbfParams, Tightening};
use crate::system::{ControlAffineSystem, Dynamics, LtvSystem, Schedule};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    SafeOgd,
    SafeAder,
    Lqr,
    GreedyOracle,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::SafeOgd,
        Algorithm::SafeAder,
        Algorithm::Lqr,
        Algorithm::GreedyOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::SafeOgd => "safe-ogd",
            Algorithm::SafeAder => "safe-ader",
            Algorithm::Lqr => "lqr",
            Algorithm::GreedyOracle => "greedy-oracle",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::config(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Init {
    /// Projection of the zero decision onto the first safe set.
    #[default]
    Zero,
    /// Projection of the LQR gain of the (linearized) model.
    Lqr,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GradientMode {
    #[default]
    Analytic,
    FiniteDifference,
}

// ---------------------------------------------------------------- raw file

#[derive(Deserialize)]
#[serde(untagged)]
enum MatrixSpec {
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl MatrixSpec {
    fn build(&self) -> Result<DMatrix<f64>> {
        match self {
            MatrixSpec::Diagonal(d) => Ok(DMatrix::from_diagonal(&DVector::from_column_slice(d))),
            MatrixSpec::Full(rows) => matrix_from_rows(rows),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Segment {
    from: usize,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum SystemSection {
    Ltv {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        /// Later dynamics: `(A, B)` switch at step `from`.
        #[serde(default)]
        segments: Vec<Segment>,
        x0: Vec<f64>,
    },
    Pendulum {
        #[serde(default = "defaults::g")]
        g: f64,
        #[serde(default = "defaults::one")]
        m: f64,
        #[serde(default = "defaults::one")]
        l: f64,
        #[serde(default = "defaults::dt")]
        dt: f64,
        #[serde(default)]
        literal: bool,
        x0: Vec<f64>,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Phase {
    from: usize,
    state_lower: Vec<f64>,
    state_upper: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstraintSection {
    state_lower: Vec<f64>,
    state_upper: Vec<f64>,
    input_lower: Vec<f64>,
    input_upper: Vec<f64>,
    noise_bound: f64,
    /// State bounds that take effect from a given step on.
    #[serde(default)]
    schedule: Vec<Phase>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LossSection {
    q: MatrixSpec,
    r: MatrixSpec,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AlgorithmSection {
    #[serde(default = "defaults::algorithm")]
    name: String,
    #[serde(default = "defaults::policy")]
    policy: String,
    #[serde(default = "defaults::history")]
    history: usize,
    #[serde(default = "defaults::kappa")]
    kappa: f64,
    /// Stability margin of `‖A − BK‖₂ ≤ 1 − γ`; only for LTV gains.
    gamma: Option<f64>,
    /// DCBF rate; without it the successor must be robustly contained.
    alpha: Option<f64>,
    eta: Option<f64>,
    diameter: Option<f64>,
    grad_bound: Option<f64>,
    #[serde(default = "defaults::init")]
    init: String,
    #[serde(default = "defaults::tightening")]
    tightening: String,
    #[serde(default = "defaults::meta_loss")]
    meta_loss: String,
    #[serde(default = "defaults::comparator")]
    comparator: String,
    #[serde(default = "defaults::gradient")]
    gradient: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseSection {
    #[serde(default = "defaults::distribution")]
    distribution: String,
    #[serde(default = "defaults::yes")]
    center: bool,
    mean: Option<f64>,
    std: Option<f64>,
    low: Option<f64>,
    high: Option<f64>,
    shape: Option<f64>,
    scale: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    rate: Option<f64>,
    location: Option<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SeedSpec {
    List(Vec<u64>),
    Range(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    #[serde(default = "defaults::horizon")]
    horizon: usize,
    seeds: Option<SeedSpec>,
    out: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: Option<String>,
    system: SystemSection,
    constraints: ConstraintSection,
    loss: LossSection,
    algorithm: Option<AlgorithmSection>,
    noise: Option<NoiseSection>,
    run: Option<RunSection>,
}

mod defaults {
    pub fn g() -> f64 {
        10.0
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn dt() -> f64 {
        0.05
    }
    pub fn algorithm() -> String {
        "safe-ogd".into()
    }
    pub fn policy() -> String {
        "state-feedback".into()
    }
    pub fn history() -> usize {
        3
    }
    pub fn kappa() -> f64 {
        5.0
    }
    pub fn init() -> String {
        "zero".into()
    }
    pub fn tightening() -> String {
        "per-row".into()
    }
    pub fn meta_loss() -> String {
        "linearized".into()
    }
    pub fn comparator() -> String {
        "from-actual".into()
    }
    pub fn gradient() -> String {
        "analytic".into()
    }
    pub fn distribution() -> String {
        "uniform".into()
    }
    pub fn yes() -> bool {
        true
    }
    pub fn horizon() -> usize {
        200
    }
}

// ---------------------------------------------------------------- validated

#[derive(Clone, Debug)]
pub enum Plant {
    Ltv(LtvSystem),
    Pendulum(PendulumParams, ControlAffineSystem),
}

impl Plant {
    pub fn dynamics(&self) -> &dyn Dynamics {
        match self {
            Plant::Ltv(s) => s,
            Plant::Pendulum(_, s) => s,
        }
    }

    /// Model used for the LQR baseline and warm start.
    pub fn linear_model(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        match self {
            Plant::Ltv(s) => s.matrices(0),
            Plant::Pendulum(p, _) => Ok(p.linearization()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AlgorithmParams {
    pub algorithm: Algorithm,
    pub kind: PolicyKind,
    pub kappa: f64,
    pub gamma: Option<f64>,
    pub cbf: Option<CbfParams>,
    pub eta: Option<f64>,
    pub diameter: Option<f64>,
    pub grad_bound: Option<f64>,
    pub init: Init,
    pub tightening: Tightening,
    pub meta_loss: MetaLoss,
    pub comparator: ComparatorMode,
    pub gradient: GradientMode,
}

/// A validated scenario: everything a run needs except the seed.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub plant: Plant,
    pub x0: DVector<f64>,
    state_phases: Vec<(usize, Polytope)>,
    pub state_lower: Vec<f64>,
    pub state_upper: Vec<f64>,
    pub input: Polytope,
    pub noise_bound: NoiseBound,
    pub loss: QuadraticLoss,
    pub params: AlgorithmParams,
    pub distribution: Distribution,
    pub center_noise: bool,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
}

/// Parses `a..b` (exclusive) or `a..=b`.
pub fn parse_seed_range(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::config(format!("seed range `{s}` is not of the form a..b"));
    let (lo, hi, inclusive) = if let Some((a, b)) = s.split_once("..=") {
        (a, b, true)
    } else {
        let (a, b) = s.split_once("..").ok_or_else(bad)?;
        (a, b, false)
    };
    let lo: u64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: u64 = hi.trim().parse().map_err(|_| bad())?;
    let hi = if inclusive { hi + 1 } else { hi };
    if hi <= lo {
        return Err(Error::config(format!("seed range `{s}` is empty")));
    }
    Ok((lo..hi).collect())
}

fn pick<T>(value: &str, table: &[(&str, T)]) -> Result<T>
where
    T: Copy,
{
    table.iter().find(|(k, _)| *k == value).map(|(_, v)| *v).ok_or_else(|| {
        let options: Vec<&str> = table.iter().map(|(k, _)| *k).collect();
        Error::config(format!("`{value}` is not one of {}", options.join(", ")))
    })
}

fn build_distribution(n: &NoiseSection) -> Result<Distribution> {
    let base = Distribution::default_for(&n.distribution)?;
    Ok(match base {
        Distribution::Gaussian { mean, std } => Distribution::Gaussian {
            mean: n.mean.unwrap_or(mean),
            std: n.std.unwrap_or(std),
        },
        Distribution::Uniform { low, high } => Distribution::Uniform {
            low: n.low.unwrap_or(low),
            high: n.high.unwrap_or(high),
        },
        Distribution::Gamma { shape, scale } => Distribution::Gamma {
            shape: n.shape.unwrap_or(shape),
            scale: n.scale.unwrap_or(scale),
        },
        Distribution::Beta { alpha, beta, low, high } => Distribution::Beta {
            alpha: n.alpha.unwrap_or(alpha),
            beta: n.beta.unwrap_or(beta),
            low: n.low.unwrap_or(low),
            high: n.high.unwrap_or(high),
        },
        Distribution::Exponential { rate } => Distribution::Exponential {
            rate: n.rate.unwrap_or(rate),
        },
        Distribution::Weibull { shape, scale } => Distribution::Weibull {
            shape: n.shape.unwrap_or(shape),
            scale: n.scale.unwrap_or(scale),
        },
        Distribution::Laplace { location, scale } => Distribution::Laplace {
            location: n.location.unwrap_or(location),
            scale: n.scale.unwrap_or(scale),
        },
    })
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: ScenarioFile = toml::from_str(text).map_err(|e| Error::config(format!("scenario file: {e}")))?;
        Self::from_raw(raw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        let mut s = Self::from_toml_str(&text)?;
        if s.name.is_empty() {
            s.name = path
                .file_stem()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        Ok(s)
    }

    fn from_raw(raw: ScenarioFile) -> Result<Self> {
        let (plant, x0) = match raw.system {
            SystemSection::Ltv { a, b, segments, x0 } => {
                let (a0, b0) = (matrix_from_rows(&a)?, matrix_from_rows(&b)?);
                let sys = if segments.is_empty() {
                    LtvSystem::lti(a0, b0)?
                } else {
                    let mut switches = vec![(0usize, a0, b0)];
                    for s in &segments {
                        switches.push((s.from, matrix_from_rows(&s.a)?, matrix_from_rows(&s.b)?));
                    }
                    switches.sort_by_key(|s| s.0);
                    let (dim_x, dim_u) = (switches[0].1.nrows(), switches[0].2.ncols());
                    if switches
                        .iter()
                        .any(|s| s.1.shape() != (dim_x, dim_x) || s.2.shape() != (dim_x, dim_u))
                    {
                        return Err(Error::config("dynamics segments disagree in shape"));
                    }
                    let ka = switches.iter().map(|s| spectral_norm(&s.1)).fold(0.0, f64::max);
                    let kb = switches.iter().map(|s| spectral_norm(&s.2)).fold(0.0, f64::max);
                    let switches = Arc::new(switches);
                    let sa = Arc::clone(&switches);
                    let at = move |t: usize| sa.iter().rev().find(|s| s.0 <= t).expect("segment at 0").1.clone();
                    let bt = move |t: usize| {
                        switches
                            .iter()
                            .rev()
                            .find(|s| s.0 <= t)
                            .expect("segment at 0")
                            .2
                            .clone()
                    };
                    LtvSystem::new(
                        Schedule::Generator(Arc::new(at)),
                        Schedule::Generator(Arc::new(bt)),
                        ka,
                        kb,
                        dim_x,
                        dim_u,
                    )?
                };
                (Plant::Ltv(sys), x0)
            }
            SystemSection::Pendulum {
                g,
                m,
                l,
                dt,
                literal,
                x0,
            } => {
                if !(g.is_finite() && m > 0.0 && l > 0.0 && dt > 0.0) {
                    return Err(Error::config("pendulum needs finite g and positive m, l, dt"));
                }
                let p = PendulumParams { g, m, l, dt, literal };
                (Plant::Pendulum(p, p.system()?), x0)
            }
        };
        let dyn_ = plant.dynamics();
        let (dx, du) = (dyn_.dim_x(), dyn_.dim_u());
        if x0.len() != dx {
            return Err(Error::config(format!(
                "x0 has {} entries, the state has {dx}",
                x0.len()
            )));
        }

        let c = raw.constraints;
        if c.state_lower.len() != dx || c.state_upper.len() != dx {
            return Err(Error::config("state bounds do not match the state dimension"));
        }
        if c.input_lower.len() != du || c.input_upper.len() != du {
            return Err(Error::config("input bounds do not match the input dimension"));
        }
        let mut state_phases = vec![(0, Polytope::from_box(&c.state_lower, &c.state_upper)?)];
        for ph in &c.schedule {
            if ph.state_lower.len() != dx || ph.state_upper.len() != dx {
                return Err(Error::config("scheduled state bounds do not match the state dimension"));
            }
            state_phases.push((ph.from, Polytope::from_box(&ph.state_lower, &ph.state_upper)?));
        }
        state_phases.sort_by_key(|p| p.0);
        let input = Polytope::from_box(&c.input_lower, &c.input_upper)?;
        let noise_bound = NoiseBound::new(c.noise_bound)?;

        let loss = QuadraticLoss::new(raw.loss.q.build()?, raw.loss.r.build()?)?;
        if loss.q().nrows() != dx || loss.r().nrows() != du {
            return Err(Error::config("loss matrices do not match the system dimensions"));
        }

        let a = raw.algorithm.unwrap_or_else(|| toml::from_str("").expect("defaults"));
        let kind = match a.policy.as_str() {
            "state-feedback" => PolicyKind::StateFeedback,
            "direct-input" => PolicyKind::DirectInput,
            "disturbance-action" => {
                if a.history == 0 {
                    return Err(Error::config("disturbance-action history must be ≥ 1"));
                }
                PolicyKind::DisturbanceAction { horizon: a.history }
            }
            other => return Err(Error::config(format!("unknown policy `{other}`"))),
        };
        if !(a.kappa > 0.0) {
            return Err(Error::config(format!("κ must be positive, got {}", a.kappa)));
        }
        if let Some(g) = a.gamma {
            if !(g > 0.0 && g < 1.0) {
                return Err(Error::config(format!("γ must lie in (0, 1), got {g}")));
            }
            if !matches!(plant, Plant::Ltv(_)) || kind != PolicyKind::StateFeedback {
                return Err(Error::config("γ applies only to state-feedback gains on LTV systems"));
            }
        }
        for (name, v) in [("eta", a.eta), ("diameter", a.diameter), ("grad_bound", a.grad_bound)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::config(format!("{name} must be positive, got {v}")));
                }
            }
        }
        let params = AlgorithmParams {
            algorithm: a.name.parse()?,
            kind,
            kappa: a.kappa,
            gamma: a.gamma,
            cbf: a.alpha.map(CbfParams::new).transpose()?,
            eta: a.eta,
            diameter: a.diameter,
            grad_bound: a.grad_bound,
            init: pick(&a.init, &[("zero", Init::Zero), ("lqr", Init::Lqr)])?,
            tightening: pick(
                &a.tightening,
                &[
                    ("per-row", Tightening::PerRow),
                    ("whole-matrix", Tightening::WholeMatrix),
                ],
            )?,
            meta_loss: pick(
                &a.meta_loss,
                &[("linearized", MetaLoss::Linearized), ("full", MetaLoss::Full)],
            )?,
            comparator: pick(
                &a.comparator,
                &[
                    ("from-actual", ComparatorMode::FromActual),
                    ("coupled", ComparatorMode::Coupled),
                ],
            )?,
            gradient: pick(
                &a.gradient,
                &[
                    ("analytic", GradientMode::Analytic),
                    ("finite-difference", GradientMode::FiniteDifference),
                ],
            )?,
        };
        if params.init == Init::Lqr && kind != PolicyKind::StateFeedback {
            return Err(Error::config("init = \"lqr\" needs a state-feedback policy"));
        }

        let noise = raw.noise.unwrap_or_else(|| toml::from_str("").expect("defaults"));
        let distribution = build_distribution(&noise)?;
        NoiseSpec::new(distribution, noise_bound.value(), dx, 0, noise.center)?;

        let run = raw.run.unwrap_or_else(|| toml::from_str("").expect("defaults"));
        if run.horizon == 0 {
            return Err(Error::config("horizon must be ≥ 1"));
        }
        let seeds = match run.seeds {
            None => (0..5).collect(),
            Some(SeedSpec::List(v)) if !v.is_empty() => v,
            Some(SeedSpec::List(_)) => return Err(Error::config("empty seed list")),
            Some(SeedSpec::Range(r)) => parse_seed_range(&r)?,
        };

        Ok(Scenario {
            name: raw.name.unwrap_or_default(),
            plant,
            x0: DVector::from_vec(x0),
            state_phases,
            state_lower: c.state_lower,
            state_upper: c.state_upper,
            input,
            noise_bound,
            loss,
            params,
            distribution,
            center_noise: noise.center,
            horizon: run.horizon,
            seeds,
            out: run.out.unwrap_or_else(|| PathBuf::from("out")),
        })
    }

    pub fn dynamics(&self) -> &dyn Dynamics {
        self.plant.dynamics()
    }

    /// State polytope in force at step `t`.
    pub fn state_at(&self, t: usize) -> &Polytope {
        &self
            .state_phases
            .iter()
            .rev()
            .find(|p| p.0 <= t)
            .expect("phase at step 0 always exists")
            .1
    }

    /// True when the state constraints never change.
    pub fn time_invariant_constraints(&self) -> bool {
        self.state_phases.len() == 1
    }

    pub fn noise_spec(&self, seed: u64) -> Result<NoiseSpec> {
        NoiseSpec::new(
            self.distribution,
            self.noise_bound.value(),
            self.dynamics().dim_x(),
            seed,
            self.center_noise,
        )
    }

    /// Same scenario with another noise family at its default parameters.
    pub fn with_distribution(&self, name: &str) -> Result<Self> {
        Ok(Scenario {
            distribution: Distribution::default_for(name)?,
            ..self.clone()
        })
    }

    pub fn with_algorithm(&self, algorithm: Algorithm) -> Self {
        let mut s = self.clone();
        s.params.algorithm = algorithm;
        s
    }

    pub fn with_horizon(&self, horizon: usize) -> Self {
        Scenario {
            horizon,
            ..self.clone()
        }
    }

    /// Switches the pendulum to the equation exactly as printed.
    pub fn with_literal_pendulum(&self) -> Result<Self> {
        match &self.plant {
            Plant::Pendulum(p, _) => {
                let p = PendulumParams { literal: true, ..*p };
                Ok(Scenario {
                    plant: Plant::Pendulum(p, p.system()?),
                    ..self.clone()
                })
            }
            Plant::Ltv(_) => Err(Error::config("--literal-pendulum needs a pendulum scenario")),
        }
    }

    pub fn lqr_gain(&self) -> Result<DMatrix<f64>> {
        let (a, b) = self.plant.linear_model()?;
        lqr_gain(&a, &b, self.loss.q(), self.loss.r(), 1_000_000, 1e-12)
    }
}
