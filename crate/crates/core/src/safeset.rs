//! Time-varying safe decision sets.
//!
//! Given the current state, these builders return the convex set of policy
//! parameters whose input keeps the successor inside the next state polytope
//! for every noise realization in the ball `‖w‖ ≤ W`:
//!
//! * gain sets for LTV systems (state rows robustly tightened, input rows,
//!   `‖K‖ ≤ κ`, closed-loop contraction `‖A_t − B_t K‖ ≤ 1 − γ`);
//! * DCBF input sets for control-affine systems, where each state row `i`
//!   acts as a barrier `h_i(x) = l_i − L_i x` and the next-step condition is
//!   `h_i(x⁺) ≥ (1 − α) h_i(x)` for the worst admissible noise.
//!
//! Every constraint is linear in the parameters because the input is, so the
//! sets are polyhedra intersected with norm balls.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::linalg::{check_len, flatten, spectral_norm, unflatten};
use crate::policy::PolicyKind;
use crate::polytope::{NoiseBound, NormBound, Polytope};
use crate::projection::{project_set, ProjectionConfig};
use crate::system::{ControlAffineSystem, Dynamics, LtvSystem};

/// Membership tolerance used when certifying a witness.
pub const WITNESS_TOL: f64 = 1e-7;

/// Rows whose coefficients are this small are treated as constant.
const ZERO_ROW: f64 = 1e-14;

/// `‖A − B K‖₂ ≤ radius`.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityConstraint {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub radius: f64,
}

impl StabilityConstraint {
    pub fn closed_loop_norm(&self, k: &DMatrix<f64>) -> f64 {
        spectral_norm(&(&self.a - &self.b * k))
    }

    pub fn violation(&self, k: &DMatrix<f64>) -> f64 {
        (self.closed_loop_norm(k) - self.radius).max(0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Construction {
    GainLemma,
    DcbfInput,
    DcbfPolicy,
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub construction: Construction,
    pub step: usize,
}

/// How the noise term `sup_{‖w‖≤W} L_i w` is bounded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Tightening {
    /// `W ‖L_i‖₂` for each row (exact worst case).
    #[default]
    PerRow,
    /// `W ‖L‖₂` for every row (more conservative).
    WholeMatrix,
}

impl Tightening {
    fn margins(self, l: &DMatrix<f64>, w: NoiseBound) -> DVector<f64> {
        let w = w.value();
        match self {
            Tightening::PerRow => DVector::from_iterator(l.nrows(), l.row_iter().map(|r| w * r.norm())),
            Tightening::WholeMatrix => DVector::from_element(l.nrows(), w * spectral_norm(l)),
        }
    }
}

/// DCBF decay rate `α ∈ (0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CbfParams {
    alpha: f64,
}

impl CbfParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::config(format!("DCBF rate α must lie in (0, 1], got {alpha}")));
        }
        Ok(CbfParams { alpha })
    }

    pub fn alpha(self) -> f64 {
        self.alpha
    }
}

/// Feasible set for the (flattened, row-major) decision variable.
#[derive(Clone, Debug)]
pub struct SafeDecisionSet {
    shape: (usize, usize),
    pub halfspaces: Polytope,
    pub norm_bound: Option<NormBound>,
    pub stability: Option<StabilityConstraint>,
    pub provenance: Provenance,
}

impl SafeDecisionSet {
    pub fn new(
        shape: (usize, usize),
        halfspaces: Polytope,
        norm_bound: Option<NormBound>,
        stability: Option<StabilityConstraint>,
        provenance: Provenance,
    ) -> Result<Self> {
        let dim = shape.0 * shape.1;
        if halfspaces.dim() != dim {
            return Err(Error::dim(format!(
                "halfspaces live in dimension {}, decision has {dim} entries",
                halfspaces.dim()
            )));
        }
        if let Some(NormBound::Spectral(b)) = &norm_bound {
            if b.dim() != dim {
                return Err(Error::dim("spectral ball does not match the decision shape"));
            }
        }
        if let Some(s) = &stability {
            if s.b.ncols() != shape.0 || s.a.ncols() != shape.1 || s.b.nrows() != s.a.nrows() {
                return Err(Error::dim("stability constraint does not match the decision shape"));
            }
        }
        Ok(SafeDecisionSet {
            shape,
            halfspaces,
            norm_bound,
            stability,
            provenance,
        })
    }

    /// Halfspaces only, tagged as a custom construction.
    pub fn from_polytope(shape: (usize, usize), halfspaces: Polytope) -> Result<Self> {
        Self::new(
            shape,
            halfspaces,
            None,
            None,
            Provenance {
                construction: Construction::Custom,
                step: 0,
            },
        )
    }

    pub fn with_norm_bound(mut self, bound: NormBound) -> Self {
        self.norm_bound = Some(bound);
        self
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.0 * self.shape.1
    }

    pub fn max_violation(&self, z: &DVector<f64>) -> Result<f64> {
        let mut worst = self.halfspaces.max_violation(z)?;
        if let Some(b) = &self.norm_bound {
            worst = worst.max(b.violation(z)?);
        }
        if let Some(s) = &self.stability {
            worst = worst.max(s.violation(&unflatten(z, self.shape.0, self.shape.1)?));
        }
        Ok(worst)
    }

    pub fn contains(&self, z: &DVector<f64>, tol: f64) -> bool {
        self.max_violation(z).is_ok_and(|v| v <= tol)
    }

    pub fn contains_matrix(&self, k: &DMatrix<f64>, tol: f64) -> bool {
        k.shape() == self.shape && self.contains(&flatten(k), tol)
    }

    /// Equality of the constraint description, ignoring provenance.
    pub fn same_description(&self, other: &SafeDecisionSet) -> bool {
        self.shape == other.shape
            && self.halfspaces.normals() == other.halfspaces.normals()
            && self.halfspaces.bounds() == other.halfspaces.bounds()
            && self.norm_bound == other.norm_bound
            && self.stability == other.stability
    }
}

/// Inputs for [`build_policy_set`], the general constructor behind the
/// named builders.
pub struct PolicySetRequest<'a> {
    pub dynamics: &'a dyn Dynamics,
    pub t: usize,
    pub kind: PolicyKind,
    pub x_t: &'a DVector<f64>,
    /// Past noise, most recent first (disturbance-action policies only).
    pub history: &'a [DVector<f64>],
    pub state_con_next: &'a Polytope,
    pub input_con: &'a Polytope,
    pub noise: NoiseBound,
    pub kappa: f64,
    /// DCBF rate and the current state polytope. Without it the state rows
    /// require plain robust containment of the successor.
    pub dcbf: Option<(CbfParams, &'a Polytope)>,
    pub stability: Option<StabilityConstraint>,
    pub tightening: Tightening,
}

/// Builds the safe set for any linear policy parameterization and checks that
/// it is nonempty.
pub fn build_policy_set(req: &PolicySetRequest<'_>) -> Result<SafeDecisionSet> {
    let dyn_ = req.dynamics;
    let (dim_x, dim_u) = (dyn_.dim_x(), dyn_.dim_u());
    check_len("state", req.x_t, dim_x)?;
    if req.state_con_next.dim() != dim_x || req.input_con.dim() != dim_u {
        return Err(Error::dim("constraint polytopes do not match the system dimensions"));
    }
    let shape = req.kind.param_shape(dim_u, dim_x);
    let phi = req.kind.input_map(dim_u, dim_x, req.x_t, req.history, true)?;
    let drift = dyn_.drift(req.t, req.x_t)?;
    let g = dyn_.input_matrix(req.t, req.x_t)?;

    let l_next = req.state_con_next.normals();
    let mut rhs_state = req.state_con_next.bounds() - l_next * &drift - req.tightening.margins(l_next, req.noise);
    if let Some((cbf, now)) = &req.dcbf {
        if now.rows() != req.state_con_next.rows() || now.dim() != dim_x {
            return Err(Error::dim("current and next state polytopes must pair row by row"));
        }
        let barrier = now.slack(req.x_t)?;
        rhs_state -= barrier * (1.0 - cbf.alpha());
    }
    let coef_state = l_next * &g * &phi;
    let coef_input = req.input_con.normals() * &phi;

    let construction = match (&req.dcbf, req.kind) {
        (None, _) => Construction::GainLemma,
        (Some(_), PolicyKind::DirectInput) => Construction::DcbfInput,
        (Some(_), _) => Construction::DcbfPolicy,
    };
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let all_rows = coef_state
        .row_iter()
        .zip(rhs_state.iter())
        .chain(coef_input.row_iter().zip(req.input_con.bounds().iter()));
    for (idx, (row, &rhs)) in all_rows.enumerate() {
        if row.norm() <= ZERO_ROW * (1.0 + rhs.abs()) {
            // constant row: 0 ≤ rhs
            if rhs < -1e-12 {
                return Err(Error::SafeSetEmpty {
                    step: req.t,
                    detail: format!("row {idx} requires 0 ≤ {rhs:e} independently of the decision"),
                });
            }
            continue;
        }
        rows.push((row.iter().copied().collect(), rhs));
    }
    let n = shape.0 * shape.1;
    let normals = DMatrix::from_fn(rows.len(), n, |i, j| rows[i].0[j]);
    let bounds = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    let set = SafeDecisionSet::new(
        shape,
        Polytope::new(normals, bounds)?,
        req.kind.norm_bound(req.kappa, dim_u, dim_x),
        req.stability.clone(),
        Provenance {
            construction,
            step: req.t,
        },
    )?;
    match check_nonempty(&set, &ProjectionConfig::default())? {
        Some(_) => Ok(set),
        None => Err(Error::SafeSetEmpty {
            step: req.t,
            detail: format!("{construction:?} set has no feasible point"),
        }),
    }
}

/// Parameters of the gain set beyond the system and constraints.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GainSetParams {
    pub kappa: f64,
    pub gamma: f64,
    pub tightening: Tightening,
}

impl GainSetParams {
    pub fn new(kappa: f64, gamma: f64) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(Error::config(format!("κ must be positive, got {kappa}")));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::config(format!("γ must lie in (0, 1), got {gamma}")));
        }
        Ok(GainSetParams {
            kappa,
            gamma,
            tightening: Tightening::PerRow,
        })
    }
}

/// Safe set of state-feedback gains `K` (with `u = −K x_t`) for an LTV system.
pub fn build_gain_set(
    sys: &LtvSystem,
    t: usize,
    x_t: &DVector<f64>,
    state_con_next: &Polytope,
    input_con: &Polytope,
    noise: NoiseBound,
    params: &GainSetParams,
) -> Result<SafeDecisionSet> {
    let (a, b) = sys.matrices(t)?;
    build_policy_set(&PolicySetRequest {
        dynamics: sys,
        t,
        kind: PolicyKind::StateFeedback,
        x_t,
        history: &[],
        state_con_next,
        input_con,
        noise,
        kappa: params.kappa,
        dcbf: None,
        stability: Some(StabilityConstraint {
            a,
            b,
            radius: 1.0 - params.gamma,
        }),
        tightening: params.tightening,
    })
}

/// DCBF-tightened safe input set for a control-affine system.
#[allow(clippy::too_many_arguments)]
pub fn build_input_set_dcbf(
    sys: &ControlAffineSystem,
    x_t: &DVector<f64>,
    state_con_now: &Polytope,
    state_con_next: &Polytope,
    input_con: &Polytope,
    noise: NoiseBound,
    cbf: CbfParams,
    tightening: Tightening,
) -> Result<SafeDecisionSet> {
    build_policy_set(&PolicySetRequest {
        dynamics: sys,
        t: 0,
        kind: PolicyKind::DirectInput,
        x_t,
        history: &[],
        state_con_next,
        input_con,
        noise,
        kappa: f64::INFINITY,
        dcbf: Some((cbf, state_con_now)),
        stability: None,
        tightening,
    })
}

/// Projects the origin onto `set` and certifies the result.
///
/// Returns the witness when the set is nonempty, `None` when it is empty.
pub fn check_nonempty(set: &SafeDecisionSet, cfg: &ProjectionConfig) -> Result<Option<DVector<f64>>> {
    match project_set(&DVector::zeros(set.dim()), set, cfg) {
        Ok(p) if set.contains(&p, WITNESS_TOL) => Ok(Some(p)),
        Ok(_) | Err(Error::SafeSetEmpty { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Deterministic noise directions on the unit sphere used to probe the
/// successor: axis directions, evenly spaced angles in 2-D, and seeded
/// random directions in higher dimension.
fn sphere_directions(dim: usize, n_samples: usize) -> Vec<DVector<f64>> {
    let mut dirs = Vec::new();
    for i in 0..dim {
        let mut e = DVector::zeros(dim);
        e[i] = 1.0;
        dirs.push(e.clone());
        dirs.push(-e);
    }
    if dim == 2 {
        for k in 0..n_samples {
            let th = std::f64::consts::TAU * k as f64 / n_samples as f64;
            dirs.push(DVector::from_column_slice(&[th.cos(), th.sin()]));
        }
    } else if dim > 2 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5afe);
        for _ in 0..n_samples {
            let v = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
            if v.norm() > 1e-9 {
                dirs.push(v.normalize());
            }
        }
    }
    dirs
}

/// Smallest state-row slack of the successor over sampled noise on the
/// sphere `‖w‖ = W` (including each row's worst-case direction) and `w = 0`.
/// Nonnegative means the input is safe against every sampled realization.
pub fn worst_case_successor_margin(
    dynamics: &dyn Dynamics,
    t: usize,
    x_t: &DVector<f64>,
    u: &DVector<f64>,
    state_con_next: &Polytope,
    noise: NoiseBound,
    n_samples: usize,
) -> Result<f64> {
    let dim = dynamics.dim_x();
    let nominal = dynamics.step(t, x_t, u, &DVector::zeros(dim))?;
    let mut noises = vec![DVector::zeros(dim)];
    let w = noise.value();
    if w > 0.0 {
        for d in sphere_directions(dim, n_samples.max(2)) {
            noises.push(d * w);
        }
        for row in state_con_next.normals().row_iter() {
            let r = row.transpose();
            if r.norm() > 0.0 {
                noises.push(r.normalize() * w);
            }
        }
    }
    let mut margin = f64::INFINITY;
    for wv in &noises {
        let slack = state_con_next.slack(&(&nominal + wv))?;
        margin = margin.min(slack.min());
    }
    Ok(margin)
}
