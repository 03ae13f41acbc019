//! Euclidean projection onto safe decision sets.
//!
//! The building blocks are closed-form projections onto a halfspace, a
//! euclidean ball and a spectral-norm ball, plus the contraction constraint
//! `‖A − B K‖ ≤ r`. [`project_set`] combines them with Dykstra's algorithm,
//! which (unlike plain alternating projections) converges to the projection
//! itself rather than to some feasible point. Two shortcuts make the common
//! cases exact:
//!
//! * scalar decisions reduce to an interval and are clipped;
//! * when the norm and contraction constraints are inactive at the
//!   projection onto the polyhedral part, an active-set solve on the
//!   halfspaces gives the answer directly (KKT certified).
//!
//! [`brute_force_project`] and [`enumerate_project`] are independent oracles
//! for tests.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{flatten, spectral_norm, unflatten};
use crate::polytope::{NormBound, Polytope, SpectralBall};
use crate::safeset::{SafeDecisionSet, StabilityConstraint};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionConfig {
    pub max_iters: usize,
    /// Bound on both the final constraint violation and the last iterate movement.
    pub tol: f64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            max_iters: 5000,
            tol: 1e-8,
        }
    }
}

impl ProjectionConfig {
    pub fn new(max_iters: usize, tol: f64) -> Result<Self> {
        if max_iters == 0 || !(tol > 0.0) {
            return Err(Error::config(format!(
                "projection needs max_iters ≥ 1 and tol > 0 (got {max_iters}, {tol})"
            )));
        }
        Ok(ProjectionConfig { max_iters, tol })
    }
}

pub fn project_halfspace(z: &DVector<f64>, row: &DVector<f64>, bound: f64) -> Result<DVector<f64>> {
    if row.len() != z.len() {
        return Err(Error::dim("halfspace normal and point differ in length"));
    }
    let nn = row.norm_squared();
    if nn == 0.0 {
        return Err(Error::DegenerateConstraint);
    }
    let excess = row.dot(z) - bound;
    if excess <= 0.0 {
        return Ok(z.clone());
    }
    Ok(z - row * (excess / nn))
}

pub fn project_euclidean_ball(z: &DVector<f64>, r: f64) -> DVector<f64> {
    let n = z.norm();
    if n <= r {
        z.clone()
    } else {
        z * (r / n)
    }
}

/// Clips the singular values of `k` at `r`.
pub fn project_spectral_ball(k: &DMatrix<f64>, r: f64) -> Result<DMatrix<f64>> {
    if k.nrows() == 1 || k.ncols() == 1 || k.is_empty() {
        // the spectral norm of a vector is its euclidean norm
        let n = k.norm();
        return Ok(if n <= r { k.clone() } else { k * (r / n) });
    }
    let mut svd = k
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::numerical("SVD did not converge", f64::NAN))?;
    if svd.singular_values.iter().all(|&s| s <= r) {
        return Ok(k.clone());
    }
    svd.singular_values.apply(|s| *s = s.min(r));
    svd.recompose()
        .map_err(|e| Error::numerical(format!("SVD recomposition failed: {e}"), f64::NAN))
}

/// Blockwise spectral projection of a flattened `rows × (blocks·cols)` matrix.
pub fn project_spectral_blocks(z: &DVector<f64>, ball: &SpectralBall) -> Result<DVector<f64>> {
    let mut m = unflatten(z, ball.rows, ball.cols * ball.blocks)?;
    for k in 0..ball.blocks {
        let block = m.columns(k * ball.cols, ball.cols).into_owned();
        let p = project_spectral_ball(&block, ball.radius)?;
        m.columns_mut(k * ball.cols, ball.cols).copy_from(&p);
    }
    Ok(flatten(&m))
}

/// Square `B` with `Bᵀ B = c I` for some `c > 0`: then `K ↦ A − B K` is a
/// scaled isometry onto the whole matrix space and the projection has a
/// closed form.
fn scaled_orthonormal(b: &DMatrix<f64>) -> Option<f64> {
    if !b.is_square() || b.ncols() == 0 {
        return None;
    }
    let g = b.transpose() * b;
    let c = g.trace() / g.nrows() as f64;
    if c <= 0.0 {
        return None;
    }
    let dev = (&g - DMatrix::identity(g.nrows(), g.ncols()) * c).abs().max();
    (dev <= 1e-12 * c).then_some(c)
}

/// Frobenius-nearest `K′` to `k` with `‖A − B K′‖₂ ≤ r`.
///
/// Closed form when `Bᵀ B = c I` (in particular scalar `B ≠ 0`); otherwise
/// ADMM on the splitting `M = A − B K`, which converges to the exact
/// projection.
pub fn project_affine_spectral(
    k: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: f64,
    cfg: &ProjectionConfig,
) -> Result<DMatrix<f64>> {
    if b.nrows() != a.nrows() || k.nrows() != b.ncols() || k.ncols() != a.ncols() {
        return Err(Error::dim("contraction constraint: A, B and K are not conformable"));
    }
    let m0 = a - b * k;
    if spectral_norm(&m0) <= r {
        return Ok(k.clone());
    }
    if let Some(c) = scaled_orthonormal(b) {
        let clipped = project_spectral_ball(&m0, r)?;
        return Ok(k + b.transpose() * (m0 - clipped) / c);
    }

    let bn = spectral_norm(b);
    if bn == 0.0 {
        return Err(Error::SafeSetEmpty {
            step: 0,
            detail: format!("‖A‖ = {} exceeds {r} and B = 0", spectral_norm(a)),
        });
    }
    let rho = 1.0 / (bn * bn);
    let bt = b.transpose();
    let lhs = DMatrix::identity(b.ncols(), b.ncols()) + &bt * b * rho;
    let chol = lhs
        .cholesky()
        .ok_or_else(|| Error::numerical("ADMM system is not positive definite", f64::NAN))?;
    let mut kk = k.clone();
    let mut m = project_spectral_ball(&m0, r)?;
    let mut u = DMatrix::zeros(a.nrows(), a.ncols());
    let inner_tol = cfg.tol * 1e-2;
    for _ in 0..cfg.max_iters.saturating_mul(20) {
        kk = chol.solve(&(k + &bt * (a - &m + &u) * rho));
        let m_prev = m.clone();
        let bk = b * &kk;
        m = project_spectral_ball(&(a - &bk + &u), r)?;
        let resid = a - &bk - &m;
        u += &resid;
        let dual = (&bt * (&m - &m_prev)).norm() * rho;
        if resid.norm() < inner_tol && dual < inner_tol {
            return Ok(kk);
        }
    }
    let violation = (spectral_norm(&(a - b * &kk)) - r).max(0.0);
    Err(Error::numerical("contraction projection did not converge", violation))
}

fn is_scalar_interval(set: &SafeDecisionSet) -> bool {
    set.dim() == 1
        && set
            .stability
            .as_ref()
            .is_none_or(|s| s.a.shape() == (1, 1) && s.b.shape() == (1, 1))
}

/// The interval `[lo, hi]` described by a scalar decision set.
///
/// Errors with `Config` when the set is not scalar and with `SafeSetEmpty`
/// when the interval is empty beyond rounding.
pub fn scalar_interval(set: &SafeDecisionSet) -> Result<(f64, f64)> {
    if !is_scalar_interval(set) {
        return Err(Error::config("set is not a scalar interval"));
    }
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    let empty = |detail: String| Error::SafeSetEmpty {
        step: set.provenance.step,
        detail,
    };
    for (row, &b) in set.halfspaces.normals().row_iter().zip(set.halfspaces.bounds().iter()) {
        let a = row[0];
        if a > 0.0 {
            hi = hi.min(b / a);
        } else if a < 0.0 {
            lo = lo.max(b / a);
        } else if b < 0.0 {
            return Err(empty(format!("constant row 0 ≤ {b:e}")));
        }
    }
    if let Some(nb) = &set.norm_bound {
        let r = nb.radius();
        lo = lo.max(-r);
        hi = hi.min(r);
    }
    if let Some(s) = &set.stability {
        let (a, b, r) = (s.a[(0, 0)], s.b[(0, 0)], s.radius);
        if b == 0.0 {
            if a.abs() > r {
                return Err(empty(format!("|A| = {} exceeds {r} and B = 0", a.abs())));
            }
        } else {
            let (e1, e2) = ((a - r) / b, (a + r) / b);
            lo = lo.max(e1.min(e2));
            hi = hi.min(e1.max(e2));
        }
    }
    if lo > hi {
        let scale = 1.0 + lo.abs().max(hi.abs());
        if lo - hi <= 1e-12 * scale {
            let mid = 0.5 * (lo + hi);
            return Ok((mid, mid));
        }
        return Err(empty(format!("interval [{lo}, {hi}] is empty")));
    }
    Ok((lo, hi))
}

/// One convex piece of the set, as seen by Dykstra's algorithm.
enum Piece<'a> {
    /// All halfspaces at once, projected exactly by the active-set solver.
    Polyhedron(&'a Polytope),
    /// Halfspaces and a euclidean ball, projected exactly together.
    PolyhedronBall(&'a Polytope, f64),
    Spectral(&'a SpectralBall),
    Contraction(&'a StabilityConstraint, (usize, usize)),
}

impl Piece<'_> {
    fn project(&self, z: &DVector<f64>, cfg: &ProjectionConfig) -> Result<DVector<f64>> {
        match self {
            Piece::Polyhedron(p) => {
                polyhedral_projection(z, p.normals(), p.bounds()).ok_or_else(|| Error::SafeSetEmpty {
                    step: 0,
                    detail: "the halfspaces have no common point".into(),
                })
            }
            Piece::PolyhedronBall(p, r) => {
                project_polyhedron_ball(z, p.normals(), p.bounds(), *r).ok_or_else(|| Error::SafeSetEmpty {
                    step: 0,
                    detail: "the halfspaces and the norm ball have no common point".into(),
                })
            }
            Piece::Spectral(ball) => project_spectral_blocks(z, ball),
            Piece::Contraction(s, (rows, cols)) => {
                let k = unflatten(z, *rows, *cols)?;
                Ok(flatten(&project_affine_spectral(&k, &s.a, &s.b, s.radius, cfg)?))
            }
        }
    }
}

fn pieces(set: &SafeDecisionSet) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    if let Some(r) = vector_ball_radius(set) {
        out.push(Piece::PolyhedronBall(&set.halfspaces, r));
    } else {
        if set.halfspaces.rows() > 0 {
            out.push(Piece::Polyhedron(&set.halfspaces));
        }
        if let Some(NormBound::Spectral(b)) = &set.norm_bound {
            out.push(Piece::Spectral(b));
        }
    }
    if let Some(s) = &set.stability {
        out.push(Piece::Contraction(s, set.shape()));
    }
    out
}

/// Radius of the norm bound when it is a plain euclidean ball on the
/// flattened decision (a spectral bound on a single row or column is one).
fn vector_ball_radius(set: &SafeDecisionSet) -> Option<f64> {
    match &set.norm_bound {
        Some(NormBound::Euclidean(r)) => Some(*r),
        Some(NormBound::Spectral(b)) if b.blocks == 1 && (b.rows == 1 || b.cols == 1) => Some(b.radius),
        _ => None,
    }
}

/// Violation of the norm and contraction constraints only.
fn nonlinear_violation(set: &SafeDecisionSet, z: &DVector<f64>) -> Result<f64> {
    let mut v: f64 = 0.0;
    if let Some(nb) = &set.norm_bound {
        v = v.max(nb.violation(z)?);
    }
    if let Some(s) = &set.stability {
        let (r, c) = set.shape();
        v = v.max(s.violation(&unflatten(z, r, c)?));
    }
    Ok(v)
}

/// Nonnegative least squares `min ‖E u − f‖, u ≥ 0` (Lawson and Hanson).
fn nnls(e: &DMatrix<f64>, f: &DVector<f64>) -> DVector<f64> {
    let m = e.ncols();
    let mut u = DVector::zeros(m);
    let mut passive = vec![false; m];
    let scale = e.amax().max(1.0) * f.amax().max(1.0);
    let tol = 1e-13 * scale * (m.max(1) as f64);
    let lstsq = |cols: &[usize]| -> Option<DVector<f64>> {
        let ep = e.select_columns(cols.iter());
        ep.svd(true, true).solve(f, 1e-14 * scale).ok()
    };
    for _ in 0..(3 * m + 10) {
        let w = e.transpose() * (f - e * &u);
        let Some((t, _)) = (0..m)
            .filter(|&j| !passive[j])
            .map(|j| (j, w[j]))
            .filter(|&(_, wj)| wj > tol)
            .max_by(|a, b| a.1.total_cmp(&b.1))
        else {
            break;
        };
        passive[t] = true;
        for _ in 0..(3 * m + 10) {
            let cols: Vec<usize> = (0..m).filter(|&j| passive[j]).collect();
            let Some(sp) = lstsq(&cols) else {
                return u;
            };
            let mut s = DVector::zeros(m);
            for (k, &j) in cols.iter().enumerate() {
                s[j] = sp[k];
            }
            if cols.iter().all(|&j| s[j] > 0.0) {
                u = s;
                break;
            }
            let alpha = cols
                .iter()
                .filter(|&&j| s[j] <= 0.0)
                .map(|&j| u[j] / (u[j] - s[j]))
                .fold(f64::INFINITY, f64::min);
            u += (s - &u) * alpha;
            for &j in &cols {
                if u[j] <= 1e-15 * scale {
                    u[j] = 0.0;
                    passive[j] = false;
                }
            }
            if cols.len() == 1 && !passive[cols[0]] {
                break;
            }
        }
    }
    u
}

/// Exact projection onto `{y | L y ≤ l}`, or `None` when the polyhedron is
/// empty.
///
/// With `v = y − z` this is the least-distance problem `min ‖v‖` subject to
/// `−L v ≥ L z − l`, solved through its NNLS dual.
fn polyhedral_projection(z: &DVector<f64>, normals: &DMatrix<f64>, bounds: &DVector<f64>) -> Option<DVector<f64>> {
    let (m, n) = normals.shape();
    let h = normals * z - bounds;
    if h.iter().all(|&v| v <= 0.0) {
        return Some(z.clone());
    }
    // E = [Gᵀ; hᵀ] with G = −L, f = e_{n+1}
    let mut e = DMatrix::zeros(n + 1, m);
    e.view_mut((0, 0), (n, m)).copy_from(&(-normals.transpose()));
    e.row_mut(n).copy_from(&h.transpose());
    let mut f = DVector::zeros(n + 1);
    f[n] = 1.0;
    let u = nnls(&e, &f);
    let r = &e * &u - &f;
    if r[n].abs() <= 1e-12 || r.norm() <= 1e-12 {
        return None;
    }
    let v = -r.rows(0, n) / r[n];
    let y = z + v;
    // certify feasibility; rounding in the dual can leave tiny violations
    let scale = 1e-10 * (1.0 + z.norm());
    let ok = (normals * &y - bounds)
        .iter()
        .zip(normals.row_iter())
        .all(|(e, row)| *e <= scale * (1.0 + row.norm()));
    ok.then_some(y)
}

/// The projection onto the polyhedral part, accepted when it also satisfies
/// the norm and contraction constraints (then it is the projection onto the
/// whole set).
fn try_exact(z: &DVector<f64>, set: &SafeDecisionSet, tol: f64) -> Result<Option<DVector<f64>>> {
    let Some(y) = polyhedral_projection(z, set.halfspaces.normals(), set.halfspaces.bounds()) else {
        return Ok(None);
    };
    if nonlinear_violation(set, &y)? <= 0.1 * tol && set.halfspaces.max_violation(&y)? <= 0.1 * tol {
        Ok(Some(y))
    } else {
        Ok(None)
    }
}

/// Exact projection onto `P ∩ {‖y‖ ≤ r}` for a polyhedron `P`.
///
/// For a multiplier `μ ≥ 0` on the ball, the Lagrangian minimizer over `P`
/// is `y(μ) = Π_P(z / (1 + μ))` and `‖y(μ)‖` is nonincreasing in `μ`, so the
/// projection is `y(μ*)` with `‖y(μ*)‖ = r`, found by bisection. Returns
/// `None` when the intersection is empty.
fn project_polyhedron_ball(
    z: &DVector<f64>,
    normals: &DMatrix<f64>,
    bounds: &DVector<f64>,
    r: f64,
) -> Option<DVector<f64>> {
    let proj = |p: &DVector<f64>| -> Option<DVector<f64>> {
        if normals.nrows() == 0 {
            Some(p.clone())
        } else {
            polyhedral_projection(p, normals, bounds)
        }
    };
    let y0 = proj(z)?;
    if y0.norm() <= r {
        return Some(y0);
    }
    let closest = proj(&DVector::zeros(z.len()))?;
    if closest.norm() > r * (1.0 + 1e-12) + 1e-14 {
        return None;
    }
    let at = |mu: f64| proj(&(z / (1.0 + mu)));
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut y_hi = at(hi)?;
    let mut doublings = 0;
    while y_hi.norm() > r {
        lo = hi;
        hi *= 2.0;
        y_hi = at(hi)?;
        doublings += 1;
        if doublings > 200 {
            // tangent intersection: only the closest point is feasible
            return Some(closest);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let y = at(mid)?;
        if y.norm() > r {
            lo = mid;
        } else {
            hi = mid;
            y_hi = y;
        }
    }
    Some(y_hi)
}

/// Euclidean projection of `z` onto `set`.
pub fn project_set(z: &DVector<f64>, set: &SafeDecisionSet, cfg: &ProjectionConfig) -> Result<DVector<f64>> {
    if z.len() != set.dim() {
        return Err(Error::dim(format!(
            "point has length {}, decision set has dimension {}",
            z.len(),
            set.dim()
        )));
    }
    if is_scalar_interval(set) {
        let (lo, hi) = scalar_interval(set)?;
        return Ok(DVector::from_element(1, z[0].clamp(lo, hi)));
    }
    let empty = |detail: &str| Error::SafeSetEmpty {
        step: set.provenance.step,
        detail: detail.to_string(),
    };

    // polyhedral part first: exact whenever the remaining constraints are slack there
    if set.halfspaces.rows() > 0 {
        if polyhedral_projection(z, set.halfspaces.normals(), set.halfspaces.bounds()).is_none() {
            return Err(empty("the halfspaces have no common point"));
        }
        if let Some(y) = try_exact(z, set, cfg.tol)? {
            return Ok(y);
        }
    }

    let parts = pieces(set);
    if parts.len() == 1 {
        return parts[0].project(z, cfg).map_err(|e| match e {
            Error::SafeSetEmpty { detail, .. } => empty(&detail),
            e => e,
        });
    }

    let mut x = z.clone();
    let mut incr: Vec<DVector<f64>> = vec![DVector::zeros(z.len()); parts.len()];
    let mut best_violation = f64::INFINITY;
    let mut since_improvement = 0usize;
    let mut violation = f64::INFINITY;
    for _ in 0..cfg.max_iters {
        let prev = x.clone();
        // x can pause for a cycle while the corrections are still moving, so
        // both count towards the stopping test
        let mut movement: f64 = 0.0;
        for (piece, inc) in parts.iter().zip(incr.iter_mut()) {
            let y = &x + &*inc;
            let p = piece.project(&y, cfg)?;
            let new_inc = y - &p;
            movement = movement.max((&new_inc - &*inc).norm());
            *inc = new_inc;
            x = p;
        }
        let movement = movement.max((&x - &prev).norm());
        violation = set.max_violation(&x)?;
        if movement < cfg.tol && violation < cfg.tol {
            return Ok(x);
        }
        // an empty intersection shows up as a violation that stops shrinking
        if violation < 0.99 * best_violation {
            best_violation = violation;
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= 1000 && violation > 100.0 * cfg.tol {
                return Err(empty(&format!("projection stalled with violation {violation:.3e}")));
            }
        }
    }
    Err(Error::numerical(
        format!("projection did not converge in {} iterations", cfg.max_iters),
        violation,
    ))
}

/// Projection of a matrix decision (row-major flattening).
pub fn project_matrix(k: &DMatrix<f64>, set: &SafeDecisionSet, cfg: &ProjectionConfig) -> Result<DMatrix<f64>> {
    let (r, c) = set.shape();
    if k.shape() != (r, c) {
        return Err(Error::dim(format!(
            "decision is {}x{}, set expects {r}x{c}",
            k.nrows(),
            k.ncols()
        )));
    }
    unflatten(&project_set(&flatten(k), set, cfg)?, r, c)
}

/// Dense grid search: the feasible grid point nearest to `z`.
///
/// The grid covers a box known to contain the projection: the norm ball when
/// present, intersected with the ball around `z` through a known feasible
/// point. Works in dimension ≤ 3.
pub fn brute_force_project(z: &DVector<f64>, set: &SafeDecisionSet, grid_step: f64) -> Result<DVector<f64>> {
    let n = set.dim();
    if n == 0 || n > 3 || z.len() != n {
        return Err(Error::config("grid oracle needs a decision of dimension 1 to 3"));
    }
    if !(grid_step > 0.0) {
        return Err(Error::config("grid step must be positive"));
    }
    let mut lo = vec![f64::NEG_INFINITY; n];
    let mut hi = vec![f64::INFINITY; n];
    if let Some(nb) = &set.norm_bound {
        lo.fill(-nb.radius());
        hi.fill(nb.radius());
    }
    let witness = set
        .halfspaces
        .interior_witness
        .clone()
        .filter(|w| set.contains(w, 0.0))
        .or_else(|| {
            enumerate_project(z, set)
                .or_else(|_| project_set(z, set, &ProjectionConfig::default()))
                .ok()
        });
    if let Some(w) = witness {
        let rad = (&w - z).norm() + grid_step;
        for i in 0..n {
            lo[i] = lo[i].max(z[i] - rad);
            hi[i] = hi[i].min(z[i] + rad);
        }
    }
    if lo.iter().chain(&hi).any(|v| !v.is_finite()) {
        return Err(Error::config("grid oracle could not bound the set"));
    }
    // anchor the grid at z so that interior points are found exactly
    let axes: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let k0 = ((lo[i] - z[i]) / grid_step).floor() as i64;
            let k1 = ((hi[i] - z[i]) / grid_step).ceil() as i64;
            (k0..=k1).map(|k| z[i] + k as f64 * grid_step).collect()
        })
        .collect();
    let total: f64 = axes.iter().map(|a| a.len() as f64).product();
    if total > 5e7 {
        return Err(Error::config(format!("grid of {total:.0} points is too large")));
    }
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut idx = vec![0usize; n];
    let mut p = DVector::zeros(n);
    loop {
        for i in 0..n {
            p[i] = axes[i][idx[i]];
        }
        if set.max_violation(&p)? <= 1e-12 {
            let d = (&p - z).norm_squared();
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, p.clone()));
            }
        }
        let mut k = 0;
        loop {
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
            if k == n {
                return best.map(|(_, p)| p).ok_or_else(|| Error::SafeSetEmpty {
                    step: set.provenance.step,
                    detail: "no feasible grid point".into(),
                });
            }
        }
    }
}

/// Exact projection by enumerating active sets.
///
/// Supports halfspaces, a euclidean norm bound (or a spectral bound on a
/// single row or column, which is the same thing), and a scalar contraction
/// constraint. Every candidate (projection onto an affine face, optionally
/// intersected with the bounding sphere) is checked for feasibility and the
/// nearest feasible one is returned. Intended for small test instances.
pub fn enumerate_project(z: &DVector<f64>, set: &SafeDecisionSet) -> Result<DVector<f64>> {
    let n = set.dim();
    if z.len() != n {
        return Err(Error::dim("point and set differ in dimension"));
    }
    let mut rows: Vec<(DVector<f64>, f64)> = set
        .halfspaces
        .normals()
        .row_iter()
        .zip(set.halfspaces.bounds().iter())
        .map(|(r, &b)| (r.transpose(), b))
        .collect();
    if let Some(s) = &set.stability {
        if s.a.shape() != (1, 1) || s.b.shape() != (1, 1) {
            return Err(Error::config("enumeration oracle supports only scalar contraction"));
        }
        let (a, b, r) = (s.a[(0, 0)], s.b[(0, 0)], s.radius);
        // |a − b k| ≤ r  ⇔  −b k ≤ r − a  and  b k ≤ r + a
        rows.push((DVector::from_element(1, -b), r - a));
        rows.push((DVector::from_element(1, b), r + a));
    }
    let radius = match &set.norm_bound {
        None => None,
        Some(NormBound::Euclidean(r)) => Some(*r),
        Some(NormBound::Spectral(b)) if b.blocks == 1 && (b.rows == 1 || b.cols == 1) => Some(b.radius),
        Some(_) => return Err(Error::config("enumeration oracle needs a vector-like norm bound")),
    };
    let m = rows.len();
    if m > 24 {
        return Err(Error::config("too many rows to enumerate"));
    }
    let feasible = |y: &DVector<f64>| -> bool {
        let scale = 1e-9 * (1.0 + y.norm());
        rows.iter().all(|(a, b)| a.dot(y) <= b + scale) && radius.is_none_or(|r| y.norm() <= r + scale)
    };
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut consider = |y: DVector<f64>| {
        if feasible(&y) {
            let d = (&y - z).norm_squared();
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, y));
            }
        }
    };
    for mask in 0u32..(1u32 << m) {
        let active: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
        if active.len() > n {
            continue;
        }
        let (y0, null_proj) = if active.is_empty() {
            (DVector::zeros(n), DMatrix::identity(n, n))
        } else {
            let a_s = DMatrix::from_fn(active.len(), n, |i, j| rows[active[i]].0[j]);
            let b_s = DVector::from_iterator(active.len(), active.iter().map(|&i| rows[i].1));
            let gram = &a_s * a_s.transpose();
            let Some(inv) = gram.try_inverse() else {
                continue;
            };
            let pinv = a_s.transpose() * inv;
            let y0 = &pinv * b_s;
            let proj = DMatrix::identity(n, n) - &pinv * &a_s;
            (y0, proj)
        };
        // nearest point of the affine face
        consider(&y0 + &null_proj * z);
        // nearest point of the face intersected with the sphere
        if let Some(r) = radius {
            let rest = r * r - y0.norm_squared();
            if rest < 0.0 {
                continue;
            }
            let pz = &null_proj * z;
            let dir = if pz.norm() > 1e-10 * (1.0 + z.norm()) {
                Some(pz.normalize())
            } else {
                (0..n)
                    .map(|j| null_proj.column(j).into_owned())
                    .find(|c| c.norm() > 1e-9)
                    .map(|c| c.normalize())
            };
            match dir {
                Some(d) => consider(&y0 + d * rest.sqrt()),
                None => consider(y0.clone()),
            }
        }
    }
    best.map(|(_, y)| y).ok_or_else(|| Error::SafeSetEmpty {
        step: set.provenance.step,
        detail: "no feasible vertex or face point".into(),
    })
}
