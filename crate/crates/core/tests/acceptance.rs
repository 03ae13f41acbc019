//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use safe_nsc::ader::make_ader_config;
use safe_nsc::bench::csv::write_run;
use safe_nsc::bench::pendulum::PendulumParams;
use safe_nsc::bench::run::{evaluate_regret, run_scenario, run_seeds};
use safe_nsc::bench::scenario::{Algorithm, Scenario};
use safe_nsc::loss::QuadraticLoss;
use safe_nsc::metrics::{mean_std, RunLog};
use safe_nsc::ogd::{policy_grad, policy_grad_fd, policy_loss, LossContext};
use safe_nsc::policy::{PolicyKind, PolicyParams};
use safe_nsc::polytope::{NoiseBound, NormBound, Polytope};
use safe_nsc::projection::{
    brute_force_project, enumerate_project, project_matrix, project_set, scalar_interval, ProjectionConfig,
};
use safe_nsc::safeset::{
    build_gain_set, build_input_set_dcbf, build_policy_set, CbfParams, GainSetParams, PolicySetRequest,
    SafeDecisionSet, Tightening,
};
use safe_nsc::system::{Dynamics, LtvSystem};

const DISTRIBUTIONS: [&str; 6] = ["gaussian", "uniform", "gamma", "beta", "exponential", "weibull"];
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn scenario(file: &str) -> Scenario {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios", file]
        .iter()
        .collect();
    Scenario::load(&path).expect("shipped scenario parses")
}

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64, what: &str) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() <= limit_s, || {
        format!("{what} took {:.1} s > {limit_s} s", elapsed.as_secs_f64())
    })
}

/// Mean cumulative cost per (distribution, algorithm) on the scalar scenario.
struct ScalarTable {
    rows: Vec<(String, [f64; 3])>,
}

const TABLE_ALGOS: [Algorithm; 3] = [Algorithm::SafeOgd, Algorithm::SafeAder, Algorithm::Lqr];

fn scalar_table() -> ScalarTable {
    let base = scenario("scalar.toml");
    let rows = DISTRIBUTIONS
        .iter()
        .map(|d| {
            let mut means = [0.0; 3];
            for (i, alg) in TABLE_ALGOS.iter().enumerate() {
                let s = base.with_distribution(d).unwrap().with_algorithm(*alg);
                let logs = run_seeds(&s, &SEEDS).unwrap();
                let costs: Vec<f64> = logs.iter().map(RunLog::cumulative_loss).collect();
                means[i] = mean_std(&costs).0;
            }
            (d.to_string(), means)
        })
        .collect();
    ScalarTable { rows }
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let base = scenario("scalar.toml");
    let tol = 1e-9;
    let mut runs = 0;
    for d in DISTRIBUTIONS {
        for alg in [Algorithm::SafeOgd, Algorithm::SafeAder] {
            let s = base.with_distribution(d).unwrap().with_algorithm(alg);
            for log in run_seeds(&s, &SEEDS).unwrap() {
                runs += 1;
                ensure(log.aborted.is_none() && log.steps.len() == 200, || {
                    format!("{d}/{}: run incomplete: {:?}", alg.name(), log.aborted)
                })?;
                let states = log.states();
                for (t, x) in states.iter().enumerate() {
                    ensure(x[0].abs() <= 2.0 + tol, || {
                        format!("{d}/{}: |x_{t}| = {}", alg.name(), x[0])
                    })?;
                }
                for r in &log.steps {
                    ensure(r.u[0].abs() <= 2.5 + tol, || {
                        format!("{d}/{}: |u_{}| = {}", alg.name(), r.t, r.u[0])
                    })?;
                    ensure(r.w.norm() <= 1.0, || "noise above its bound".into())?;
                }
                ensure(log.is_safe(), || {
                    "safety flags disagree with the recomputed check".into()
                })?;
            }
        }
    }
    within(start.elapsed(), 30.0, "safety grid")?;
    Ok(format!("{runs}/60 runs safe in {:.2} s", start.elapsed().as_secs_f64()))
}

fn criterion_2(table: &ScalarTable) -> Check {
    let mut detail = Vec::new();
    let mut non_gaussian_wins = 0;
    let mut gaussian_ok = false;
    for (d, [ogd, ader, lqr]) in &table.rows {
        detail.push(format!("{d}: ogd {ogd:.2} ader {ader:.2} lqr {lqr:.2}"));
        if d == "gaussian" {
            gaussian_ok = lqr <= ogd;
        } else if ogd <= lqr && ader <= lqr {
            non_gaussian_wins += 1;
        }
    }
    let summary = format!(
        "gaussian lqr ≤ ogd: {gaussian_ok}; non-gaussian wins {non_gaussian_wins}/5 [{}]",
        detail.join("; ")
    );
    if gaussian_ok && non_gaussian_wins >= 4 {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn criterion_3(table: &ScalarTable) -> Check {
    let mut worst: f64 = 0.0;
    for (d, [ogd, ader, _]) in &table.rows {
        let gap = (ogd - ader).abs() / ogd;
        worst = worst.max(gap);
        ensure(gap <= 0.10, || format!("{d}: gap {:.1}%", 100.0 * gap))?;
    }
    Ok(format!("largest relative gap {:.2}%", 100.0 * worst))
}

fn criterion_4() -> Check {
    let cfg = make_ader_config(200, 1.0, 1.0).map_err(|e| e.to_string())?;
    ensure(cfg.n == 5, || format!("N = {}", cfg.n))?;
    let expected = [0.6, 0.2, 0.1, 0.06, 0.04];
    for (p, e) in cfg.p1.iter().zip(expected) {
        ensure((p - e).abs() <= 1e-15, || format!("p1 = {:?}", cfg.p1))?;
    }
    let sum: f64 = cfg.p1.iter().sum();
    ensure((sum - 1.0).abs() <= 1e-12, || format!("Σp1 = {sum}"))?;
    let eta1 = (7.0f64 / 400.0).sqrt();
    ensure((cfg.etas[0] - eta1).abs() <= 1e-15 * eta1, || {
        format!("η₁ = {}", cfg.etas[0])
    })?;
    ensure(cfg.epsilon == 0.1, || format!("ε = {}", cfg.epsilon))?;
    Ok(format!("N = 5, p1 = {:?}, η₁ = {:.6}, ε = 0.1", cfg.p1, cfg.etas[0]))
}

fn criterion_5() -> Check {
    let start = Instant::now();
    let base = scenario("scalar.toml");
    ensure(base.time_invariant_constraints(), || "constraints vary".into())?;
    let mut lines = Vec::new();
    let mut decreasing = true;
    for alg in [Algorithm::SafeOgd, Algorithm::SafeAder] {
        let mut avg = Vec::new();
        for t in [200, 800, 3200] {
            let s = base.with_algorithm(alg).with_horizon(t);
            let logs = run_seeds(&s, &SEEDS).unwrap();
            let regrets: Vec<f64> = logs.iter().map(|l| evaluate_regret(&s, l).unwrap().1).collect();
            avg.push(mean_std(&regrets).0 / t as f64);
        }
        decreasing &= avg.windows(2).all(|w| w[1] < w[0]);
        lines.push(format!("{}: {:.5} {:.5} {:.5}", alg.name(), avg[0], avg[1], avg[2]));
    }
    within(start.elapsed(), 120.0, "regret sweep")?;
    let summary = format!("Regret/T at T = 200/800/3200: {}", lines.join("; "));
    if decreasing {
        Ok(summary)
    } else {
        Err(summary)
    }
}

/// Three halfspaces around a known point, sometimes with a disc.
fn random_planar_set(rng: &mut ChaCha8Rng) -> SafeDecisionSet {
    loop {
        let a = DMatrix::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));
        if a.row_iter().any(|r| r.norm() < 0.2) {
            continue;
        }
        let c = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
        let slack = DVector::from_fn(3, |_, _| rng.random_range(0.05..0.8));
        let bounds = &a * &c + slack;
        let set = SafeDecisionSet::from_polytope((1, 2), Polytope::new(a, bounds).unwrap()).unwrap();
        return if rng.random_bool(0.5) {
            set.with_norm_bound(NormBound::Euclidean(c.norm() + rng.random_range(0.1..1.0)))
        } else {
            set
        };
    }
}

fn sample_feasible(
    set: &SafeDecisionSet,
    center: &DVector<f64>,
    radius: f64,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..2_000_000 {
        if out.len() == n {
            break;
        }
        let y = DVector::from_fn(center.len(), |i, _| center[i] + rng.random_range(-radius..radius));
        if set.contains(&y, 0.0) {
            out.push(y);
        }
    }
    out
}

/// A feasible point, or a point within 1e-6 outside an edge whose
/// projection lies at least 1e-3 away from every other constraint.
fn near_edge_query(set: &SafeDecisionSet, interior: bool, rng: &mut ChaCha8Rng) -> Result<DVector<f64>, String> {
    let normals = set.halfspaces.normals();
    let bounds = set.halfspaces.bounds();
    for _ in 0..100_000 {
        let y = DVector::from_fn(2, |_, _| rng.random_range(-4.0..4.0));
        if !set.contains(&y, 0.0) {
            continue;
        }
        if interior {
            return Ok(y);
        }
        let i = rng.random_range(0..normals.nrows());
        let a = normals.row(i).transpose();
        let on_edge = &y + &a * ((bounds[i] - a.dot(&y)) / a.norm_squared());
        let clear = (0..normals.nrows())
            .filter(|&j| j != i)
            .all(|j| normals.row(j).transpose().dot(&on_edge) <= bounds[j] - 1e-3)
            && set
                .norm_bound
                .as_ref()
                .is_none_or(|b| on_edge.norm() <= b.radius() - 1e-3);
        if clear {
            return Ok(on_edge + a.normalize() * rng.random_range(0.0..1e-6));
        }
    }
    Err("no edge query found".into())
}

/// `(z − p)·(y − p) ≤ 0` for 200 feasible `y`.
fn check_vi(
    i: usize,
    set: &SafeDecisionSet,
    z: &DVector<f64>,
    p: &DVector<f64>,
    center: &DVector<f64>,
    radius: f64,
    rng: &mut ChaCha8Rng,
) -> Result<usize, String> {
    let ys = sample_feasible(set, center, radius, 200, rng);
    ensure(ys.len() == 200, || {
        format!("instance {i}: only {} feasible samples", ys.len())
    })?;
    for y in &ys {
        let lhs = (z - p).dot(&(y - p));
        ensure(lhs <= 1e-8 * (1.0 + z.norm()) * (1.0 + y.norm()), || {
            format!("instance {i}: variational inequality {lhs:e}")
        })?;
    }
    Ok(ys.len())
}

fn criterion_6() -> Check {
    let cfg = ProjectionConfig::default();
    let grid = 1e-4;
    let tol = grid + 1e-8;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let sys = LtvSystem::scalar(0.9, 0.6);
    let x_box = Polytope::symmetric_box(&[2.0]).unwrap();
    let u_box = Polytope::symmetric_box(&[2.5]).unwrap();
    let mut worst: f64 = 0.0;
    let mut vi_points = 0;
    for i in 0..50 {
        if i < 25 {
            // gain sets of the scalar system at random states and noise levels
            let x = v(&[rng.random_range(-2.0..2.0)]);
            let w = NoiseBound::new(rng.random_range(0.0..1.0)).unwrap();
            let params = GainSetParams::new(5.0, 0.1).unwrap();
            let set = build_gain_set(&sys, 0, &x, &x_box, &u_box, w, &params).map_err(|e| e.to_string())?;
            let (lo, hi) = scalar_interval(&set).map_err(|e| e.to_string())?;
            let z = v(&[rng.random_range(-8.0..8.0)]);
            let p = project_set(&z, &set, &cfg).map_err(|e| e.to_string())?;
            let oracle = brute_force_project(&z, &set, grid).map_err(|e| e.to_string())?;
            let err = (&p - &oracle).norm();
            worst = worst.max(err);
            ensure(err <= tol, || format!("instance {i}: |p − oracle| = {err:e}"))?;
            vi_points += check_vi(i, &set, &z, &p, &v(&[0.5 * (lo + hi)]), 0.5 * (hi - lo), &mut rng)?;
        } else {
            let set = random_planar_set(&mut rng);
            let far = DVector::from_fn(2, |_, _| rng.random_range(-4.0..4.0));
            let p = project_set(&far, &set, &cfg).map_err(|e| e.to_string())?;
            let exact = enumerate_project(&far, &set).map_err(|e| e.to_string())?;
            ensure((&p - &exact).norm() <= 1e-8, || {
                format!("instance {i}: differs from enumeration")
            })?;
            vi_points += check_vi(i, &set, &far, &p, &exact, 3.0, &mut rng)?;

            // A square grid of step h only pins a planar projection down to
            // √2·h along an edge, and much worse at the tip of a thin wedge
            // (vertices are covered by the enumeration check above). The
            // grid therefore runs at h/2 on interior points and on points
            // just outside an edge.
            let z = near_edge_query(&set, i % 3 == 0, &mut rng)?;
            let p = project_set(&z, &set, &cfg).map_err(|e| e.to_string())?;
            let oracle = brute_force_project(&z, &set, grid / 2.0).map_err(|e| e.to_string())?;
            let err = (&p - &oracle).norm();
            worst = worst.max(err);
            ensure(err <= tol, || format!("instance {i}: |p − oracle| = {err:e}"))?;
        }
    }
    Ok(format!(
        "50 instances, max |p − grid oracle| = {worst:.2e}, {vi_points} VI checks"
    ))
}

fn criterion_7() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let a = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.5..1.5));
        let b = DMatrix::from_fn(2, 1, |_, _| rng.random_range(-1.0..1.0));
        let sys = LtvSystem::lti(a, b).unwrap();
        let c = QuadraticLoss::diagonal(
            &[rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)],
            &[rng.random_range(0.0..2.0)],
        )
        .unwrap();
        let x = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
        let w = DVector::from_fn(2, |_, _| rng.random_range(-0.5..0.5));
        let hist = [w.clone(), DVector::from_fn(2, |_, _| rng.random_range(-0.5..0.5))];
        let kind = match i % 3 {
            0 => PolicyKind::StateFeedback,
            1 => PolicyKind::DirectInput,
            _ => PolicyKind::DisturbanceAction { horizon: 2 },
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
        worst = worst.max(rel);
        ensure(rel <= 1e-6, || format!("instance {i}: relative error {rel:e}"))?;

        // convexity along the line through p and a second random decision
        let q = p.with_theta(DMatrix::from_fn(r, cc, |_, _| rng.random_range(-2.0..2.0)));
        let lam: f64 = rng.random_range(0.0..=1.0);
        let mid = p.with_theta(&p.theta * lam + &q.theta * (1.0 - lam));
        let lhs = policy_loss(&c, &ctx, &mid).unwrap();
        let rhs = lam * policy_loss(&c, &ctx, &p).unwrap() + (1.0 - lam) * policy_loss(&c, &ctx, &q).unwrap();
        ensure(lhs <= rhs + 1e-12, || format!("line {i}: {lhs} > {rhs}"))?;
    }
    Ok(format!(
        "100 instances, max relative FD error {worst:.2e}; 100 convex lines"
    ))
}

fn unit_directions(rng: &mut ChaCha8Rng, n: usize, normals: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let mut dirs: Vec<DVector<f64>> = normals.row_iter().map(|r| r.transpose().normalize()).collect();
    while dirs.len() < n {
        let th = rng.random_range(0.0..std::f64::consts::TAU);
        dirs.push(v(&[th.cos(), th.sin()]));
    }
    dirs
}

fn criterion_8() -> Check {
    let cfg = ProjectionConfig::default();
    let tol = 1e-7;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x_box = Polytope::symmetric_box(&[2.0, 2.0]).unwrap();
    let u_box = Polytope::symmetric_box(&[3.0]).unwrap();
    let noise = NoiseBound::new(0.2).unwrap();

    // gain sets of random planar LTI systems
    let mut gains = 0;
    let mut tries = 0;
    while gains < 100 {
        tries += 1;
        ensure(tries < 2000, || format!("only {gains} nonempty gain sets"))?;
        let sys = LtvSystem::lti(
            DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.2..1.2)),
            DMatrix::from_fn(2, 1, |_, _| rng.random_range(-1.0..1.0)),
        )
        .unwrap();
        let x = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
        let set = match build_policy_set(&PolicySetRequest {
            dynamics: &sys,
            t: 0,
            kind: PolicyKind::StateFeedback,
            x_t: &x,
            history: &[],
            state_con_next: &x_box,
            input_con: &u_box,
            noise,
            kappa: 10.0,
            dcbf: None,
            stability: None,
            tightening: Tightening::PerRow,
        }) {
            Ok(s) => s,
            Err(safe_nsc::Error::SafeSetEmpty { .. }) => continue,
            Err(e) => return Err(e.to_string()),
        };
        let k0 = DMatrix::from_fn(1, 2, |_, _| rng.random_range(-10.0..10.0));
        let k = project_matrix(&k0, &set, &cfg).map_err(|e| e.to_string())?;
        ensure(set.contains_matrix(&k, cfg.tol), || {
            "projected gain outside its set".into()
        })?;
        let u = -(&k * &x);
        ensure(u_box.contains(&u, tol), || format!("input {u} outside its box"))?;
        let mut ws = vec![DVector::zeros(2)];
        ws.extend(
            unit_directions(&mut rng, 12, x_box.normals())
                .into_iter()
                .map(|d| d * noise.value()),
        );
        for w in ws {
            let next = sys.step(0, &x, &u, &w).unwrap();
            ensure(x_box.contains(&next, tol), || {
                format!("gain successor {next} leaves the box")
            })?;
        }
        gains += 1;
    }

    // DCBF input sets of the pendulum
    let pend = PendulumParams::default();
    let sys = pend.system().unwrap();
    let limit = std::f64::consts::FRAC_PI_2;
    let x_con = Polytope::symmetric_box(&[limit, limit]).unwrap();
    let u_con = Polytope::symmetric_box(&[4.0]).unwrap();
    let w_bound = NoiseBound::new(0.1).unwrap();
    let h = |x: &DVector<f64>| x_con.slack(x).unwrap();
    let mut inputs = 0;
    let mut tries = 0;
    while inputs < 100 {
        tries += 1;
        ensure(tries < 5000, || format!("only {inputs} nonempty DCBF sets"))?;
        let x = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
        let cbf = CbfParams::new(rng.random_range(0.05..=1.0)).unwrap();
        let set = match build_input_set_dcbf(&sys, &x, &x_con, &x_con, &u_con, w_bound, cbf, Tightening::PerRow) {
            Ok(s) => s,
            Err(safe_nsc::Error::SafeSetEmpty { .. }) => continue,
            Err(e) => return Err(e.to_string()),
        };
        let u = project_set(&v(&[rng.random_range(-6.0..6.0)]), &set, &cfg).map_err(|e| e.to_string())?;
        let mut ws = vec![DVector::zeros(2)];
        ws.extend(
            unit_directions(&mut rng, 12, x_con.normals())
                .into_iter()
                .map(|d| d * w_bound.value()),
        );
        let h_now = h(&x);
        for w in ws {
            let next = sys.step(0, &x, &u, &w).unwrap();
            let h_next = h(&next);
            for i in 0..h_next.len() {
                ensure(h_next[i] >= (1.0 - cbf.alpha()) * h_now[i] - tol, || {
                    format!(
                        "DCBF row {i}: h⁺ = {} < (1 − α) h = {}",
                        h_next[i],
                        (1.0 - cbf.alpha()) * h_now[i]
                    )
                })?;
            }
            ensure(x_con.contains(&next, tol), || "DCBF successor leaves the box".into())?;
        }
        inputs += 1;
    }

    // forward invariance along closed-loop trajectories
    let pendulum = scenario("pendulum.toml");
    let scalar_dcbf = scenario("scalar.toml").with_algorithm(Algorithm::SafeAder);
    let scalar_dcbf = {
        let mut s = scalar_dcbf;
        s.params.cbf = Some(CbfParams::new(0.8).unwrap());
        s
    };
    let mut trajectories = 0;
    for s in [&pendulum, &pendulum.with_algorithm(Algorithm::SafeAder), &scalar_dcbf] {
        for log in run_seeds(s, &SEEDS).unwrap() {
            ensure(log.aborted.is_none(), || {
                format!("trajectory aborted: {:?}", log.aborted)
            })?;
            for (t, x) in log.states().iter().enumerate() {
                let worst = s.state_at(t).slack(x).unwrap().min();
                ensure(worst >= -1e-9, || format!("h = {worst} along a trajectory"))?;
            }
            trajectories += 1;
        }
    }
    Ok(format!(
        "{gains} gain sets and {inputs} DCBF sets sound under sampled noise; h ≥ 0 on {trajectories} trajectories"
    ))
}

fn criterion_9() -> Check {
    let start = Instant::now();
    let base = scenario("pendulum.toml");
    let mut worst_theta: f64 = 0.0;
    let mut lines = Vec::new();
    for d in ["gaussian", "uniform", "laplace"] {
        let s = if d == base.distribution.name() {
            base.clone()
        } else {
            base.with_distribution(d).unwrap()
        };
        let logs = run_seeds(&s, &SEEDS).unwrap();
        let safe = logs.iter().filter(|l| l.is_safe()).count();
        ensure(safe == 5, || format!("{d}: {safe}/5 runs safe"))?;
        for l in &logs {
            ensure(l.steps.len() == 500, || {
                format!("{d}: run stopped at {}", l.steps.len())
            })?;
            worst_theta = worst_theta.max(l.final_state[0].abs());
        }
        lines.push(format!("{d} 5/5 safe"));
    }
    ensure(worst_theta <= 0.3, || format!("terminal |θ| = {worst_theta}"))?;
    within(start.elapsed(), 60.0, "pendulum runs")?;
    Ok(format!(
        "Safe-OGD: {}; max |θ_T| = {worst_theta:.3}; {:.2} s",
        lines.join(", "),
        start.elapsed().as_secs_f64()
    ))
}

fn criterion_10() -> Check {
    let mut files = 0;
    for (file, algos) in [
        ("scalar.toml", &Algorithm::ALL[..]),
        ("pendulum.toml", &[Algorithm::SafeOgd, Algorithm::SafeAder][..]),
    ] {
        let base = scenario(file);
        for &alg in algos {
            let s = base.with_algorithm(alg).with_horizon(150);
            let render = || {
                let log = run_scenario(&s, 11).unwrap();
                let comp = evaluate_regret(&s, &log).unwrap().0;
                let mut buf = Vec::new();
                write_run(&mut buf, &log, Some(&comp)).unwrap();
                buf
            };
            let (a, b) = (render(), render());
            ensure(a == b, || format!("{file}/{}: CSV differs between reruns", alg.name()))?;
            files += 1;
        }
    }
    Ok(format!("{files} scenario/algorithm pairs byte-identical on rerun"))
}

fn main() {
    let start = Instant::now();
    let table = catch_unwind(scalar_table);
    let table_ref = table.as_ref().ok();
    let criteria: Vec<Criterion> = vec![
        ("1 safety on the scalar grid", Box::new(criterion_1)),
        (
            "2 directional cost vs LQR",
            Box::new(move || table_ref.map_or_else(|| Err("table failed".into()), criterion_2)),
        ),
        (
            "3 Safe-OGD / Safe-Ader parity",
            Box::new(move || table_ref.map_or_else(|| Err("table failed".into()), criterion_3)),
        ),
        ("4 Ader configuration", Box::new(criterion_4)),
        ("5 regret sublinearity", Box::new(criterion_5)),
        ("6 projection correctness", Box::new(criterion_6)),
        ("7 gradient correctness", Box::new(criterion_7)),
        ("8 safe-set soundness", Box::new(criterion_8)),
        ("9 pendulum safety", Box::new(criterion_9)),
        ("10 determinism", Box::new(criterion_10)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(msg) => println!("PASS criterion {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {name}: {msg}");
            }
        }
    }
    println!(
        "{} of {} criteria passed in {:.1} s",
        criteria.len() - failed,
        criteria.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
