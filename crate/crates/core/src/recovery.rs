//! Noisy recovery: the Lagrangian problem `1/2 |Phi x - y|^2 + mu J(x)`, the
//! constrained problem `min J(x) s.t. |Phi x - y| <= delta`, and the noise
//! experiments that compare their errors with the certified bounds.

use std::time::{Duration, Instant};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::certificates::{classify, recovery_bounds, strong_constant, CertificateReport, RecoveryBounds, Thresholds, Verdict};
use crate::ensemble::{derive_seed, stream_rng};
use crate::error::{Error, Result};
use crate::groups::{block_soft_threshold, group_norm, GroupStructure};
use crate::linalg::{pseudoinverse, spectral_norm, vstack, Matrix, Vector, DEFAULT_RANK_TOL};
use crate::problem::Problem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Lagrangian,
    Constrained,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Lagrangian => "lagrangian",
            Self::Constrained => "constrained",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lagrangian" => Ok(Self::Lagrangian),
            "constrained" => Ok(Self::Constrained),
            other => Err(Error::InvalidInput(format!("unknown recovery mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RecoveryRun {
    pub mode: Mode,
    pub delta: f64,
    /// Penalty used by the final Lagrangian solve (zero for exact basis pursuit).
    pub mu: f64,
    pub noise_seed: Option<u64>,
    pub x: Vector,
    pub error: f64,
    pub objective_trace: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time: Duration,
}

fn check_measurements(prob: &Problem, y: &Vector) -> Result<()> {
    if y.len() != prob.m() {
        return Err(Error::mismatch("measurement length", prob.m(), y.len()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("measurements contain non-finite entries".into()));
    }
    Ok(())
}

fn lagrangian_objective(prob: &Problem, y: &Vector, mu: f64, x: &Vector) -> f64 {
    let r = &prob.phi * x - y;
    0.5 * r.norm_squared() + mu * group_norm(&prob.d.apply_adjoint(x), &prob.groups).unwrap_or(f64::NAN)
}

/// Distance from `g` to the subdifferential of the group norm at `u`, exact
/// because the subdifferential is a product over groups.
fn subgradient_distance(g: &Vector, u: &Vector, groups: &GroupStructure) -> f64 {
    let mut sq = 0.0;
    for k in 0..groups.len() {
        let nu = groups.block_norm(u, k);
        let gg = groups.block(g, k);
        if nu > 0.0 {
            let uk = groups.block(u, k) / nu;
            sq += (gg - uk).norm_squared();
        } else {
            sq += (gg.norm() - 1.0).max(0.0).powi(2);
        }
    }
    sq.sqrt()
}

/// Fermat residual of the Lagrangian problem when `D = I`: distance from
/// `-Phi^T (Phi x - y) / mu` to the subdifferential of `J` at `x`.
pub fn lagrangian_kkt_residual(prob: &Problem, y: &Vector, mu: f64, x: &Vector) -> Result<f64> {
    check_measurements(prob, y)?;
    if !prob.d.is_identity() {
        return Err(Error::InvalidInput("closed-form residual needs the identity analysis operator".into()));
    }
    let g = -prob.phi.tr_mul(&(&prob.phi * x - y)) / mu;
    Ok(subgradient_distance(&g, x, &prob.groups))
}

/// Accelerated proximal gradient with a restart whenever the objective goes up.
fn fista(prob: &Problem, y: &Vector, mu: f64, opts: &SolverOptions, start: Option<&Vector>) -> Result<RecoveryRun> {
    let t0 = Instant::now();
    let lip = spectral_norm(&prob.phi).powi(2);
    let step = if lip > 0.0 { 1.0 / lip } else { 1.0 };
    let phty = prob.phi.tr_mul(y);
    let gram = prob.phi.tr_mul(&prob.phi);
    let obj = |x: &Vector| lagrangian_objective(prob, y, mu, x);

    let mut x = start.cloned().unwrap_or_else(|| Vector::zeros(prob.n()));
    let mut fx = obj(&x);
    let mut z = x.clone();
    let mut t = 1.0_f64;
    let mut trace = vec![fx];
    let mut restarted = false;
    let mut iterations = 0;
    for k in 1..=opts.max_iter {
        iterations = k;
        let grad = &gram * &z - &phty;
        let xn = block_soft_threshold(&(&z - grad * step), step * mu, &prob.groups)?;
        let fxn = obj(&xn);
        // A plain proximal step (right after a restart) descends in exact
        // arithmetic, so an increase there is rounding and the step is kept.
        if fxn > fx && !restarted {
            t = 1.0;
            z = x.clone();
            restarted = true;
            continue;
        }
        restarted = false;
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = &xn + (&xn - &x) * ((t - 1.0) / tn);
        let moved = (&xn - &x).norm();
        x = xn;
        fx = fxn;
        t = tn;
        trace.push(fx);
        if (k % 10 == 0 || moved == 0.0) && lagrangian_kkt_residual(prob, y, mu, &x)? <= opts.tol {
            break;
        }
    }
    let kkt = lagrangian_kkt_residual(prob, y, mu, &x)?;
    Ok(RecoveryRun {
        mode: Mode::Lagrangian,
        delta: f64::NAN,
        mu,
        noise_seed: None,
        error: (&x - &prob.x0).norm(),
        x,
        objective_trace: trace,
        kkt_residual: kkt,
        iterations,
        converged: kkt <= opts.tol,
        wall_time: t0.elapsed(),
    })
}

/// Primal-dual splitting for a general analysis operator, with the dual
/// variable confined to the ball of radius `mu` in the dual group norm.
fn primal_dual(prob: &Problem, y: &Vector, mu: f64, opts: &SolverOptions, start: Option<&Vector>) -> Result<RecoveryRun> {
    let t0 = Instant::now();
    let d = prob.d.to_matrix();
    let dt = d.transpose();
    let groups = &prob.groups;
    let dn = spectral_norm(&d).max(f64::MIN_POSITIVE);
    let tau = 0.95f64.sqrt() / dn;
    let sigma = tau;
    let n = prob.n();
    // Proximal map of the data term: (I + tau Phi^T Phi)^{-1}.
    let system = Matrix::identity(n, n) + prob.phi.tr_mul(&prob.phi) * tau;
    let chol = system
        .cholesky()
        .ok_or_else(|| Error::Solver("data-term system is not positive definite".into()))?;
    let tau_phty = prob.phi.tr_mul(y) * tau;

    let mut x = start.cloned().unwrap_or_else(|| Vector::zeros(n));
    let mut v = Vector::zeros(prob.p());
    let mut trace = vec![lagrangian_objective(prob, y, mu, &x)];
    let mut iterations = 0;
    for k in 1..=opts.max_iter {
        iterations = k;
        let xn = chol.solve(&(&x - &d * &v * tau + &tau_phty));
        let bar = &xn * 2.0 - &x;
        v = project_dual_ball(&(&v + &dt * bar * sigma), mu, groups);
        x = xn;
        if k % 50 == 0 {
            trace.push(lagrangian_objective(prob, y, mu, &x));
            if primal_dual_residual(prob, y, mu, &x, &v, &d, &dt) <= opts.tol {
                break;
            }
        }
    }
    let kkt = primal_dual_residual(prob, y, mu, &x, &v, &d, &dt);
    Ok(RecoveryRun {
        mode: Mode::Lagrangian,
        delta: f64::NAN,
        mu,
        noise_seed: None,
        error: (&x - &prob.x0).norm(),
        x,
        objective_trace: trace,
        kkt_residual: kkt,
        iterations,
        converged: kkt <= opts.tol,
        wall_time: t0.elapsed(),
    })
}

fn project_dual_ball(v: &Vector, radius: f64, groups: &GroupStructure) -> Vector {
    let mut out = v.clone();
    for g in 0..groups.len() {
        let n = groups.block_norm(v, g);
        if n > radius {
            for &i in groups.group(g) {
                out[i] *= radius / n;
            }
        }
    }
    out
}

/// `|-Phi^T (Phi x - y) / mu - D s|` where `s` is the dual iterate snapped
/// onto the subdifferential at `D^T x`: exact unit blocks on groups that are
/// clearly nonzero, the dual block (already in the unit ball) elsewhere.
fn primal_dual_residual(prob: &Problem, y: &Vector, mu: f64, x: &Vector, v: &Vector, d: &Matrix, dt: &Matrix) -> f64 {
    let groups = &prob.groups;
    let u = dt * x;
    let norms = groups.block_norms(&u);
    let cut = 1e-8 * (1.0 + norms.iter().copied().fold(0.0, f64::max));
    let mut s = v / mu;
    for (g, &nu) in norms.iter().enumerate() {
        if nu > cut {
            for &i in groups.group(g) {
                s[i] = u[i] / nu;
            }
        }
    }
    let g = -prob.phi.tr_mul(&(&prob.phi * x - y)) / mu;
    (g - d * s).norm()
}

pub fn solve_lagrangian(prob: &Problem, y: &Vector, mu: f64, opts: &SolverOptions) -> Result<RecoveryRun> {
    solve_lagrangian_from(prob, y, mu, opts, None)
}

pub fn solve_lagrangian_from(
    prob: &Problem,
    y: &Vector,
    mu: f64,
    opts: &SolverOptions,
    start: Option<&Vector>,
) -> Result<RecoveryRun> {
    check_measurements(prob, y)?;
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidInput(format!("penalty must be positive and finite, got {mu}")));
    }
    if prob.d.is_identity() {
        fista(prob, y, mu, opts, start)
    } else {
        primal_dual(prob, y, mu, opts, start)
    }
}

/// Basis pursuit `min J(x) s.t. Phi x = y` by ADMM on the split `u = D^T x`.
/// Every iterate is exactly feasible.
fn basis_pursuit(prob: &Problem, y: &Vector, opts: &SolverOptions) -> Result<RecoveryRun> {
    let t0 = Instant::now();
    let n = prob.n();
    let m = prob.m();
    let d = prob.d.to_matrix();
    let dt = d.transpose();
    // Least-norm solutions of [D D^T  Phi^T; Phi  0] [x; l] = [D (u - w); y].
    let kkt = {
        let top = {
            let mut t = Matrix::zeros(n, n + m);
            t.view_mut((0, 0), (n, n)).copy_from(&(&d * &dt));
            t.view_mut((0, n), (n, m)).copy_from(&prob.phi.transpose());
            t
        };
        let mut bottom = Matrix::zeros(m, n + m);
        bottom.view_mut((0, 0), (m, n)).copy_from(&prob.phi);
        vstack(&top, &bottom)
    };
    let kkt_pinv = pseudoinverse(&kkt, DEFAULT_RANK_TOL)?;
    let solve_x = |rhs_top: &Vector| -> Vector {
        let mut rhs = Vector::zeros(n + m);
        rhs.rows_mut(0, n).copy_from(rhs_top);
        rhs.rows_mut(n, m).copy_from(y);
        (&kkt_pinv * rhs).rows(0, n).into_owned()
    };
    let groups = &prob.groups;
    let scale = 1.0 + y.norm();
    let mut rho = 1.0;
    let mut u = Vector::zeros(prob.p());
    let mut w = Vector::zeros(prob.p());
    let mut x = solve_x(&Vector::zeros(n));
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    for k in 1..=opts.max_iter {
        iterations = k;
        x = solve_x(&(&d * (&u - &w)));
        let dx = &dt * &x;
        let u_prev = u.clone();
        u = block_soft_threshold(&(&dx + &w), 1.0 / rho, groups)?;
        let r = &dx - &u;
        w += &r;
        let primal = r.norm();
        let dual = rho * (&d * (&u - &u_prev)).norm();
        residual = primal.max(dual);
        if k % 10 == 0 {
            trace.push(group_norm(&dx, groups)?);
        }
        if residual <= opts.tol * scale {
            break;
        }
        if primal > 10.0 * dual {
            rho *= 2.0;
            w /= 2.0;
        } else if dual > 10.0 * primal {
            rho /= 2.0;
            w *= 2.0;
        }
    }
    trace.push(prob.objective(&x)?);
    Ok(RecoveryRun {
        mode: Mode::Constrained,
        delta: 0.0,
        mu: 0.0,
        noise_seed: None,
        error: (&x - &prob.x0).norm(),
        x,
        objective_trace: trace,
        kkt_residual: residual,
        iterations,
        converged: residual <= opts.tol * scale,
        wall_time: t0.elapsed(),
    })
}

/// Least-squares fit of `y` over `Ker D^T`: the minimizers of `J` closest to `y`.
fn regularizer_null_fit(prob: &Problem, y: &Vector) -> Result<Vector> {
    let basis = crate::linalg::kernel_basis(&prob.d_adjoint_matrix(), DEFAULT_RANK_TOL)?;
    if basis.ncols() == 0 {
        return Ok(Vector::zeros(prob.n()));
    }
    let a = &prob.phi * &basis;
    Ok(&basis * (pseudoinverse(&a, DEFAULT_RANK_TOL)? * y))
}

/// Relative width of the residual window accepted by the bisection.
pub const MATCH_TOL: f64 = 1e-6;

/// Constrained problem via bisection on `log mu` over the Lagrangian solver.
pub fn solve_constrained(prob: &Problem, y: &Vector, delta: f64, opts: &SolverOptions) -> Result<RecoveryRun> {
    check_measurements(prob, y)?;
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::InvalidInput(format!("noise radius must be finite and non-negative, got {delta}")));
    }
    if delta == 0.0 {
        return basis_pursuit(prob, y, opts);
    }
    let t0 = Instant::now();
    let residual = |x: &Vector| (&prob.phi * x - y).norm();

    // If some minimizer of J is already feasible it solves the problem outright.
    let fit = regularizer_null_fit(prob, y)?;
    if residual(&fit) <= delta {
        return Ok(RecoveryRun {
            mode: Mode::Constrained,
            delta,
            mu: f64::INFINITY,
            noise_seed: None,
            error: (&fit - &prob.x0).norm(),
            objective_trace: vec![prob.objective(&fit)?],
            x: fit,
            kkt_residual: 0.0,
            iterations: 0,
            converged: true,
            wall_time: t0.elapsed(),
        });
    }

    let mut total_iter = 0;
    let mut solve = |mu: f64, start: Option<&Vector>| -> Result<RecoveryRun> {
        let run = solve_lagrangian_from(prob, y, mu, opts, start)?;
        total_iter += run.iterations;
        Ok(run)
    };
    let mut lo = 1e-12;
    let lo_run = solve(lo, None)?;
    if residual(&lo_run.x) > delta * (1.0 + MATCH_TOL) {
        return Err(Error::Solver(format!(
            "noise radius {delta} is below the smallest attainable residual {}",
            residual(&lo_run.x)
        )));
    }
    let mut hi = prob.phi.tr_mul(y).norm().max(delta) * prob.d.norm().max(1.0);
    let mut best = solve(hi, None)?;
    let mut doublings = 0;
    while residual(&best.x) < delta * (1.0 - MATCH_TOL) {
        lo = hi;
        hi *= 2.0;
        best = solve(hi, Some(&best.x))?;
        doublings += 1;
        if doublings > 100 {
            return Err(Error::Solver("could not bracket the noise radius".into()));
        }
    }
    let mut mu = hi;
    let mut warm = best.x.clone();
    for _ in 0..200 {
        let r = residual(&best.x);
        if (r - delta).abs() <= MATCH_TOL * delta {
            break;
        }
        if r > delta {
            hi = mu;
        } else {
            lo = mu;
        }
        mu = (lo * hi).sqrt();
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
        best = solve(mu, Some(&warm))?;
        warm = best.x.clone();
    }
    let matched = (residual(&best.x) - delta).abs() <= MATCH_TOL * delta;
    Ok(RecoveryRun {
        mode: Mode::Constrained,
        delta,
        mu,
        iterations: total_iter,
        converged: matched && best.converged,
        wall_time: t0.elapsed(),
        ..best
    })
}

/// Noise uniformly distributed on the sphere of radius `delta`.
pub fn sphere_noise(m: usize, delta: f64, seed: u64) -> Vector {
    let mut rng = stream_rng(seed, &[]);
    loop {
        let w = Vector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
        let n = w.norm();
        if n > 0.0 {
            return w * (delta / n);
        }
    }
}

#[derive(Debug, Clone)]
pub struct RateConfig {
    pub deltas: Vec<f64>,
    pub mu_ratio: f64,
    pub draws: usize,
    pub seed: u64,
    pub solver: SolverOptions,
    pub thresholds: Thresholds,
    /// Directions sampled for the strong-minimum constant.
    pub kappa_samples: usize,
}

impl RateConfig {
    pub fn new(deltas: Vec<f64>, mu_ratio: f64, draws: usize, seed: u64) -> Self {
        Self {
            deltas,
            mu_ratio,
            draws,
            seed,
            solver: SolverOptions::default(),
            thresholds: Thresholds::default(),
            kappa_samples: 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RateRow {
    pub delta: f64,
    pub draw: usize,
    pub mode: Mode,
    pub error: f64,
    pub bound: Option<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone)]
pub struct ModeFit {
    pub mode: Mode,
    /// Median error per grid entry (`None` where the mode does not apply or every draw failed).
    pub median_errors: Vec<Option<f64>>,
    pub bounds: Vec<Option<f64>>,
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone)]
pub struct RateFit {
    pub deltas: Vec<f64>,
    pub verdict: Verdict,
    pub kappa: Option<f64>,
    pub fits: Vec<ModeFit>,
    pub rows: Vec<RateRow>,
    pub failures: usize,
}

impl RateFit {
    pub fn fit(&self, mode: Mode) -> Option<&ModeFit> {
        self.fits.iter().find(|f| f.mode == mode)
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[k] } else { 0.5 * (v[k - 1] + v[k]) })
}

/// Slope and intercept of the least-squares line through `(log x, log y)`.
pub fn loglog_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn bound_for(mode: Mode, b: &RecoveryBounds, verdict: Verdict) -> Option<f64> {
    match (mode, verdict) {
        (Mode::Lagrangian, Verdict::Sharp) => b.est,
        (Mode::Constrained, Verdict::Sharp) => b.est2,
        (Mode::Lagrangian, _) => b.est3,
        (Mode::Constrained, _) => b.est4,
    }
}

/// Error bounds for one noise level, choosing the sharp or the strong family by verdict.
pub fn bounds_at(report: &CertificateReport, kappa: Option<f64>, delta: f64, mu_ratio: f64) -> Result<(Option<f64>, Option<f64>)> {
    if delta == 0.0 {
        return Ok((None, None));
    }
    let b = recovery_bounds(report, kappa, delta, mu_ratio)?;
    Ok((
        bound_for(Mode::Lagrangian, &b, report.verdict),
        bound_for(Mode::Constrained, &b, report.verdict),
    ))
}

pub fn rate_experiment(prob: &Problem, cfg: &RateConfig) -> Result<RateFit> {
    if cfg.deltas.is_empty() {
        return Err(Error::InvalidInput("noise grid is empty".into()));
    }
    if cfg.deltas.windows(2).any(|w| !(w[0] > w[1])) || cfg.deltas.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
        return Err(Error::InvalidInput("noise grid must be finite, non-negative and strictly decreasing".into()));
    }
    if cfg.draws == 0 {
        return Err(Error::InvalidInput("at least one draw per noise level is needed".into()));
    }
    if !(cfg.mu_ratio > 0.0) || !cfg.mu_ratio.is_finite() {
        return Err(Error::InvalidInput(format!("mu ratio must be positive, got {}", cfg.mu_ratio)));
    }
    let report = classify(prob, &cfg.thresholds)?;
    let kappa = strong_constant(prob, cfg.kappa_samples, derive_seed(cfg.seed, &[u64::MAX]))?;
    let bounds: Vec<(Option<f64>, Option<f64>)> = cfg
        .deltas
        .iter()
        .map(|&d| bounds_at(&report, kappa, d, cfg.mu_ratio))
        .collect::<Result<_>>()?;

    let cells: Vec<(usize, usize)> = (0..cfg.deltas.len())
        .flat_map(|i| (0..cfg.draws).map(move |k| (i, k)))
        .collect();
    let outcomes: Vec<Vec<Option<RateRow>>> = cells
        .par_iter()
        .map(|&(i, k)| {
            let delta = cfg.deltas[i];
            let seed = derive_seed(cfg.seed, &[i as u64, k as u64]);
            let y = &prob.y0 + sphere_noise(prob.m(), delta, seed);
            let mut rows = Vec::new();
            let modes: &[Mode] = if delta > 0.0 { &[Mode::Lagrangian, Mode::Constrained] } else { &[Mode::Constrained] };
            for &mode in modes {
                let run = match mode {
                    Mode::Lagrangian => solve_lagrangian(prob, &y, cfg.mu_ratio * delta, &cfg.solver),
                    Mode::Constrained => solve_constrained(prob, &y, delta, &cfg.solver),
                };
                rows.push(match run {
                    Ok(run) if run.error.is_finite() => Some(RateRow {
                        delta,
                        draw: k,
                        mode,
                        error: run.error,
                        bound: match mode {
                            Mode::Lagrangian => bounds[i].0,
                            Mode::Constrained => bounds[i].1,
                        },
                        iterations: run.iterations,
                        kkt_residual: run.kkt_residual,
                    }),
                    _ => None,
                });
            }
            rows
        })
        .collect();
    let failures = outcomes.iter().flatten().filter(|r| r.is_none()).count();
    let rows: Vec<RateRow> = outcomes.into_iter().flatten().flatten().collect();

    let fits = [Mode::Lagrangian, Mode::Constrained]
        .into_iter()
        .map(|mode| {
            let median_errors: Vec<Option<f64>> = cfg
                .deltas
                .iter()
                .map(|&d| median(rows.iter().filter(|r| r.mode == mode && r.delta == d).map(|r| r.error).collect()))
                .collect();
            let pts: Vec<(f64, f64)> = cfg
                .deltas
                .iter()
                .zip(&median_errors)
                .filter_map(|(&d, e)| e.map(|e| (d, e)))
                .collect();
            let (slope, intercept) = loglog_fit(&pts);
            let bounds = bounds
                .iter()
                .map(|b| match mode {
                    Mode::Lagrangian => b.0,
                    Mode::Constrained => b.1,
                })
                .collect();
            ModeFit {
                mode,
                median_errors,
                bounds,
                slope,
                intercept,
            }
        })
        .collect();

    Ok(RateFit {
        deltas: cfg.deltas.clone(),
        verdict: report.verdict,
        kappa,
        fits,
        rows,
        failures,
    })
}
