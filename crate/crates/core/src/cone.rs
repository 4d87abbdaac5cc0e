//! Minimize the largest block norm of `z` subject to `A z = b`.
//!
//! Feasible points are parametrized as `z = z_p + K xi` with `z_p = A^+ b`
//! and `K` an orthonormal kernel basis of `A`. ADMM on the epigraph splitting
//! gets close; an active-set Newton polish on the KKT system finishes. Every
//! returned value is bracketed by a dual lower bound, so the reported gap is
//! a certificate rather than an estimate.

use crate::error::{Error, Result};
use crate::groups::GroupStructure;
use crate::linalg::{ensure_finite, ensure_finite_vec, Matrix, RankRevealingDecomposition, Vector, DEFAULT_RANK_TOL};

/// Relative residual above which `b` is declared outside the range of `A`.
pub const FEASIBILITY_TOL: f64 = 1e-8;

const RELAXATION: f64 = 1.6;
const CHECK_EVERY: usize = 25;
const ACTIVE_REL: f64 = 1e-7;
const POLISH_ROUNDS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub primal: f64,
    pub stationarity: f64,
    pub gap: f64,
    pub max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            primal: 1e-9,
            stationarity: 1e-8,
            gap: 1e-8,
            max_iter: 50_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConeProgram {
    pub a: Matrix,
    pub b: Vector,
    /// Groups over the columns of `a`.
    pub groups: GroupStructure,
    /// Original coordinate of each column of `a`.
    pub free: Vec<usize>,
    /// Norm against which the rank of `a` is judged (zero: its own largest
    /// singular value). Products like `N D_S` can cancel to rounding noise.
    pub scale: f64,
    pub tol: Tolerances,
}

impl ConeProgram {
    pub fn new(a: Matrix, b: Vector, groups: GroupStructure, free: Vec<usize>) -> Result<Self> {
        ensure_finite(&a, "constraint matrix")?;
        ensure_finite_vec(&b, "right-hand side")?;
        if a.nrows() != b.len() {
            return Err(Error::mismatch("cone program right-hand side", a.nrows(), b.len()));
        }
        if groups.dim() != a.ncols() {
            return Err(Error::mismatch("cone program groups", a.ncols(), groups.dim()));
        }
        if free.len() != a.ncols() {
            return Err(Error::mismatch("cone program free coordinates", a.ncols(), free.len()));
        }
        Ok(Self {
            a,
            b,
            groups,
            free,
            scale: 0.0,
            tol: Tolerances::default(),
        })
    }

    /// Program whose free coordinates are simply the columns of `a`.
    pub fn over_columns(a: Matrix, b: Vector, groups: GroupStructure) -> Result<Self> {
        let free = (0..a.ncols()).collect();
        Self::new(a, b, groups, free)
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Optimal => "optimal",
            Self::Infeasible => "infeasible",
            Self::MaxIterations => "max-iterations",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConeSolution {
    pub z: Vector,
    /// `max_g |z_g|`, or `+inf` when infeasible.
    pub value: f64,
    /// Certified lower bound on the optimal value.
    pub lower_bound: f64,
    /// `value - lower_bound`.
    pub gap: f64,
    pub primal_residual: f64,
    pub stationarity: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Dual vector `lambda` with `|A^T lambda|_{1,2} = 1` and `<b, lambda>` equal
    /// to the lower bound. For infeasible programs, the unit residual direction
    /// `(b - A A^+ b) / |.|`, which has `A^T lambda = 0` and `<b, lambda> > 0`.
    pub multiplier: Vector,
    /// `|A A^+ b - b|`.
    pub consistency_residual: f64,
}

/// Precomputed affine parametrization of the feasible set.
struct Feasible {
    zp: Vector,
    kernel: Matrix,
}

impl Feasible {
    fn point(&self, xi: &Vector) -> Vector {
        &self.zp + &self.kernel * xi
    }

    fn project(&self, v: &Vector) -> Vector {
        let xi = self.kernel.tr_mul(&(v - &self.zp));
        self.point(&xi)
    }

    /// Component of `s` orthogonal to the kernel, i.e. in the row space of `A`.
    fn row_part(&self, s: &Vector) -> Vector {
        s - &self.kernel * self.kernel.tr_mul(s)
    }

    /// Weak-duality bound `|<z_p, P s>| / |P s|_{1,2}`.
    fn lower_bound(&self, s: &Vector, groups: &GroupStructure) -> f64 {
        let ps = self.row_part(s);
        let denom: f64 = groups.block_norms(&ps).iter().sum();
        if denom <= 0.0 || !denom.is_finite() {
            return 0.0;
        }
        (self.zp.dot(&ps).abs() / denom).max(0.0)
    }
}

fn max_block_norm(z: &Vector, groups: &GroupStructure) -> f64 {
    groups.block_norms(z).into_iter().fold(0.0, f64::max)
}

/// Euclidean projection onto `{(z, t) : |z_g| <= t for all g}`.
fn project_epigraph(z: &mut Vector, t0: f64, groups: &GroupStructure) -> f64 {
    let norms = groups.block_norms(z);
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let mut sum = 0.0;
    let mut t = 0.0;
    for j in 0..=order.len() {
        let cand = (t0 + sum) / (1 + j) as f64;
        let next = if j < order.len() { norms[order[j]] } else { 0.0 };
        if cand >= next {
            t = cand;
            break;
        }
        if j == order.len() {
            break;
        }
        sum += norms[order[j]];
    }
    let t = t.max(0.0);
    for (g, &ng) in norms.iter().enumerate() {
        if ng > t {
            let scale = if ng > 0.0 { t / ng } else { 0.0 };
            for &i in groups.group(g) {
                z[i] *= scale;
            }
        }
    }
    t
}

/// Exact minimum-norm point of the convex hull of the columns of `p`
/// (Wolfe's algorithm). Returns the weights and the norm.
#[cfg(test)]
pub(crate) fn min_norm_point(p: &Matrix) -> (Vector, f64) {
    min_norm_point_from(p, &[])
}

/// As [`min_norm_point`], starting from the affine minimizer over `start`
/// when that has positive weights.
pub(crate) fn min_norm_point_from(p: &Matrix, start: &[usize]) -> (Vector, f64) {
    let count = p.ncols();
    if count == 0 {
        return (Vector::zeros(0), f64::INFINITY);
    }
    if p.nrows() == 0 {
        let mut w = Vector::zeros(count);
        w[0] = 1.0;
        return (w, 0.0);
    }
    let scale = p.column_iter().map(|c| c.norm_squared()).fold(0.0, f64::max);
    if scale == 0.0 {
        let mut w = Vector::zeros(count);
        w[0] = 1.0;
        return (w, 0.0);
    }
    let eps = 1e-15 * scale;

    let closest = (0..count)
        .min_by(|&i, &j| p.column(i).norm_squared().total_cmp(&p.column(j).norm_squared()))
        .unwrap();
    let mut support = vec![closest];
    let mut lambda = vec![1.0];
    if start.len() > 1 {
        let alpha = affine_min_norm_weights(p, start);
        if alpha.iter().all(|&a| a > 1e-15) {
            support = start.to_vec();
            lambda = alpha;
        }
    }
    let mut x = Vector::zeros(p.nrows());
    for (k, &i) in support.iter().enumerate() {
        x.axpy(lambda[k], &p.column(i), 1.0);
    }

    for _ in 0..(50 * count + 50) {
        let scores = p.tr_mul(&x);
        let (j, best) = scores
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(j, &s)| (j, s))
            .unwrap();
        if x.norm_squared() - best <= eps || support.contains(&j) {
            break;
        }
        support.push(j);
        lambda.push(0.0);
        loop {
            let alpha = affine_min_norm_weights(p, &support);
            if alpha.iter().all(|&a| a > 1e-15) {
                lambda = alpha;
                break;
            }
            let mut theta = 1.0_f64;
            for (k, &a) in alpha.iter().enumerate() {
                if a <= 1e-15 {
                    let denom = lambda[k] - a;
                    if denom > 0.0 {
                        theta = theta.min(lambda[k] / denom);
                    }
                }
            }
            for k in 0..lambda.len() {
                lambda[k] += theta * (alpha[k] - lambda[k]);
            }
            let mut k = 0;
            while k < support.len() {
                if lambda[k] <= 1e-15 {
                    support.remove(k);
                    lambda.remove(k);
                } else {
                    k += 1;
                }
            }
            if support.len() <= 1 {
                if support.is_empty() {
                    support.push(j);
                    lambda.push(1.0);
                }
                lambda = vec![1.0];
                break;
            }
            let total: f64 = lambda.iter().sum();
            lambda.iter_mut().for_each(|l| *l /= total);
        }
        let mut nx = Vector::zeros(p.nrows());
        for (k, &i) in support.iter().enumerate() {
            nx.axpy(lambda[k], &p.column(i), 1.0);
        }
        x = nx;
    }
    let mut weights = Vector::zeros(count);
    for (k, &i) in support.iter().enumerate() {
        weights[i] = lambda[k];
    }
    let norm = x.norm();
    (weights, norm)
}

/// Weights minimizing `|P_S alpha|` subject to `sum alpha = 1` (no sign constraint).
/// Solved as least squares on the differences `p_i - p_0`, which avoids the
/// squared conditioning of the Gram system.
fn affine_min_norm_weights(p: &Matrix, support: &[usize]) -> Vec<f64> {
    let k = support.len();
    let base = p.column(support[0]).into_owned();
    let diffs = Matrix::from_fn(p.nrows(), k - 1, |r, c| p[(r, support[c + 1])] - base[r]);
    let beta = match RankRevealingDecomposition::new(&diffs, 1e-13) {
        Ok(d) => -(d.pseudoinverse() * &base),
        Err(_) => return vec![1.0 / k as f64; k],
    };
    let mut alpha = Vec::with_capacity(k);
    alpha.push(1.0 - beta.sum());
    alpha.extend(beta.iter().copied());
    if alpha.iter().all(|a| a.is_finite()) {
        alpha
    } else {
        vec![1.0 / k as f64; k]
    }
}

/// Near-maximal groups of `z` and the reduced gradients `K_g^T z_g / |z_g|` as columns.
fn active_gradients(z: &Vector, kernel: &Matrix, groups: &GroupStructure, value: f64) -> (Vec<usize>, Matrix) {
    let norms = groups.block_norms(z);
    let active: Vec<usize> = (0..groups.len())
        .filter(|&g| norms[g] > 0.0 && norms[g] >= value * (1.0 - ACTIVE_REL))
        .collect();
    let mut cols = Matrix::zeros(kernel.ncols(), active.len());
    for (c, &g) in active.iter().enumerate() {
        for &i in groups.group(g) {
            let coef = z[i] / norms[g];
            cols.column_mut(c).axpy(coef, &kernel.row(i).transpose(), 1.0);
        }
    }
    (active, cols)
}

fn stationarity_with_kernel(z: &Vector, kernel: &Matrix, groups: &GroupStructure, hint: Option<&Vector>) -> f64 {
    stationarity_certificate(z, kernel, groups, hint).0
}

/// Distance from zero to the reduced subdifferential at `z`, together with the
/// subgradient `sum_g w_g z_g / |z_g|` realizing it (a dual certificate).
fn stationarity_certificate(z: &Vector, kernel: &Matrix, groups: &GroupStructure, hint: Option<&Vector>) -> (f64, Option<Vector>) {
    let value = max_block_norm(z, groups);
    if value == 0.0 || kernel.ncols() == 0 {
        return (0.0, None);
    }
    let (active, grads) = active_gradients(z, kernel, groups, value);
    let start: Vec<usize> = match hint {
        Some(s) => {
            let w = groups.block_norms(s);
            let top = w.iter().copied().fold(0.0, f64::max);
            (0..active.len()).filter(|&c| w[active[c]] > 1e-9 * top).collect()
        }
        None => Vec::new(),
    };
    let (weights, dist) = min_norm_point_from(&grads, &start);
    let mut s = Vector::zeros(z.len());
    for (c, &g) in active.iter().enumerate() {
        let ng = groups.block_norm(z, g);
        for &i in groups.group(g) {
            s[i] = weights[c] * z[i] / ng;
        }
    }
    (dist, Some(s))
}

/// `(|A z - b|, dist(0, subdifferential of the reduced objective at z))`.
pub fn kkt_residuals(prog: &ConeProgram, z: &Vector) -> Result<(f64, f64)> {
    if z.len() != prog.a.ncols() {
        return Err(Error::mismatch("kkt_residuals", prog.a.ncols(), z.len()));
    }
    let primal = (&prog.a * z - &prog.b).norm();
    let kernel = RankRevealingDecomposition::new(&prog.a, DEFAULT_RANK_TOL)?
        .with_reference_scale(prog.scale)
        .kernel();
    Ok((primal, stationarity_with_kernel(z, &kernel, &prog.groups, None)))
}

/// Log-barrier path following on `tau * t - sum_g log(t^2 - |z_g|^2)` in the
/// reduced variables `(xi, t)`, started from a feasible `z0`. Returns the final
/// point and the dual estimate `z_g * 2 / (tau * s_g)` as a subgradient hint.
fn barrier_refine(feas: &Feasible, groups: &GroupStructure, z0: &Vector, gap: f64) -> Option<(Vector, Vector)> {
    let d = feas.kernel.ncols();
    let q = groups.len() as f64;
    let k = feas.zp.len();
    let mut xi = feas.kernel.tr_mul(&(z0 - &feas.zp));
    let v0 = max_block_norm(&feas.point(&xi), groups);
    if v0 == 0.0 {
        return None;
    }
    let mut t = v0 * (1.0 + gap.max(1e-6));
    let mut tau = 2.0 * q / gap.clamp(1e-8, 1.0);

    let slacks = |xi: &Vector, t: f64| -> (Vector, Vec<f64>) {
        let z = feas.point(xi);
        let s = groups.block_norms(&z).iter().map(|n| t * t - n * n).collect();
        (z, s)
    };
    let phi = |tau: f64, t: f64, s: &[f64]| -> f64 { tau * t - s.iter().map(|x| x.ln()).sum::<f64>() };

    for _stage in 0..60 {
        for _ in 0..80 {
            let (z, s) = slacks(&xi, t);
            if s.iter().any(|&x| x <= 0.0) {
                return None;
            }
            // Per-coordinate weights 2 / s_g and per-group reduced gradients K_g^T z_g.
            let mut weighted_k = feas.kernel.clone();
            let mut kz = Matrix::zeros(d, groups.len());
            for g in 0..groups.len() {
                let w = 2.0 / s[g];
                for &i in groups.group(g) {
                    kz.column_mut(g).axpy(z[i], &feas.kernel.row(i).transpose(), 1.0);
                    weighted_k.row_mut(i).scale_mut(w);
                }
            }
            let mut h = Matrix::zeros(d + 1, d + 1);
            h.view_mut((0, 0), (d, d)).copy_from(&feas.kernel.tr_mul(&weighted_k));
            let mut grad = Vector::zeros(d + 1);
            let mut rank_one = Matrix::zeros(d + 1, groups.len());
            let mut tt = 0.0;
            grad[d] = tau;
            for g in 0..groups.len() {
                let sg = s[g];
                for r in 0..d {
                    grad[r] += 2.0 * kz[(r, g)] / sg;
                    rank_one[(r, g)] = -2.0 * kz[(r, g)] / sg;
                }
                grad[d] -= 2.0 * t / sg;
                rank_one[(d, g)] = 2.0 * t / sg;
                tt -= 2.0 / sg;
            }
            h[(d, d)] += tt;
            h += &rank_one * rank_one.transpose();
            let step = match h.clone().cholesky() {
                Some(c) => -c.solve(&grad),
                None => -(h.lu().solve(&grad)?),
            };
            let decrement = -grad.dot(&step);
            if !decrement.is_finite() {
                return None;
            }
            if decrement <= 1e-12 {
                break;
            }
            let f0 = phi(tau, t, &s);
            let mut alpha = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let nxi = &xi + step.rows(0, d) * alpha;
                let nt = t + alpha * step[d];
                let (_, ns) = slacks(&nxi, nt);
                if ns.iter().all(|&x| x > 0.0) && phi(tau, nt, &ns) <= f0 - 0.25 * alpha * decrement {
                    xi = nxi;
                    t = nt;
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if 2.0 * q / tau <= 1e-10 {
            break;
        }
        tau *= 20.0;
    }
    let (z, s) = slacks(&xi, t);
    let mut hint = Vector::zeros(k);
    for g in 0..groups.len() {
        let w = 2.0 / (tau * s[g]);
        for &i in groups.group(g) {
            hint[i] = w * z[i];
        }
    }
    Some((z, hint))
}

struct Polished {
    z: Vector,
    value: f64,
    subgradient: Vector,
}

/// Newton on the active-set KKT system in reduced coordinates:
///   sum_g theta_g K_g^T z_g = 0,  |z_g|^2 = t^2 (g active),  sum theta = 1.
fn polish(feas: &Feasible, groups: &GroupStructure, z0: &Vector, dual_hint: Option<&Vector>, slack: f64) -> Option<Polished> {
    let value0 = max_block_norm(z0, groups);
    if value0 == 0.0 {
        return None;
    }
    let norms = groups.block_norms(z0);
    let mut candidates: Vec<Vec<usize>> = Vec::new();
    if let Some(s) = dual_hint {
        let weights = groups.block_norms(s);
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            let set: Vec<usize> = (0..groups.len()).filter(|&g| weights[g] > 1e-4 * total).collect();
            if !set.is_empty() {
                candidates.push(set);
            }
        }
    }
    // More than `d + 1` groups cannot generically share the top level.
    let cap = feas.kernel.ncols() + 1;
    let mut by_level: Vec<usize> = (0..groups.len())
        .filter(|&g| norms[g] >= value0 - slack && norms[g] > 0.0)
        .collect();
    if by_level.len() > cap {
        by_level.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
        by_level.truncate(cap);
        by_level.sort_unstable();
    }
    if !candidates.contains(&by_level) {
        candidates.push(by_level);
    }
    candidates
        .into_iter()
        .find_map(|active| polish_from(feas, groups, z0, active, dual_hint))
}

fn polish_from(feas: &Feasible, groups: &GroupStructure, z0: &Vector, mut active: Vec<usize>, dual_hint: Option<&Vector>) -> Option<Polished> {
    let d = feas.kernel.ncols();
    let cap = d + 1;
    let mut xi = feas.kernel.tr_mul(&(z0 - &feas.zp));

    for _round in 0..POLISH_ROUNDS {
        let z = feas.point(&xi);
        let value = max_block_norm(&z, groups);
        let mut t = value;
        // Initial weights: the dual estimate when there is one, otherwise the
        // affine least-norm combination of the active gradients.
        let n_act = active.len();
        let w: Vec<f64> = match dual_hint {
            Some(s) => active.iter().map(|&g| groups.block_norm(s, g)).collect(),
            None => {
                let mut grads = Matrix::zeros(d, n_act);
                for (c, &g) in active.iter().enumerate() {
                    let ng = groups.block_norm(&z, g).max(1e-300);
                    for &i in groups.group(g) {
                        grads.column_mut(c).axpy(z[i] / ng, &feas.kernel.row(i).transpose(), 1.0);
                    }
                }
                let all: Vec<usize> = (0..n_act).collect();
                if n_act > 1 {
                    affine_min_norm_weights(&grads, &all)
                } else {
                    vec![1.0]
                }
            }
        };
        let mut theta = Vector::from_iterator(n_act, active.iter().enumerate().map(|(c, &g)| {
            w[c] / groups.block_norm(&z, g).max(1e-300)
        }));
        let s = theta.sum();
        if s > 0.0 {
            theta /= s;
        } else {
            theta.fill(1.0 / n_act as f64);
        }

        let unknowns = d + n_act + 1;
        let eqs = d + n_act + 1;
        let residual = |xi: &Vector, theta: &Vector, t: f64| -> Vector {
            let z = feas.point(xi);
            let mut f = Vector::zeros(eqs);
            for (c, &g) in active.iter().enumerate() {
                let mut sq = 0.0;
                for &i in groups.group(g) {
                    sq += z[i] * z[i];
                    for r in 0..d {
                        f[r] += theta[c] * feas.kernel[(i, r)] * z[i];
                    }
                }
                f[d + c] = sq - t * t;
            }
            f[d + n_act] = theta.sum() - 1.0;
            f
        };

        let mut f = residual(&xi, &theta, t);
        for _ in 0..30 {
            let fnorm = f.norm();
            if fnorm <= 1e-15 * (1.0 + value * value) {
                break;
            }
            let z = feas.point(&xi);
            let mut jac = Matrix::zeros(eqs, unknowns);
            for (c, &g) in active.iter().enumerate() {
                let idx = groups.group(g);
                for &i in idx {
                    let krow = feas.kernel.row(i);
                    for r in 0..d {
                        let kir = krow[r];
                        if kir == 0.0 {
                            continue;
                        }
                        for s in 0..d {
                            jac[(r, s)] += theta[c] * kir * krow[s];
                        }
                        jac[(r, d + c)] += kir * z[i];
                    }
                    for s in 0..d {
                        jac[(d + c, s)] += 2.0 * z[i] * krow[s];
                    }
                }
                jac[(d + c, d + n_act)] = -2.0 * t;
                jac[(d + n_act, d + c)] = 1.0;
            }
            let step = match jac.clone().lu().solve(&f).filter(|x| x.iter().all(|v| v.is_finite())) {
                Some(x) => -x,
                None => match RankRevealingDecomposition::new(&jac, 1e-13) {
                    Ok(dec) => -(dec.pseudoinverse() * &f),
                    Err(_) => return None,
                },
            };
            // Backtrack on the residual norm.
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let nxi = &xi + step.rows(0, d) * alpha;
                let nth = &theta + step.rows(d, n_act) * alpha;
                let nt = t + alpha * step[d + n_act];
                let nf = residual(&nxi, &nth, nt);
                if nf.norm() < fnorm * (1.0 - 1e-4 * alpha) || nf.norm() <= 1e-15 * (1.0 + value * value) {
                    xi = nxi;
                    theta = nth;
                    t = nt;
                    f = nf;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }

        let z = feas.point(&xi);
        let norms = groups.block_norms(&z);
        let value = norms.iter().copied().fold(0.0, f64::max);

        if f.norm() > 1e-12 * (1.0 + value * value) {
            // Stalled: the active set is wrong. Drop the least-weighted group.
            if active.len() <= 1 {
                return None;
            }
            let c = (0..active.len()).min_by(|&i, &j| theta[i].total_cmp(&theta[j])).unwrap();
            active.remove(c);
            continue;
        }
        // Drop the most negative weight and redo.
        if let Some((c, _)) = theta
            .iter()
            .enumerate()
            .filter(|(_, &th)| th < -1e-12)
            .min_by(|a, b| a.1.total_cmp(b.1))
        {
            if active.len() <= 1 {
                return None;
            }
            active.remove(c);
            continue;
        }
        // Add any group that overtook the active level.
        let level = t.abs();
        let violators: Vec<usize> = (0..groups.len())
            .filter(|g| !active.contains(g) && norms[*g] > level * (1.0 + 1e-12) + 1e-300)
            .collect();
        if let Some(&worst) = violators.iter().max_by(|&&i, &&j| norms[i].total_cmp(&norms[j])) {
            if active.len() >= cap {
                let c = (0..active.len()).min_by(|&i, &j| theta[i].total_cmp(&theta[j])).unwrap();
                active.remove(c);
            }
            active.push(worst);
            active.sort_unstable();
            continue;
        }
        let mut subgradient = Vector::zeros(z.len());
        for (c, &g) in active.iter().enumerate() {
            for &i in groups.group(g) {
                subgradient[i] = theta[c].max(0.0) * z[i];
            }
        }
        return Some(Polished { z, value, subgradient });
    }
    None
}

fn normalized_multiplier(prog_a: &Matrix, feas: &Feasible, s: &Vector, groups: &GroupStructure, b: &Vector, at_pinv: &Matrix) -> Vector {
    let ps = feas.row_part(s);
    let denom: f64 = groups.block_norms(&ps).iter().sum();
    if denom <= 0.0 {
        return Vector::zeros(prog_a.nrows());
    }
    let mut lambda = at_pinv * ps / denom;
    if b.dot(&lambda) < 0.0 {
        lambda.neg_mut();
    }
    lambda
}

struct Best {
    z: Vector,
    value: f64,
    lower: f64,
    s: Option<Vector>,
}

pub fn solve_minmax_group_norm(prog: &ConeProgram) -> Result<ConeSolution> {
    let (rows, cols) = prog.a.shape();
    let tol = prog.tol;
    let b_norm = prog.b.norm();
    let primal_tol = tol.primal * b_norm.max(1.0);

    if rows == 0 {
        return Ok(ConeSolution {
            z: Vector::zeros(cols),
            value: 0.0,
            lower_bound: 0.0,
            gap: 0.0,
            primal_residual: 0.0,
            stationarity: 0.0,
            iterations: 0,
            status: SolveStatus::Optimal,
            multiplier: Vector::zeros(0),
            consistency_residual: 0.0,
        });
    }

    let dec = RankRevealingDecomposition::new(&prog.a, DEFAULT_RANK_TOL)?.with_reference_scale(prog.scale);
    let pinv = dec.pseudoinverse();
    let zp = &pinv * &prog.b;
    let fitted = &prog.a * &zp;
    let consistency_residual = (&fitted - &prog.b).norm();

    if consistency_residual > FEASIBILITY_TOL * (1.0 + b_norm) {
        let dir = (&prog.b - &fitted) / consistency_residual;
        return Ok(ConeSolution {
            value: f64::INFINITY,
            lower_bound: f64::INFINITY,
            gap: 0.0,
            primal_residual: consistency_residual,
            stationarity: f64::INFINITY,
            iterations: 0,
            status: SolveStatus::Infeasible,
            multiplier: dir,
            consistency_residual,
            z: zp,
        });
    }

    let at_pinv = pinv.transpose();
    let feas = Feasible {
        zp: zp.clone(),
        kernel: dec.kernel(),
    };
    let groups = &prog.groups;
    let value_p = max_block_norm(&zp, groups);

    let finish = |z: Vector, lower: f64, s: Option<Vector>, iterations: usize| -> ConeSolution {
        let value = max_block_norm(&z, groups);
        let primal = (&prog.a * &z - &prog.b).norm();
        let stationarity = stationarity_with_kernel(&z, &feas.kernel, groups, s.as_ref());
        let lower = lower.min(value);
        let gap = (value - lower).max(0.0);
        let multiplier = match s {
            Some(s) => normalized_multiplier(&prog.a, &feas, &s, groups, &prog.b, &at_pinv),
            None => Vector::zeros(rows),
        };
        let ok = primal <= primal_tol && stationarity <= tol.stationarity && gap <= tol.gap * value.max(1.0);
        let status = if ok {
            SolveStatus::Optimal
        } else {
            SolveStatus::MaxIterations
        };
        ConeSolution {
            z,
            value,
            lower_bound: lower,
            gap,
            primal_residual: primal,
            stationarity,
            iterations,
            status,
            multiplier,
            consistency_residual,
        }
    };

    if value_p == 0.0 {
        return Ok(finish(zp, 0.0, None, 0));
    }

    // Subgradient at z_p: the normalized argmax block.
    let argmax_subgradient = |z: &Vector| -> Vector {
        let norms = groups.block_norms(z);
        let g = (0..norms.len()).max_by(|&i, &j| norms[i].total_cmp(&norms[j])).unwrap();
        let mut s = Vector::zeros(z.len());
        for &i in groups.group(g) {
            s[i] = z[i] / norms[g];
        }
        s
    };

    if feas.kernel.ncols() == 0 {
        let s = argmax_subgradient(&zp);
        return Ok(finish(zp, value_p, Some(s), 0));
    }

    // Work in units where the min-norm feasible point has value one.
    let scale = value_p;
    let sfeas = Feasible {
        zp: &zp / scale,
        kernel: feas.kernel.clone(),
    };
    let gap_goal = tol.gap * (1.0 / scale).max(1.0) * 0.5;

    let lb0 = sfeas.lower_bound(&argmax_subgradient(&sfeas.zp), groups);
    let mut best = Best {
        z: sfeas.zp.clone(),
        value: 1.0,
        lower: lb0,
        s: Some(argmax_subgradient(&sfeas.zp)),
    };
    let mut best_lower_s = best.s.clone();

    let mut yz = sfeas.zp.clone();
    let mut yt = 1.0;
    let mut uz = Vector::zeros(cols);
    let mut ut = 0.0;
    let mut rho = 1.0;
    let mut last_polish_gap = f64::INFINITY;
    let mut last_polish_it = 0;
    let mut iterations = 0;

    // Sharpen the lower bound with the min-norm subgradient once close, then
    // decide whether the best point is certified.
    let certify = |best: &mut Best, best_s: &mut Option<Vector>| -> bool {
        if best.value - best.lower > 1e-3 * best.value {
            return false;
        }
        let (st, s) = stationarity_certificate(&best.z, &sfeas.kernel, groups, best_s.as_ref());
        if let Some(s) = s {
            let lb = sfeas.lower_bound(&s, groups);
            if lb > best.lower {
                best.lower = lb;
                *best_s = Some(s);
            }
        }
        best.value - best.lower <= gap_goal.max(1e-15 * best.value) && st <= tol.stationarity
    };

    for it in 1..=tol.max_iter {
        iterations = it;
        let xz = sfeas.project(&(&yz - &uz));
        let xt = yt - ut - 1.0 / rho;
        let hz = &xz * RELAXATION + &yz * (1.0 - RELAXATION);
        let ht = RELAXATION * xt + (1.0 - RELAXATION) * yt;
        let mut nz = &hz + &uz;
        let nt = project_epigraph(&mut nz, ht + ut, groups);
        uz += &hz - &nz;
        ut += ht - nt;
        let r_prim = ((&xz - &nz).norm_squared() + (xt - nt).powi(2)).sqrt();
        let r_dual = rho * ((&nz - &yz).norm_squared() + (nt - yt).powi(2)).sqrt();
        yz = nz;
        yt = nt;

        if it % CHECK_EVERY != 0 {
            continue;
        }
        let v = max_block_norm(&xz, groups);
        if v < best.value {
            best.value = v;
            best.z = xz.clone();
        }
        if ut < 0.0 {
            let s = &uz / (-ut);
            let lb = sfeas.lower_bound(&s, groups);
            if lb > best.lower {
                best.lower = lb;
                best_lower_s = Some(s);
            }
        }
        if certify(&mut best, &mut best_lower_s) {
            return Ok(finish(best.z * scale, best.lower * scale, best_lower_s, it));
        }

        let rel_gap = best.value - best.lower;
        if rel_gap < 1e-2 && (rel_gap < 0.5 * last_polish_gap || it >= last_polish_it + 500) {
            last_polish_gap = rel_gap;
            last_polish_it = it;
            let slack = (10.0 * rel_gap).max(1e-9);
            let hint = (ut < 0.0).then(|| &uz / (-ut));
            let mut attempt = polish(&sfeas, groups, &xz, hint.as_ref(), slack);
            if attempt.is_none() {
                if let Some((bz, bhint)) = barrier_refine(&sfeas, groups, &xz, rel_gap) {
                    let bv = max_block_norm(&bz, groups);
                    if bv < best.value {
                        best.value = bv;
                        best.z = bz.clone();
                    }
                    let lb = sfeas.lower_bound(&bhint, groups);
                    if lb > best.lower {
                        best.lower = lb;
                        best_lower_s = Some(bhint.clone());
                    }
                    attempt = polish(&sfeas, groups, &bz, Some(&bhint), 1e-9);
                }
            }
            if let Some(p) = attempt {
                let lb = sfeas.lower_bound(&p.subgradient, groups);
                if p.value <= best.value + 1e-14 {
                    best.value = p.value;
                    best.z = p.z.clone();
                }
                if lb > best.lower {
                    best.lower = lb;
                    best_lower_s = Some(p.subgradient.clone());
                }
                if certify(&mut best, &mut best_lower_s) {
                    return Ok(finish(best.z * scale, best.lower * scale, best_lower_s, it));
                }
            }
        }

        if r_prim > 10.0 * r_dual {
            rho *= 2.0;
            uz /= 2.0;
            ut /= 2.0;
        } else if r_dual > 10.0 * r_prim {
            rho /= 2.0;
            uz *= 2.0;
            ut *= 2.0;
        }
    }

    Ok(finish(best.z * scale, best.lower * scale, best_lower_s, iterations))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    #[test]
    fn strong_example_source_program() {
        let s = 1.0 / 3f64.sqrt();
        let prog = ConeProgram::over_columns(
            Matrix::from_row_slice(1, 3, &[0.0, 0.0, s]),
            v(&[s]),
            GroupStructure::new(3, vec![vec![0, 1], vec![2]]).unwrap(),
        )
        .unwrap();
        let sol = solve_minmax_group_norm(&prog).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.value - 1.0).abs() < 1e-8, "{}", sol.value);
        assert!((sol.z[2] - 1.0).abs() < 1e-8);
        assert!(sol.z[0].abs() <= 1.0 + 1e-8 && sol.z[1].abs() <= 1.0 + 1e-8);
    }

    #[test]
    fn unique_feasible_point() {
        let prog = ConeProgram::over_columns(Matrix::identity(2, 2), v(&[3.0, 4.0]), GroupStructure::contiguous(1, 2).unwrap()).unwrap();
        let sol = solve_minmax_group_norm(&prog).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.value - 5.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_split() {
        let prog = ConeProgram::over_columns(Matrix::from_row_slice(1, 2, &[1.0, 1.0]), v(&[2.0]), GroupStructure::singletons(2)).unwrap();
        let sol = solve_minmax_group_norm(&prog).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.value - 1.0).abs() < 1e-8);
        assert!((&sol.z - v(&[1.0, 1.0])).norm() < 1e-8);
        assert!((prog.b.dot(&sol.multiplier) - sol.lower_bound).abs() < 1e-10);
    }

    #[test]
    fn empty_constraints_give_zero() {
        let prog = ConeProgram::over_columns(Matrix::zeros(0, 3), Vector::zeros(0), GroupStructure::singletons(3)).unwrap();
        let sol = solve_minmax_group_norm(&prog).unwrap();
        assert_eq!(sol.value, 0.0);
        assert_eq!(sol.status, SolveStatus::Optimal);
    }

    #[test]
    fn inconsistent_system_is_infeasible() {
        let prog = ConeProgram::over_columns(Matrix::from_row_slice(2, 1, &[1.0, 1.0]), v(&[1.0, -1.0]), GroupStructure::singletons(1)).unwrap();
        let sol = solve_minmax_group_norm(&prog).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
        assert_eq!(sol.value, f64::INFINITY);
        assert!(prog.a.tr_mul(&sol.multiplier).norm() < 1e-12);
        assert!(prog.b.dot(&sol.multiplier) > 0.0);
    }

    #[test]
    fn kkt_examples() {
        let prog = ConeProgram::over_columns(Matrix::from_row_slice(1, 2, &[1.0, 1.0]), v(&[2.0]), GroupStructure::singletons(2)).unwrap();
        let (p, s) = kkt_residuals(&prog, &v(&[1.0, 1.0])).unwrap();
        assert!(p <= 1e-9 && s <= 1e-9);
        let (p, _) = kkt_residuals(&prog, &v(&[0.0, 0.0])).unwrap();
        assert!((p - 2.0).abs() < 1e-15);
        let (p, s) = kkt_residuals(&prog, &v(&[2.0, 0.0])).unwrap();
        assert!(p <= 1e-9 && s > 1e-8);
    }

    #[test]
    fn epigraph_projection_cases() {
        let g = GroupStructure::singletons(2);
        let mut z = v(&[3.0, 1.0]);
        let t = project_epigraph(&mut z, 0.0, &g);
        // Minimize (t)^2 + (3-t)^2 over t >= 1: t = 1.5.
        assert!((t - 1.5).abs() < 1e-15);
        assert_eq!(z, v(&[1.5, 1.0]));
        let mut z = v(&[1.0, 1.0]);
        assert_eq!(project_epigraph(&mut z, 2.0, &g), 2.0);
        let mut z = v(&[1.0, -1.0]);
        assert_eq!(project_epigraph(&mut z, -10.0, &g), 0.0);
        assert_eq!(z, v(&[0.0, 0.0]));
    }

    #[test]
    fn min_norm_point_cases() {
        // Segment from (1,1) to (1,-1): closest point (1,0).
        let p = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]);
        let (w, n) = min_norm_point(&p);
        assert!((n - 1.0).abs() < 1e-14);
        assert!((w[0] - 0.5).abs() < 1e-14);
        // Triangle containing the origin.
        let p = Matrix::from_row_slice(2, 3, &[1.0, -1.0, 0.0, 0.0, 1.0, -1.0]);
        assert!(min_norm_point(&p).1 < 1e-14);
    }
}
