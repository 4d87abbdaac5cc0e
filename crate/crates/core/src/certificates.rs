//! Certificates deciding whether `x0` solves, uniquely solves, or sharply
//! solves the basis pursuit problem, and the recovery bounds they imply.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cone::{solve_minmax_group_norm, ConeProgram, ConeSolution, SolveStatus};
use crate::error::{Error, Result};
use crate::groups::dual_group_norm;
use crate::linalg::{
    cokernel_rows, kernel_basis, pseudoinverse, restricted_smallest_gain, select_columns, vstack, Matrix,
    RankRevealingDecomposition, Vector, DEFAULT_RANK_TOL,
};
use crate::model::{curvature, directional_derivative, ModelDecomposition};
use crate::problem::Problem;

/// Slack for "value <= 1" style tests on computed certificates.
pub const OPTIMALITY_TOL: f64 = 1e-6;
/// A restricted gain at or below this counts as a nontrivial kernel intersection.
pub const INJECTIVITY_TOL: f64 = 1e-8;
/// Collapse width used by exact mode.
pub const EXACT_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub tau: f64,
    pub rho_lo: f64,
    pub rho_hi: f64,
    pub gamma: f64,
    pub zeta: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            tau: 0.99,
            rho_lo: 0.95,
            rho_hi: 1.05,
            gamma: 0.99,
            zeta: 0.95,
        }
    }
}

impl Thresholds {
    /// Every gate collapsed onto 1.
    pub fn exact(eps: f64) -> Self {
        Self {
            tau: 1.0 - eps,
            rho_lo: 1.0 - eps,
            rho_hi: 1.0 + eps,
            gamma: 1.0 - eps,
            zeta: 1.0 - eps,
        }
    }
}

impl FromStr for Thresholds {
    type Err = Error;

    /// Parses `tau=0.99,rho_lo=0.95,...`; unspecified keys keep their defaults.
    fn from_str(s: &str) -> Result<Self> {
        let mut t = Thresholds::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, val) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidInput(format!("threshold entry '{part}' is not key=value")))?;
            let val: f64 = val
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("threshold '{key}' has non-numeric value '{val}'")))?;
            if !val.is_finite() {
                return Err(Error::InvalidInput(format!("threshold '{key}' must be finite")));
            }
            match key.trim() {
                "tau" => t.tau = val,
                "rho_lo" => t.rho_lo = val,
                "rho_hi" => t.rho_hi = val,
                "gamma" => t.gamma = val,
                "zeta" => t.zeta = val,
                other => return Err(Error::InvalidInput(format!("unknown threshold '{other}'"))),
            }
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Verdict {
    NotASolution,
    NonuniqueOrUndetermined,
    UniqueStrongNotSharp,
    Sharp,
    Borderline,
}

impl Verdict {
    pub const ALL: [Verdict; 5] = [
        Verdict::NotASolution,
        Verdict::NonuniqueOrUndetermined,
        Verdict::UniqueStrongNotSharp,
        Verdict::Sharp,
        Verdict::Borderline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::NotASolution => "not-a-solution",
            Self::NonuniqueOrUndetermined => "solution-nonunique-or-undetermined",
            Self::UniqueStrongNotSharp => "unique-strong-not-sharp",
            Self::Sharp => "sharp",
            Self::Borderline => "borderline",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Verdict::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown verdict '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueStatus {
    Optimal,
    Infeasible,
    MaxIterations,
    ClosedForm,
    NotComputable,
    Failed,
}

impl ValueStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Optimal => "optimal",
            Self::Infeasible => "infeasible",
            Self::MaxIterations => "max-iterations",
            Self::ClosedForm => "closed-form",
            Self::NotComputable => "not-computable",
            Self::Failed => "failed",
        }
    }
}

impl From<SolveStatus> for ValueStatus {
    fn from(s: SolveStatus) -> Self {
        match s {
            SolveStatus::Optimal => Self::Optimal,
            SolveStatus::Infeasible => Self::Infeasible,
            SolveStatus::MaxIterations => Self::MaxIterations,
        }
    }
}

/// A certificate value with the uncertainty of the computation that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertValue {
    pub value: Option<f64>,
    pub status: ValueStatus,
    pub gap: f64,
}

impl CertValue {
    pub fn closed_form(value: f64) -> Self {
        Self {
            value: Some(value),
            status: ValueStatus::ClosedForm,
            gap: 0.0,
        }
    }

    pub fn from_solution(sol: &ConeSolution) -> Self {
        Self {
            value: Some(sol.value),
            status: sol.status.into(),
            gap: if sol.status == SolveStatus::Infeasible { 0.0 } else { sol.gap },
        }
    }

    pub fn missing(status: ValueStatus) -> Self {
        Self {
            value: None,
            status,
            gap: f64::INFINITY,
        }
    }

    /// Whether the value is known to be below, known to be at or above, or
    /// indistinguishable from `threshold` given its gap.
    pub fn below(&self, threshold: f64) -> Tri {
        match self.value {
            None => Tri::Unknown,
            Some(v) if v.is_infinite() => {
                if v > 0.0 {
                    Tri::No
                } else {
                    Tri::Yes
                }
            }
            Some(v) => {
                // Iteration-capped values are only trusted through their certified bracket.
                if v + self.gap < threshold {
                    Tri::Yes
                } else if v - self.gap >= threshold {
                    Tri::No
                } else {
                    Tri::Unknown
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tri {
    Yes,
    No,
    Unknown,
}

#[derive(Debug, Clone)]
pub struct CertificateReport {
    pub consistency_ok: bool,
    pub consistency_residual: f64,
    pub rho: CertValue,
    pub tau: CertValue,
    pub zeta: CertValue,
    pub gamma: CertValue,
    pub ic: CertValue,
    pub ri_holds: bool,
    pub c1: f64,
    pub sri_holds: bool,
    pub sharpness_constant: f64,
    pub lipschitz: f64,
    pub phi_pinv_norm: f64,
    pub verdict: Verdict,
    pub thresholds: Thresholds,
    pub exact_mode: bool,
    pub active_groups: usize,
    pub inactive_groups: usize,
    /// For not-a-solution: a feasible point with strictly smaller objective.
    pub witness: Option<Vector>,
    pub diagnostics: Vec<String>,
}

impl CertificateReport {
    pub fn is_optimal(&self) -> bool {
        self.consistency_ok
            && self
                .rho
                .value
                .is_some_and(|r| r <= 1.0 + OPTIMALITY_TOL + self.rho.gap.min(1.0))
    }
}

/// Result of the first-order optimality test.
#[derive(Debug, Clone)]
pub struct OptimalityCheck {
    pub consistency_ok: bool,
    pub consistency_residual: f64,
    pub rho: ConeSolution,
    /// `None` when the solver could not decide.
    pub is_optimal: Option<bool>,
    pub program: ConeProgram,
    /// Rows spanning `Ker Phi`.
    pub n_rows: Matrix,
}

/// Certificate program `min max_g |z_g|` over S-coordinates with `R D_S z = -R D e`.
fn source_program(prob: &Problem, decomp: &ModelDecomposition, r: &Matrix) -> Result<ConeProgram> {
    let d_s = decomp.d_s();
    let a = r * &d_s;
    let b = -(r * decomp.d_e());
    let (groups, _) = prob.groups.restrict(&decomp.s_coords)?;
    // `r` has orthonormal rows, so `|D|` bounds the meaningful size of `a`.
    Ok(ConeProgram::new(a, b, groups, decomp.s_coords.clone())?.with_scale(prob.d.norm()))
}

pub fn check_optimality(prob: &Problem, decomp: &ModelDecomposition) -> Result<OptimalityCheck> {
    let n_rows = cokernel_rows(&prob.phi, DEFAULT_RANK_TOL)?;
    let program = source_program(prob, decomp, &n_rows)?;
    let rho = solve_minmax_group_norm(&program)?;
    let consistency_ok = rho.status != SolveStatus::Infeasible;
    let is_optimal = if !consistency_ok {
        Some(false)
    } else {
        match CertValue::from_solution(&rho).below(1.0 + OPTIMALITY_TOL) {
            Tri::Yes => Some(true),
            Tri::No => Some(false),
            Tri::Unknown => None,
        }
    };
    Ok(OptimalityCheck {
        consistency_ok,
        consistency_residual: rho.consistency_residual,
        rho,
        is_optimal,
        program,
        n_rows,
    })
}

/// `Ker Phi ∩ Ker D_S^T = {0}`, measured by the smallest gain of `D_S^T` on `Ker Phi`.
pub fn restricted_injectivity(prob: &Problem, decomp: &ModelDecomposition) -> Result<(bool, f64)> {
    let k = kernel_basis(&prob.phi, DEFAULT_RANK_TOL)?;
    let c1 = restricted_smallest_gain(&decomp.d_adjoint_s(), &k)?;
    Ok((c1 > INJECTIVITY_TOL, c1))
}

/// Closed-form upper bound `|(A^+ b)|_{inf,2}` for a certificate program.
fn least_norm_value(prog: &ConeProgram) -> Result<f64> {
    if prog.a.nrows() == 0 {
        return Ok(0.0);
    }
    let dec = RankRevealingDecomposition::new(&prog.a, DEFAULT_RANK_TOL)?.with_reference_scale(prog.scale);
    let z = dec.pseudoinverse() * &prog.b;
    dual_group_norm(&z, &prog.groups)
}

pub fn tau(prob: &Problem, decomp: &ModelDecomposition) -> Result<f64> {
    let n_rows = cokernel_rows(&prob.phi, DEFAULT_RANK_TOL)?;
    least_norm_value(&source_program(prob, decomp, &n_rows)?)
}

/// Rows of `M` span `Ker Phi ∩ E`; the flag says whether `D_S^T` is injective there.
pub fn strong_restricted_injectivity(prob: &Problem, decomp: &ModelDecomposition) -> Result<(bool, Matrix)> {
    let stacked = vstack(&prob.phi, &decomp.q);
    let basis = kernel_basis(&stacked, DEFAULT_RANK_TOL)?;
    let gain = restricted_smallest_gain(&decomp.d_adjoint_s(), &basis)?;
    Ok((gain > INJECTIVITY_TOL, basis.transpose()))
}

pub fn zeta(prob: &Problem, decomp: &ModelDecomposition, m: &Matrix) -> Result<ConeSolution> {
    solve_minmax_group_norm(&source_program(prob, decomp, m)?)
}

pub fn gamma(prob: &Problem, decomp: &ModelDecomposition, m: &Matrix) -> Result<f64> {
    least_norm_value(&source_program(prob, decomp, m)?)
}

/// Identifiability criterion; `Ok(None)` when `Phi U` is not injective.
pub fn ic(prob: &Problem, decomp: &ModelDecomposition) -> Result<Option<ConeSolution>> {
    let d_s = decomp.d_s();
    let u = kernel_basis(&decomp.d_adjoint_s(), DEFAULT_RANK_TOL)?;
    let phi_u = &prob.phi * &u;
    if u.ncols() > 0 {
        let dec = RankRevealingDecomposition::new(&phi_u, DEFAULT_RANK_TOL)?;
        if dec.rank < u.ncols() {
            return Ok(None);
        }
    }
    let de = decomp.d_e();
    let lifted = if u.ncols() > 0 {
        let phi_u_pinv = pseudoinverse(&phi_u, DEFAULT_RANK_TOL)?;
        prob.phi.tr_mul(&(phi_u_pinv.transpose() * u.tr_mul(&de)))
    } else {
        Vector::zeros(prob.n())
    };
    let r = lifted - &de;
    let a_s = pseudoinverse(&d_s, DEFAULT_RANK_TOL)? * r;
    let b = &d_s * a_s;
    let (groups, _) = prob.groups.restrict(&decomp.s_coords)?;
    let prog = ConeProgram::new(d_s, b, groups, decomp.s_coords.clone())?;
    Ok(Some(solve_minmax_group_norm(&prog)?))
}

/// `max(0, 1 - rho) * c1`, with `0 * inf = 0`. A slack at rounding level
/// (`rho` computed as `1 - 1e-16`) counts as zero.
pub fn sharpness_constant(rho: f64, c1: f64) -> f64 {
    let slack = 1.0 - rho;
    if slack <= 1e-12 {
        0.0
    } else {
        slack * c1
    }
}

/// Inputs to the decision tree, separated from their computation.
#[derive(Debug, Clone, Copy)]
pub struct DecisionInputs {
    pub consistency_ok: bool,
    pub rho: CertValue,
    pub tau: CertValue,
    pub gamma: CertValue,
    pub zeta: CertValue,
    pub ri_holds: bool,
    pub sri_holds: bool,
}

pub fn decide(inp: &DecisionInputs, thr: &Thresholds) -> Verdict {
    if !inp.consistency_ok {
        return Verdict::NotASolution;
    }
    match inp.rho.below(thr.rho_hi) {
        Tri::No => return Verdict::NotASolution,
        Tri::Unknown => return Verdict::Borderline,
        Tri::Yes => {}
    }
    if inp.ri_holds {
        let by_tau = inp.tau.below(thr.tau);
        let by_rho = inp.rho.below(thr.rho_lo);
        if by_tau == Tri::Yes || by_rho == Tri::Yes {
            return Verdict::Sharp;
        }
        if by_rho == Tri::Unknown {
            return Verdict::Borderline;
        }
    }
    // Past this point x0 is not certified sharp; it has to be a solution first.
    match inp.rho.below(1.0 + OPTIMALITY_TOL) {
        Tri::Yes => {}
        _ => return Verdict::Borderline,
    }
    if !inp.sri_holds {
        return Verdict::NonuniqueOrUndetermined;
    }
    match inp.gamma.below(thr.gamma) {
        Tri::Yes => return Verdict::UniqueStrongNotSharp,
        Tri::Unknown => return Verdict::Borderline,
        Tri::No => {}
    }
    match inp.zeta.below(thr.zeta) {
        Tri::Yes => Verdict::UniqueStrongNotSharp,
        Tri::Unknown => Verdict::Borderline,
        Tri::No => {
            if inp.zeta.below(1.0 + OPTIMALITY_TOL) == Tri::No {
                Verdict::NonuniqueOrUndetermined
            } else {
                Verdict::Borderline
            }
        }
    }
}

/// `|Phi^+| = 1 / sigma_min^+(Phi)`.
pub fn phi_pinv_norm(phi: &Matrix) -> Result<f64> {
    let dec = RankRevealingDecomposition::new(phi, DEFAULT_RANK_TOL)?;
    Ok(dec.sigma_min_positive().map_or(0.0, |s| 1.0 / s))
}

/// Lipschitz constant `sqrt(q) |D|` of the regularizer.
pub fn lipschitz_constant(prob: &Problem) -> f64 {
    (prob.groups.len() as f64).sqrt() * prob.d.norm()
}

/// Search along `w` from `x0` for a point with objective below `J(x0) - 1e-9`.
pub fn descent_witness(prob: &Problem, w: &Vector) -> Result<Option<Vector>> {
    let norm = w.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Ok(None);
    }
    let j0 = prob.objective(&prob.x0)?;
    let dir = w / norm;
    let mut t = prob.x0.norm().max(1.0);
    for _ in 0..80 {
        let x = &prob.x0 + &dir * t;
        if prob.objective(&x)? < j0 - 1e-9 {
            return Ok(Some(x));
        }
        t *= 0.5;
    }
    Ok(None)
}

/// Feasible descent direction from the dual of the source program.
fn falsifying_direction(check: &OptimalityCheck) -> Vector {
    check.n_rows.tr_mul(&check.rho.multiplier)
}

pub fn classify(prob: &Problem, thresholds: &Thresholds) -> Result<CertificateReport> {
    classify_with_mode(prob, thresholds, false)
}

pub fn classify_exact(prob: &Problem) -> Result<CertificateReport> {
    classify_with_mode(prob, &Thresholds::exact(EXACT_EPS), true)
}

pub fn classify_with_mode(prob: &Problem, thresholds: &Thresholds, exact_mode: bool) -> Result<CertificateReport> {
    let decomp = ModelDecomposition::new(prob)?;
    let mut diagnostics = Vec::new();

    let check = check_optimality(prob, &decomp)?;
    let rho = CertValue::from_solution(&check.rho);
    if check.rho.status == SolveStatus::MaxIterations {
        diagnostics.push(format!("rho solver stopped at the iteration cap with gap {:.3e}", check.rho.gap));
    }
    let tau = CertValue::closed_form(least_norm_value(&check.program)?);
    let (ri_holds, c1) = restricted_injectivity(prob, &decomp)?;
    let (sri_holds, m) = strong_restricted_injectivity(prob, &decomp)?;

    let gamma = CertValue::closed_form(gamma(prob, &decomp, &m)?);
    let zeta = if m.nrows() == 0 {
        CertValue::closed_form(0.0)
    } else {
        match zeta(prob, &decomp, &m) {
            Ok(sol) => {
                if sol.status == SolveStatus::MaxIterations {
                    diagnostics.push(format!("zeta solver stopped at the iteration cap with gap {:.3e}", sol.gap));
                }
                CertValue::from_solution(&sol)
            }
            Err(e) => {
                diagnostics.push(format!("zeta solver failed: {e}"));
                CertValue::missing(ValueStatus::Failed)
            }
        }
    };
    let ic = match ic(prob, &decomp) {
        Ok(Some(sol)) => CertValue::from_solution(&sol),
        Ok(None) => CertValue::missing(ValueStatus::NotComputable),
        Err(e) => {
            diagnostics.push(format!("ic solver failed: {e}"));
            CertValue::missing(ValueStatus::Failed)
        }
    };

    let inputs = DecisionInputs {
        consistency_ok: check.consistency_ok,
        rho,
        tau,
        gamma,
        zeta,
        ri_holds,
        sri_holds,
    };
    let verdict = decide(&inputs, thresholds);

    let witness = if verdict == Verdict::NotASolution {
        let w = descent_witness(prob, &falsifying_direction(&check))?;
        if w.is_none() {
            diagnostics.push("no descent witness found along the dual direction".into());
        }
        w
    } else {
        None
    };

    let sharp_c = if check.consistency_ok && ri_holds {
        sharpness_constant(check.rho.value, c1)
    } else {
        0.0
    };

    Ok(CertificateReport {
        consistency_ok: check.consistency_ok,
        consistency_residual: check.consistency_residual,
        rho,
        tau,
        zeta,
        gamma,
        ic,
        ri_holds,
        c1,
        sri_holds,
        sharpness_constant: sharp_c,
        lipschitz: lipschitz_constant(prob),
        phi_pinv_norm: phi_pinv_norm(&prob.phi)?,
        verdict,
        thresholds: *thresholds,
        exact_mode,
        active_groups: decomp.active.len(),
        inactive_groups: decomp.inactive.len(),
        witness,
        diagnostics,
    })
}

/// Sampler for directions in the domain of the second subderivative, built
/// from an optimal certificate `v` with `D v ∈ Im Phi^T`.
pub struct DomainSampler {
    /// Orthonormal basis of the linear hull of the domain.
    pub basis: Matrix,
    /// Unit certificate blocks on the saturated inactive groups.
    saturated: Vec<(usize, Vector)>,
    d_adjoint: Matrix,
    groups: crate::groups::GroupStructure,
}

impl DomainSampler {
    /// `v_s` is the certificate restricted to the S-coordinates (a minimizer
    /// of the source program with value at most one).
    pub fn new(prob: &Problem, decomp: &ModelDecomposition, v_s: &Vector) -> Result<Self> {
        if v_s.len() != decomp.s_coords.len() {
            return Err(Error::mismatch("domain sampler certificate", decomp.s_coords.len(), v_s.len()));
        }
        let mut v = decomp.e.clone();
        for (k, &i) in decomp.s_coords.iter().enumerate() {
            v[i] = v_s[k];
        }
        let groups = &prob.groups;
        let d_adj = &decomp.d_adjoint;
        let mut rows: Vec<Matrix> = vec![prob.phi.clone()];
        let mut saturated = Vec::new();
        for &g in &decomp.inactive {
            let dg = groups.row_block(d_adj, g);
            let vg = groups.block(&v, g);
            let ng = vg.norm();
            if ng >= 1.0 - OPTIMALITY_TOL {
                let vhat = vg / ng;
                rows.push(&dg - &vhat * (vhat.transpose() * &dg));
                saturated.push((g, vhat));
            } else {
                rows.push(dg);
            }
        }
        let stacked = rows.iter().skip(1).fold(rows[0].clone(), |acc, r| vstack(&acc, r));
        let basis = kernel_basis(&stacked, DEFAULT_RANK_TOL)?;
        Ok(Self {
            basis,
            saturated,
            d_adjoint: d_adj.clone(),
            groups: groups.clone(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.basis.ncols()
    }

    /// A random domain direction, or `None` if the draw straddles the cone.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Option<Vector> {
        if self.basis.ncols() == 0 {
            return None;
        }
        let xi = Vector::from_fn(self.basis.ncols(), |_, _| StandardNormal.sample(rng));
        let w = &self.basis * xi;
        let u = &self.d_adjoint * &w;
        let signs: Vec<f64> = self
            .saturated
            .iter()
            .map(|(g, vhat)| vhat.dot(&self.groups.block(&u, *g)))
            .collect();
        if signs.iter().all(|&s| s >= 0.0) {
            Some(w)
        } else if signs.iter().all(|&s| s <= 0.0) {
            Some(-w)
        } else {
            None
        }
    }
}

/// Sampled strong-minimum constant `min d^2 J(w) / |w|^2` over domain directions.
/// `None` when the domain is trivial (no curvature is needed) or no draw was accepted.
pub fn estimate_strong_constant(
    prob: &Problem,
    decomp: &ModelDecomposition,
    v_s: &Vector,
    samples: usize,
    seed: u64,
) -> Result<Option<f64>> {
    let sampler = DomainSampler::new(prob, decomp, v_s)?;
    if sampler.dimension() == 0 {
        return Ok(None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    let mut accepted = 0;
    for _ in 0..(samples * 50) {
        if accepted == samples {
            break;
        }
        if let Some(w) = sampler.sample(&mut rng) {
            accepted += 1;
            let ratio = curvature(prob, decomp, &w) / w.norm_squared();
            best = best.min(ratio);
        }
    }
    Ok((accepted > 0).then_some(best))
}

/// Error bounds for the noisy problems at noise level `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryBounds {
    /// Constrained problem, sharp case.
    pub est2: Option<f64>,
    /// Lagrangian problem with `mu = mu_ratio * delta`, sharp case.
    pub est: Option<f64>,
    /// Constrained problem, strong case.
    pub est4: Option<f64>,
    /// Lagrangian problem, strong case.
    pub est3: Option<f64>,
}

/// Bounds from the sharpness constant `c`, strong constant `kappa`,
/// Lipschitz constant `lip` and `|Phi^+|`. Inapplicable bounds are `None`.
pub fn recovery_bounds_from_constants(
    c: f64,
    kappa: Option<f64>,
    lip: f64,
    pinv_norm: f64,
    delta: f64,
    mu_ratio: f64,
) -> Result<RecoveryBounds> {
    if !(delta > 0.0) || !(mu_ratio > 0.0) {
        return Err(Error::InvalidInput(format!(
            "noise level and mu ratio must be positive, got {delta} and {mu_ratio}"
        )));
    }
    let p = pinv_norm;
    let (est2, est) = if c > 0.0 && c.is_finite() {
        (
            Some(2.0 * (lip + c) * p * delta / c),
            Some(mu_ratio / (2.0 * c) * (1.0 / mu_ratio + (c + lip) * p).powi(2) * delta),
        )
    } else if c == f64::INFINITY {
        // Injective Phi: every c' > 0 is a valid sharpness constant. Take the
        // limit for the constrained bound and the minimizing c' = a / |Phi^+|
        // for the Lagrangian one.
        let a = 1.0 / mu_ratio + lip * p;
        let est = if p > 0.0 { 2.0 * mu_ratio * a * p * delta } else { mu_ratio * delta };
        (Some(2.0 * p * delta), Some(est))
    } else {
        (None, None)
    };
    let (est4, est3) = match kappa {
        Some(k) if k > 0.0 && k.is_finite() => {
            let est4 = 2.0 * (lip * p * delta / k + p * p * delta * delta).sqrt();
            let denom = 1.0 - mu_ratio * k * p * p * delta;
            let est3 = (denom > 0.0)
                .then(|| (mu_ratio / (denom * k)).sqrt() * (1.0 / mu_ratio + lip * p) * delta.sqrt());
            (Some(est4), est3)
        }
        _ => (None, None),
    };
    Ok(RecoveryBounds { est2, est, est4, est3 })
}

pub fn recovery_bounds(
    report: &CertificateReport,
    kappa: Option<f64>,
    delta: f64,
    mu_ratio: f64,
) -> Result<RecoveryBounds> {
    let c = if report.verdict == Verdict::Sharp { report.sharpness_constant } else { 0.0 };
    let kappa = if matches!(report.verdict, Verdict::Sharp | Verdict::UniqueStrongNotSharp) {
        kappa
    } else {
        None
    };
    recovery_bounds_from_constants(c, kappa, report.lipschitz, report.phi_pinv_norm, delta, mu_ratio)
}

/// Strong constant for a problem, sampled from its optimal certificate.
pub fn strong_constant(prob: &Problem, samples: usize, seed: u64) -> Result<Option<f64>> {
    let decomp = ModelDecomposition::new(prob)?;
    let check = check_optimality(prob, &decomp)?;
    if check.is_optimal != Some(true) {
        return Ok(None);
    }
    estimate_strong_constant(prob, &decomp, &check.rho.z, samples, seed)
}

/// First-order growth check along a direction: `dJ(w) / |w|`.
pub fn growth_rate(prob: &Problem, decomp: &ModelDecomposition, w: &Vector) -> Result<f64> {
    Ok(directional_derivative(prob, decomp, w)? / w.norm())
}

/// Columns of `D` on the listed coordinates (for callers assembling programs).
pub fn d_columns(prob: &Problem, coords: &[usize]) -> Matrix {
    select_columns(&prob.d.to_matrix(), coords)
}
