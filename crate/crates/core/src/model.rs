//! Model decomposition of a candidate and the first/second order calculus of
//! the analysis group norm at that candidate.

use crate::error::{Error, Result};
use crate::linalg::{kernel_basis, select_rows, Matrix, Vector, DEFAULT_RANK_TOL};
use crate::problem::Problem;

/// Default absolute tolerance for the equality tests on the second-order domain.
pub const BOUNDARY_TOL: f64 = 1e-8;

/// Scale-relative activity cut: `1e-9 * max_g |u_g|`, floored at `1e-12`.
pub fn default_active_tolerance(block_norms: &[f64]) -> f64 {
    let max = block_norms.iter().copied().fold(0.0, f64::max);
    (1e-9 * max).max(1e-12)
}

#[derive(Debug, Clone)]
pub struct ModelDecomposition {
    pub tol_active: f64,
    /// `D^T x0`.
    pub u0: Vector,
    pub active: Vec<usize>,
    pub inactive: Vec<usize>,
    /// Block-normalized active part of `u0`, zero on inactive groups.
    pub e: Vector,
    /// Coordinates of active groups.
    pub t_coords: Vec<usize>,
    /// Coordinates of inactive groups.
    pub s_coords: Vec<usize>,
    /// `p x |I|`; column `j` is `u0` restricted to the `j`-th active group.
    pub active_blocks: Matrix,
    /// Rows `(I - e_g e_g^T) (D^T)_g` for active `g`; its kernel is the E-subspace.
    pub q: Matrix,
    /// Orthonormal basis (columns) of the E-subspace.
    pub e_basis: Matrix,
    /// `D^T` as a `p x n` matrix.
    pub d_adjoint: Matrix,
}

impl ModelDecomposition {
    pub fn new(prob: &Problem) -> Result<Self> {
        let u0 = prob.d.apply_adjoint(&prob.x0);
        let tol = default_active_tolerance(&prob.groups.block_norms(&u0));
        model_decomposition(prob, tol)
    }

    pub fn block_norm_u0(&self, prob: &Problem, g: usize) -> f64 {
        prob.groups.block_norm(&self.u0, g)
    }

    /// Columns of `D` restricted to the coordinates of S, i.e. `D_S` (`n x |S|`).
    pub fn d_s(&self) -> Matrix {
        select_rows(&self.d_adjoint, &self.s_coords).transpose()
    }

    /// `D^T_S`, the `|S| x n` restriction of `D^T`.
    pub fn d_adjoint_s(&self) -> Matrix {
        select_rows(&self.d_adjoint, &self.s_coords)
    }

    /// `D e` in the signal space.
    pub fn d_e(&self) -> Vector {
        self.d_adjoint.tr_mul(&self.e)
    }

    /// Distance from `w` to the E-subspace.
    pub fn distance_to_e(&self, w: &Vector) -> f64 {
        let coeff = self.e_basis.tr_mul(w);
        (w - &self.e_basis * coeff).norm()
    }
}

pub fn model_decomposition(prob: &Problem, tol_active: f64) -> Result<ModelDecomposition> {
    if !(tol_active >= 0.0 && tol_active.is_finite()) {
        return Err(Error::InvalidInput(format!("activity tolerance must be finite and non-negative, got {tol_active}")));
    }
    let groups = &prob.groups;
    let d_adjoint = prob.d_adjoint_matrix();
    let u0 = &d_adjoint * &prob.x0;
    let norms = groups.block_norms(&u0);

    let (active, inactive): (Vec<usize>, Vec<usize>) = (0..groups.len()).partition(|&g| norms[g] > tol_active);
    let mut e = Vector::zeros(prob.p());
    let mut active_blocks = Matrix::zeros(prob.p(), active.len());
    for (j, &g) in active.iter().enumerate() {
        for &i in groups.group(g) {
            e[i] = u0[i] / norms[g];
            active_blocks[(i, j)] = u0[i];
        }
    }
    let t_coords = groups.coordinates_of(&active);
    let s_coords = groups.coordinates_of(&inactive);

    // Each active block contributes (I - e_g e_g^T)(D^T)_g. This is the
    // rank-one-corrected block divided by |u_g|^2, so the kernel is unchanged
    // while the rows stay well scaled.
    let n = prob.n();
    let mut q = Matrix::zeros(t_coords.len(), n);
    let mut row = 0;
    for &g in &active {
        let idx = groups.group(g);
        let dg = select_rows(&d_adjoint, idx);
        let eg = Vector::from_iterator(idx.len(), idx.iter().map(|&i| e[i]));
        let proj = &dg - &eg * (eg.transpose() * &dg);
        q.view_mut((row, 0), (idx.len(), n)).copy_from(&proj);
        row += idx.len();
    }
    let e_basis = kernel_basis(&q, DEFAULT_RANK_TOL)?;

    Ok(ModelDecomposition {
        tol_active,
        u0,
        active,
        inactive,
        e,
        t_coords,
        s_coords,
        active_blocks,
        q,
        e_basis,
        d_adjoint,
    })
}

fn check_signal(prob: &Problem, w: &Vector, what: &str) -> Result<()> {
    if w.len() == prob.n() {
        Ok(())
    } else {
        Err(Error::mismatch(what, prob.n(), w.len()))
    }
}

/// `v` lies in the subdifferential of the group norm at `u0`: fixed to `e` on
/// active groups, inside the unit dual ball on inactive ones.
pub fn subdifferential_member(prob: &Problem, v: &Vector, decomp: &ModelDecomposition, tol: f64) -> Result<bool> {
    if v.len() != prob.p() {
        return Err(Error::mismatch("subdifferential_member", prob.p(), v.len()));
    }
    let groups = &prob.groups;
    let diff = v - &decomp.e;
    let active_ok = decomp.active.iter().all(|&g| groups.block_norm(&diff, g) <= tol);
    let inactive_ok = decomp.inactive.iter().all(|&g| groups.block_norm(v, g) <= 1.0 + tol);
    Ok(active_ok && inactive_ok)
}

/// Directional derivative of `J` at `x0` along `w`.
pub fn directional_derivative(prob: &Problem, decomp: &ModelDecomposition, w: &Vector) -> Result<f64> {
    check_signal(prob, w, "directional_derivative")?;
    let u = &decomp.d_adjoint * w;
    let linear = decomp.e.dot(&u);
    let inactive: f64 = decomp.inactive.iter().map(|&g| prob.groups.block_norm(&u, g)).sum();
    Ok(linear + inactive)
}

/// Whether `w` lies in the domain of the second subderivative: `Phi w = 0`
/// and a vanishing directional derivative.
pub fn in_second_order_domain(prob: &Problem, decomp: &ModelDecomposition, w: &Vector, tol: f64) -> Result<bool> {
    check_signal(prob, w, "second-order domain")?;
    let dj = directional_derivative(prob, decomp, w)?;
    Ok((&prob.phi * w).norm() <= tol && dj.abs() <= tol)
}

/// Second subderivative of `J` at `x0` for the certificate `e`; `+inf` off its domain.
pub fn second_subderivative(prob: &Problem, decomp: &ModelDecomposition, w: &Vector) -> Result<f64> {
    second_subderivative_with_tol(prob, decomp, w, BOUNDARY_TOL)
}

pub fn second_subderivative_with_tol(prob: &Problem, decomp: &ModelDecomposition, w: &Vector, tol: f64) -> Result<f64> {
    if !in_second_order_domain(prob, decomp, w, tol)? {
        return Ok(f64::INFINITY);
    }
    Ok(curvature(prob, decomp, w))
}

/// The active-group curvature term, evaluated without the domain test.
pub fn curvature(prob: &Problem, decomp: &ModelDecomposition, w: &Vector) -> f64 {
    let u = &decomp.d_adjoint * w;
    let groups = &prob.groups;
    let mut total = 0.0;
    for &g in &decomp.active {
        let mut ww = 0.0;
        let mut uu = 0.0;
        let mut uw = 0.0;
        for &i in groups.group(g) {
            ww += u[i] * u[i];
            uu += decomp.u0[i] * decomp.u0[i];
            uw += decomp.u0[i] * u[i];
        }
        let term = (ww * uu - uw * uw).max(0.0) / uu.powf(1.5);
        total += term;
    }
    total
}

/// Membership in the descent cone of `J` at `x0`.
pub fn descent_cone_member(prob: &Problem, decomp: &ModelDecomposition, w: &Vector, tol: f64) -> Result<bool> {
    let dj = directional_derivative(prob, decomp, w)?;
    if dj < -tol {
        return Ok(true);
    }
    if dj.abs() > tol {
        return Ok(false);
    }
    Ok(decomp.distance_to_e(w) <= tol * w.norm().max(1.0))
}

/// Step length along a boundary descent direction that keeps every active block
/// on its own side of the origin: `min -1/lambda_g` over negative
/// `lambda_g = <u_g, (D^T w)_g> / |u_g|^2`, or `1` if none is negative.
pub fn boundary_step(prob: &Problem, decomp: &ModelDecomposition, w: &Vector) -> Result<f64> {
    check_signal(prob, w, "boundary_step")?;
    let u = &decomp.d_adjoint * w;
    let mut step = f64::INFINITY;
    for &g in &decomp.active {
        let idx = prob.groups.group(g);
        let uu: f64 = idx.iter().map(|&i| decomp.u0[i] * decomp.u0[i]).sum();
        let uw: f64 = idx.iter().map(|&i| decomp.u0[i] * u[i]).sum();
        let lambda = uw / uu;
        if lambda < 0.0 {
            step = step.min(-1.0 / lambda);
        }
    }
    Ok(if step.is_finite() { step } else { 1.0 })
}
