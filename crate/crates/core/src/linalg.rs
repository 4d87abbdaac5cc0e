//! Dense linear-algebra primitives built on a single rank-revealing SVD.
//!
//! Every rank decision (pseudoinverse, kernel, cokernel) goes through
//! [`RankRevealingDecomposition`] with a tolerance relative to the largest
//! singular value, so that all downstream certificates agree on what is zero.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default relative rank tolerance.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// SVD of an `rows x cols` matrix with a *complete* right basis.
///
/// `right` is `cols x cols`; its first `min(rows, cols)` columns pair with
/// `singular_values` (sorted non-increasing) and the remaining columns complete
/// the basis of the domain, so `right.columns(rank, cols - rank)` spans the kernel.
#[derive(Debug, Clone)]
pub struct RankRevealingDecomposition {
    pub left: Matrix,
    pub singular_values: Vector,
    pub right: Matrix,
    pub rank: usize,
    pub tol_rank: f64,
}

impl RankRevealingDecomposition {
    pub fn new(a: &Matrix, tol_rank: f64) -> Result<Self> {
        ensure_finite(a, "matrix")?;
        if !(tol_rank > 0.0 && tol_rank.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "rank tolerance must be positive and finite, got {tol_rank}"
            )));
        }
        let (rows, cols) = a.shape();
        let k = rows.min(cols);
        if rows == 0 || cols == 0 {
            return Ok(Self {
                left: Matrix::zeros(rows, 0),
                singular_values: Vector::zeros(0),
                right: Matrix::identity(cols, cols),
                rank: 0,
                tol_rank,
            });
        }

        let (u, sv, v) = full_svd(a)?;
        let mut order: Vec<usize> = (0..sv.len()).collect();
        order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]).then(i.cmp(&j)));

        let mut right = Matrix::zeros(cols, cols);
        for (dst, &src) in order.iter().enumerate() {
            right.set_column(dst, &v.column(src));
        }
        right.columns_mut(k, cols - k).copy_from(&v.columns(k, cols - k));
        let mut left = Matrix::zeros(rows, k);
        let mut singular_values = Vector::zeros(k);
        for (dst, &src) in order.iter().take(k).enumerate() {
            left.set_column(dst, &u.column(src));
            singular_values[dst] = sv[src].max(0.0);
        }

        let sigma_max = singular_values[0];
        let rank = if sigma_max > 0.0 {
            singular_values
                .iter()
                .take_while(|&&s| s > tol_rank * sigma_max)
                .count()
        } else {
            0
        };
        Ok(Self {
            left,
            singular_values,
            right,
            rank,
            tol_rank,
        })
    }

    /// Re-cut the rank against `tol_rank * max(sigma_max, scale)`, for matrices
    /// that are products of factors whose norms set the meaningful scale.
    pub fn with_reference_scale(mut self, scale: f64) -> Self {
        let cut = self.tol_rank * self.sigma_max().max(scale);
        self.rank = self.singular_values.iter().take_while(|&&s| s > cut).count();
        self
    }

    pub fn rows(&self) -> usize {
        self.left.nrows()
    }

    pub fn cols(&self) -> usize {
        self.right.nrows()
    }

    pub fn sigma_max(&self) -> f64 {
        self.singular_values.iter().copied().next().unwrap_or(0.0)
    }

    /// Smallest singular value above the rank cut, or `None` for the zero map.
    pub fn sigma_min_positive(&self) -> Option<f64> {
        (self.rank > 0).then(|| self.singular_values[self.rank - 1])
    }

    pub fn pseudoinverse(&self) -> Matrix {
        let r = self.rank;
        let mut vs = self.right.columns(0, r).into_owned();
        for j in 0..r {
            let inv = 1.0 / self.singular_values[j];
            vs.column_mut(j).scale_mut(inv);
        }
        vs * self.left.columns(0, r).transpose()
    }

    /// Orthonormal kernel basis as columns, signs fixed.
    pub fn kernel(&self) -> Matrix {
        let n = self.cols();
        let mut k = self.right.columns(self.rank, n - self.rank).into_owned();
        fix_column_signs(&mut k);
        k
    }

    /// Orthonormal basis of the row space as columns.
    pub fn row_space(&self) -> Matrix {
        self.right.columns(0, self.rank).into_owned()
    }
}

pub(crate) fn ensure_finite(a: &Matrix, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} has non-finite entries")))
    }
}

pub(crate) fn ensure_finite_vec(v: &Vector, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} has non-finite entries")))
    }
}

/// Flip each column so its largest-magnitude entry is positive.
pub fn fix_column_signs(m: &mut Matrix) {
    for mut col in m.column_iter_mut() {
        let mut best = 0.0_f64;
        let mut sign = 1.0;
        for &v in col.iter() {
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
        if sign < 0.0 {
            col.neg_mut();
        }
    }
}

pub fn pseudoinverse(a: &Matrix, tol_rank: f64) -> Result<Matrix> {
    Ok(RankRevealingDecomposition::new(a, tol_rank)?.pseudoinverse())
}

/// Columns form an orthonormal basis of `Ker A`.
pub fn kernel_basis(a: &Matrix, tol_rank: f64) -> Result<Matrix> {
    Ok(RankRevealingDecomposition::new(a, tol_rank)?.kernel())
}

/// Rows of `N` are orthonormal and span `Ker Phi`, so `Ker N = Im Phi^T`.
pub fn cokernel_rows(phi: &Matrix, tol_rank: f64) -> Result<Matrix> {
    Ok(kernel_basis(phi, tol_rank)?.transpose())
}

/// Euclidean projection of `x` onto `{z : Phi z = Phi x_ref}`.
pub fn affine_project(x: &Vector, phi: &Matrix, x_ref: &Vector, phi_pinv: &Matrix) -> Result<Vector> {
    let n = phi.ncols();
    if x.len() != n {
        return Err(Error::mismatch("affine_project x", n, x.len()));
    }
    if x_ref.len() != n {
        return Err(Error::mismatch("affine_project x_ref", n, x_ref.len()));
    }
    if phi_pinv.shape() != (n, phi.nrows()) {
        return Err(Error::mismatch("affine_project pseudoinverse rows", n, phi_pinv.nrows()));
    }
    let diff = x - x_ref;
    Ok(x - phi_pinv * (phi * diff))
}

/// `min ||B w||` over unit `w` in the span of the orthonormal columns of `k`.
///
/// Returns `f64::INFINITY` when `k` has no columns.
pub fn restricted_smallest_gain(b: &Matrix, k: &Matrix) -> Result<f64> {
    if b.ncols() != k.nrows() {
        return Err(Error::mismatch("restricted_smallest_gain", b.ncols(), k.nrows()));
    }
    if k.ncols() == 0 {
        return Ok(f64::INFINITY);
    }
    if b.nrows() < k.ncols() {
        return Ok(0.0);
    }
    let bk = b * k;
    ensure_finite(&bk, "restricted product")?;
    let sv = singular_values(&bk)?;
    Ok(sv.iter().copied().fold(f64::INFINITY, f64::min).max(0.0))
}

/// Largest singular value.
pub fn spectral_norm(a: &Matrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    singular_values(a).map_or(f64::NAN, |sv| sv.iter().copied().fold(0.0, f64::max))
}

fn to_faer(a: &Matrix) -> faer::Mat<f64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn from_faer(a: faer::MatRef<'_, f64>) -> Matrix {
    Matrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

// nalgebra's bidiagonal SVD loses accuracy on rank-deficient input, so every
// decomposition goes through faer.
fn full_svd(a: &Matrix) -> Result<(Matrix, Vec<f64>, Matrix)> {
    let svd = to_faer(a)
        .svd()
        .map_err(|e| Error::Solver(format!("SVD did not converge: {e:?}")))?;
    let sv = svd.S().column_vector().iter().copied().collect();
    Ok((from_faer(svd.U()), sv, from_faer(svd.V())))
}

fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    to_faer(a)
        .singular_values()
        .map_err(|e| Error::Solver(format!("SVD did not converge: {e:?}")))
}

/// Columns `cols` of `a`, in the given order.
pub fn select_columns(a: &Matrix, cols: &[usize]) -> Matrix {
    Matrix::from_fn(a.nrows(), cols.len(), |i, j| a[(i, cols[j])])
}

/// Rows `rows` of `a`, in the given order.
pub fn select_rows(a: &Matrix, rows: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), a.ncols(), |i, j| a[(rows[i], j)])
}

pub fn select_entries(v: &Vector, idx: &[usize]) -> Vector {
    Vector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// Stack `top` over `bottom` (same column count).
pub fn vstack(top: &Matrix, bottom: &Matrix) -> Matrix {
    assert_eq!(top.ncols(), bottom.ncols(), "vstack column mismatch");
    let mut out = Matrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.view_mut((0, 0), top.shape()).copy_from(top);
    out.view_mut((top.nrows(), 0), bottom.shape()).copy_from(bottom);
    out
}
