//! Dense materialization of the operator for small grids.
//!
//! The entries are built from the unscaled coefficient vectors `a, b, c, d`
//! and the panel geometry in double precision, independently of the scaled
//! quantities the matrix-free and CSR backends work with. This makes the
//! dense matrix usable as a reference for both.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::fields::{Field3D, Layout};
use crate::matrix_free::OperatorContext;
use crate::scalar::Scalar;

/// Largest dimension accepted by the dense routines.
pub const DENSE_LIMIT: usize = 4096;

fn check_size(n: usize) -> Result<()> {
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge { n, limit: DENSE_LIMIT });
    }
    Ok(())
}

fn assemble<T: Scalar>(ctx: &OperatorContext<T>, layout: Layout, horizontal: bool) -> Result<DMatrix<f64>> {
    let (m, n_z) = (ctx.m(), ctx.n_z());
    let n = ctx.len();
    check_size(n)?;
    let prof = ctx.profile().unscaled();
    let geo = ctx.geometry();
    let idx = |i, j, k| layout.index(i, j, k, m, n_z);
    let mut a = DMatrix::zeros(n, n);
    for i in 0..m {
        for j in 0..m {
            let area = geo.area(i, j);
            let nb = geo.neighbor_alphas(i, j);
            let alpha = nb.west + nb.east + nb.south + nb.north;
            for k in 0..n_z {
                let row = idx(i, j, k);
                let dk = prof.d[k];
                a[(row, row)] = (prof.a[k] - prof.b[k] - prof.c[k]) * area - alpha * dk;
                if k > 0 {
                    a[(row, idx(i, j, k - 1))] = prof.c[k] * area;
                }
                if k + 1 < n_z {
                    a[(row, idx(i, j, k + 1))] = prof.b[k] * area;
                }
                if !horizontal {
                    continue;
                }
                if i > 0 {
                    a[(row, idx(i - 1, j, k))] = nb.west * dk;
                }
                if i + 1 < m {
                    a[(row, idx(i + 1, j, k))] = nb.east * dk;
                }
                if j > 0 {
                    a[(row, idx(i, j - 1, k))] = nb.south * dk;
                }
                if j + 1 < m {
                    a[(row, idx(i, j + 1, k))] = nb.north * dk;
                }
            }
        }
    }
    Ok(a)
}

/// Full operator `A`, rows ordered by `layout`.
pub fn assemble_dense<T: Scalar>(ctx: &OperatorContext<T>, layout: Layout) -> Result<DMatrix<f64>> {
    assemble(ctx, layout, true)
}

/// Block-diagonal preconditioner `M` (horizontal off-diagonals dropped).
pub fn assemble_dense_preconditioner<T: Scalar>(ctx: &OperatorContext<T>, layout: Layout) -> Result<DMatrix<f64>> {
    assemble(ctx, layout, false)
}

pub fn to_vector<T: Scalar>(x: &Field3D<T>) -> DVector<f64> {
    DVector::from_iterator(x.len(), x.data().iter().map(|v| v.as_f64()))
}

pub fn from_vector(v: &DVector<f64>, m: usize, n_z: usize, layout: Layout) -> Result<Field3D<f64>> {
    Field3D::from_vec(m, n_z, layout, v.iter().copied().collect())
}

/// `A x` with the field interpreted in its own layout.
pub fn dense_apply<T: Scalar>(a: &DMatrix<f64>, x: &Field3D<T>) -> Result<Field3D<f64>> {
    if a.nrows() != x.len() || a.ncols() != x.len() {
        return invalid(format!("dense matrix is {}x{}, field has {} entries", a.nrows(), a.ncols(), x.len()));
    }
    from_vector(&(a * to_vector(x)), x.m(), x.n_z(), x.layout())
}

/// `max |A - A^T| / max |A|`
pub fn symmetry_defect(a: &DMatrix<f64>) -> f64 {
    let scale = a.amax();
    if scale == 0.0 {
        return 0.0;
    }
    (a - a.transpose()).amax() / scale
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_size(a.nrows())?;
    let mut ev: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Extreme eigenvalues and condition numbers of `A` and of the two
/// symmetrically preconditioned operators `D^{-1/2} A D^{-1/2}` (Jacobi) and
/// `L^{-1} A L^{-T}` with `M = L L^T` (vertical line preconditioner). Both
/// are similar to `D^{-1} A` and `M^{-1} A`, so their spectra coincide.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumReport {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub cond: f64,
    pub jacobi_min: f64,
    pub jacobi_max: f64,
    pub cond_jacobi: f64,
    pub line_min: f64,
    pub line_max: f64,
    pub cond_line: f64,
}

fn extremes(ev: &[f64]) -> (f64, f64, f64) {
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    (lo, hi, hi / lo)
}

pub fn spectrum_report(a: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<SpectrumReport> {
    let n = a.nrows();
    check_size(n)?;
    if n == 0 || m.nrows() != n {
        return invalid("matrices must be square, nonempty and of equal size");
    }
    let (lambda_min, lambda_max, cond) = extremes(&symmetric_eigenvalues(a)?);

    let dinv = DVector::from_iterator(n, a.diagonal().iter().map(|d| 1.0 / d.sqrt()));
    let jac = DMatrix::from_fn(n, n, |r, c| a[(r, c)] * dinv[r] * dinv[c]);
    let (jacobi_min, jacobi_max, cond_jacobi) = extremes(&symmetric_eigenvalues(&jac)?);

    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Breakdown("preconditioner is not positive definite".into()))?;
    let l = chol.l();
    let y = l
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::Breakdown("singular Cholesky factor".into()))?;
    let s = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::Breakdown("singular Cholesky factor".into()))?;
    let s = (&s + s.transpose()) * 0.5;
    let (line_min, line_max, cond_line) = extremes(&symmetric_eigenvalues(&s)?);

    Ok(SpectrumReport {
        lambda_min,
        lambda_max,
        cond,
        jacobi_min,
        jacobi_max,
        cond_jacobi,
        line_min,
        line_max,
        cond_line,
    })
}

/// Per-iteration quantities of a textbook PCG run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseStep {
    pub alpha: f64,
    pub beta: f64,
    pub r_norm: f64,
}

/// Plain PCG on dense matrices, solving with `M` through its LU factors.
/// Returns the residual norm of the start vector `u = 0` and `iters` steps.
pub fn dense_pcg(a: &DMatrix<f64>, m: &DMatrix<f64>, f: &DVector<f64>, iters: usize) -> Result<(f64, Vec<DenseStep>)> {
    let lu = m.clone().lu();
    let solve = |r: &DVector<f64>| lu.solve(r).ok_or_else(|| Error::Breakdown("singular M".into()));
    let mut u = DVector::zeros(f.len());
    let mut r = f.clone();
    let mut z = solve(&r)?;
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let r0 = r.norm();
    let mut steps = Vec::with_capacity(iters);
    for _ in 0..iters {
        let q = a * &p;
        let alpha = rz / p.dot(&q);
        u.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &q, 1.0);
        z = solve(&r)?;
        let rz_new = r.dot(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        p = &z + &p * beta;
        steps.push(DenseStep { alpha, beta, r_norm: r.norm() });
    }
    Ok((r0, steps))
}
