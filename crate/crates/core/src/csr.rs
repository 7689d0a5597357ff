//! Matrix-explicit backend: the operator assembled in CSR format and the
//! preconditioner stored as three diagonals.
//!
//! Entries are taken from the same per-cell formulas the matrix-free stencil
//! uses, so both backends describe the same matrix. Row order follows the
//! linear index of the field layout.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::fields::{check_conformant, Field3D, Layout};
use crate::matrix_free::OperatorContext;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    m: usize,
    n_z: usize,
    layout: Layout,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    pub fn n(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn row(&self, l: usize) -> (&[usize], &[T]) {
        let range = self.row_ptr[l]..self.row_ptr[l + 1];
        (&self.col_idx[range.clone()], &self.vals[range])
    }

    /// Entry `(row, col)`, zero when not stored.
    pub fn get(&self, row: usize, col: usize) -> T {
        let (cols, vals) = self.row(row);
        cols.binary_search(&col).map(|p| vals[p]).unwrap_or_else(|_| T::zero())
    }

    fn check_field(&self, x: &Field3D<T>) -> Result<()> {
        if x.m() != self.m || x.n_z() != self.n_z || x.layout() != self.layout {
            return invalid(format!(
                "field {}x{}x{} ({}) does not match matrix {}x{}x{} ({})",
                x.m(),
                x.m(),
                x.n_z(),
                x.layout(),
                self.m,
                self.m,
                self.n_z,
                self.layout
            ));
        }
        Ok(())
    }

    /// Matrix Market coordinate format, 1-based indices.
    pub fn write_matrix_market<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(
            out,
            "% {}x{}x{} grid, {} ordering",
            self.m, self.m, self.n_z, self.layout
        )?;
        writeln!(out, "{} {} {}", self.n(), self.n(), self.nnz())?;
        for row in 0..self.n() {
            let (cols, vals) = self.row(row);
            for (c, v) in cols.iter().zip(vals) {
                writeln!(out, "{} {} {:e}", row + 1, c + 1, v.as_f64())?;
            }
        }
        Ok(())
    }
}

/// Stencil entries of one row, sorted by column.
fn row_entries<T: Scalar>(
    ctx: &OperatorContext<T>,
    layout: Layout,
    l: usize,
    out: &mut Vec<(usize, T)>,
) {
    let (m, n_z) = (ctx.m(), ctx.n_z());
    let (i, j, k) = layout.cell(l, m, n_z);
    let idx = |ii, jj, kk| layout.index(ii, jj, kk, m, n_z);
    let st = *ctx.column(i, j);
    out.clear();
    out.push((l, ctx.diagonal_entry(i, j, k)));
    if k > 0 {
        out.push((idx(i, j, k - 1), ctx.lower_entry(i, j, k)));
    }
    if k + 1 < n_z {
        out.push((idx(i, j, k + 1), ctx.upper_entry(i, j, k)));
    }
    if i > 0 {
        out.push((idx(i - 1, j, k), ctx.horizontal_entry(st.west, k)));
    }
    if i + 1 < m {
        out.push((idx(i + 1, j, k), ctx.horizontal_entry(st.east, k)));
    }
    if j > 0 {
        out.push((idx(i, j - 1, k), ctx.horizontal_entry(st.south, k)));
    }
    if j + 1 < m {
        out.push((idx(i, j + 1, k), ctx.horizontal_entry(st.north, k)));
    }
    out.sort_unstable_by_key(|e| e.0);
}

fn row_count(m: usize, n_z: usize, (i, j, k): (usize, usize, usize)) -> usize {
    1 + (k > 0) as usize
        + (k + 1 < n_z) as usize
        + (i > 0) as usize
        + (i + 1 < m) as usize
        + (j > 0) as usize
        + (j + 1 < m) as usize
}

/// Assembles the full operator. Structural entries are kept even when their
/// value happens to be zero (for example with `lambda2 = 0`).
pub fn assemble_csr<T: Scalar>(ctx: &OperatorContext<T>, layout: Layout) -> CsrMatrix<T> {
    let (m, n_z) = (ctx.m(), ctx.n_z());
    let n = ctx.len();
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let mut nnz = 0;
    for l in 0..n {
        nnz += row_count(m, n_z, layout.cell(l, m, n_z));
        row_ptr.push(nnz);
    }

    let mut col_idx = vec![0usize; nnz];
    let mut vals = vec![T::zero(); nnz];

    // Split the entry arrays into disjoint blocks of whole rows.
    let block = (m * n_z).max(1);
    let mut pieces = Vec::with_capacity(n.div_ceil(block));
    let (mut cols_rest, mut vals_rest) = (col_idx.as_mut_slice(), vals.as_mut_slice());
    let mut start = 0;
    while start < n {
        let end = (start + block).min(n);
        let len = row_ptr[end] - row_ptr[start];
        let (c, cr) = std::mem::take(&mut cols_rest).split_at_mut(len);
        let (v, vr) = std::mem::take(&mut vals_rest).split_at_mut(len);
        cols_rest = cr;
        vals_rest = vr;
        pieces.push((start, end, c, v));
        start = end;
    }

    pieces.into_par_iter().for_each(|(start, end, cols, vs)| {
        let mut entries = Vec::with_capacity(7);
        let mut p = 0;
        for l in start..end {
            row_entries(ctx, layout, l, &mut entries);
            for &(c, v) in &entries {
                cols[p] = c;
                vs[p] = v;
                p += 1;
            }
        }
    });

    CsrMatrix { m, n_z, layout, row_ptr, col_idx, vals }
}

/// `y <- A x`, row-parallel.
pub fn spmv_csr<T: Scalar>(a: &CsrMatrix<T>, x: &Field3D<T>, y: &mut Field3D<T>) -> Result<()> {
    a.check_field(x)?;
    check_conformant(x, y)?;
    let xs = x.data();
    let block = (a.m * a.n_z).max(1);
    y.data_mut()
        .par_chunks_mut(block)
        .enumerate()
        .for_each(|(b, ys)| {
            let first = b * block;
            for (off, yv) in ys.iter_mut().enumerate() {
                let l = first + off;
                let mut acc = T::zero();
                for p in a.row_ptr[l]..a.row_ptr[l + 1] {
                    acc = acc + a.vals[p] * xs[a.col_idx[p]];
                }
                *yv = acc;
            }
        });
    Ok(())
}

/// Block-diagonal preconditioner stored as sub-, main- and super-diagonal.
/// Entries are grouped per column (`l = n_z (m i + j) + k`) regardless of
/// the field layout, so `dl` vanishes at every `l % n_z == 0` and `du` at
/// every `l % n_z == n_z - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSet<T> {
    m: usize,
    n_z: usize,
    pub dl: Vec<T>,
    pub dd: Vec<T>,
    pub du: Vec<T>,
}

impl<T: Scalar> TridiagonalSet<T> {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }
}

pub fn assemble_preconditioner<T: Scalar>(ctx: &OperatorContext<T>) -> TridiagonalSet<T> {
    let (m, n_z) = (ctx.m(), ctx.n_z());
    let n = ctx.len();
    let (mut dl, mut dd, mut du) = (vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]);
    dl.par_chunks_mut(n_z)
        .zip(dd.par_chunks_mut(n_z))
        .zip(du.par_chunks_mut(n_z))
        .enumerate()
        .for_each(|(col, ((l, d), u))| {
            let (i, j) = (col / m, col % m);
            for k in 0..n_z {
                d[k] = ctx.diagonal_entry(i, j, k);
                if k > 0 {
                    l[k] = ctx.lower_entry(i, j, k);
                }
                if k + 1 < n_z {
                    u[k] = ctx.upper_entry(i, j, k);
                }
            }
        });
    TridiagonalSet { m, n_z, dl, dd, du }
}

/// Solves `M x = y` with the Thomas algorithm on the stored diagonals.
pub fn solve_tridiag_set<T: Scalar>(
    set: &TridiagonalSet<T>,
    y: &Field3D<T>,
    x: &mut Field3D<T>,
) -> Result<()> {
    let (m, n_z) = (set.m, set.n_z);
    if y.m() != m || y.n_z() != n_z {
        return invalid("field does not match the tridiagonal set");
    }
    check_conformant(y, x)?;
    let layout = y.layout();
    let (cs, ks) = layout.slab_strides(m, n_z);
    let chunk = m * n_z;
    x.data_mut()
        .par_chunks_mut(chunk)
        .zip(y.data().par_chunks(chunk))
        .enumerate()
        .try_for_each_init(
            || vec![T::zero(); n_z],
            |w, (s, (xs, ys))| {
                for c in 0..m {
                    let (i, j) = layout.slab_column(s, c);
                    let base = n_z * (m * i + j);
                    let (dl, dd, du) = (
                        &set.dl[base..base + n_z],
                        &set.dd[base..base + n_z],
                        &set.du[base..base + n_z],
                    );
                    let at = |k: usize| c * cs + k * ks;

                    let den = pivot(dd[0], k_zero())?;
                    w[0] = du[0] / den;
                    xs[at(0)] = ys[at(0)] / den;
                    for k in 1..n_z {
                        let den = pivot(dd[k] - dl[k] * w[k - 1], k)?;
                        w[k] = du[k] / den;
                        xs[at(k)] = (ys[at(k)] - dl[k] * xs[at(k - 1)]) / den;
                    }
                    for k in (0..n_z.saturating_sub(1)).rev() {
                        xs[at(k)] = xs[at(k)] - w[k] * xs[at(k + 1)];
                    }
                }
                Ok(())
            },
        )
}

#[inline(always)]
fn k_zero() -> usize {
    0
}

#[inline(always)]
fn pivot<T: Scalar>(den: T, k: usize) -> Result<T> {
    if den == T::zero() || !den.is_finite() {
        return Err(Error::Breakdown(format!("zero pivot in stored tridiagonal solve at level {k}")));
    }
    Ok(den)
}

/// Matrix-explicit operator and preconditioner, assembled together.
#[derive(Debug, Clone)]
pub struct CsrBackend<T> {
    pub matrix: CsrMatrix<T>,
    pub preconditioner: TridiagonalSet<T>,
}

impl<T: Scalar> CsrBackend<T> {
    pub fn assemble(ctx: &OperatorContext<T>, layout: Layout) -> Self {
        CsrBackend {
            matrix: assemble_csr(ctx, layout),
            preconditioner: assemble_preconditioner(ctx),
        }
    }
}
