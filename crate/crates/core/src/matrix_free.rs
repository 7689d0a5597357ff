//! Matrix-free operator, vertical line preconditioner and the two fused
//! ("interleaved") kernels of the PCG iteration.
//!
//! The stencil in cell `(i, j, k)` is rebuilt from the four profile vectors
//! and the per-column geometry:
//!
//! ```text
//! y_ijk = d_k [ ((a'_k - b'_k - c'_k) |T| - alpha_T) x_ijk
//!             + b'_k |T| x_ij,k+1 + c'_k |T| x_ij,k-1
//!             + sum over neighbours alpha_TT' x_T',k ]
//! ```
//!
//! The preconditioner drops the horizontal off-diagonal couplings and solves
//! the remaining tridiagonal system in every column with the Thomas
//! algorithm. All kernels are parallel over columns and sequential in `k`
//! within a column.

use rayon::prelude::*;

use crate::discretization::VerticalProfile;
use crate::error::{Error, Result};
use crate::fields::{check_conformant, combine_columns, Field3D, Layout};
use crate::geometry::PanelGeometry;
use crate::scalar::Scalar;

/// Columns processed together in the tridiagonal sweeps, so that their
/// independent elimination chains overlap.
const LANES: usize = 4;

/// Geometry of one column, computed once at setup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnStencil<T> {
    pub area: T,
    pub west: T,
    pub east: T,
    pub south: T,
    pub north: T,
    /// `alpha_T`
    pub diag: T,
    /// `alpha_T / |T|`
    pub diag_scaled: T,
}

/// Precomputed data shared read-only by every kernel.
#[derive(Debug, Clone)]
pub struct OperatorContext<T> {
    m: usize,
    n_z: usize,
    profile: VerticalProfile,
    geometry: PanelGeometry,
    pub(crate) b_prime: Vec<T>,
    pub(crate) c_prime: Vec<T>,
    pub(crate) d: Vec<T>,
    /// `(a'_k - b'_k) - c'_k`
    pub(crate) vdiag: Vec<T>,
    pub(crate) columns: Vec<ColumnStencil<T>>,
}

impl<T: Scalar> OperatorContext<T> {
    pub fn new(profile: VerticalProfile, geometry: PanelGeometry) -> Result<Self> {
        let n_z = profile.n_z;
        let m = geometry.m();
        if n_z == 0 || m == 0 {
            return Err(Error::InvalidArgument("empty grid".into()));
        }
        // The kernels rely on the Neumann closure to skip boundary branches.
        if profile.c_prime[0] != 0.0 || profile.b_prime[n_z - 1] != 0.0 {
            return Err(Error::InvalidArgument(
                "profile must satisfy c'[0] = 0 and b'[n_z-1] = 0".into(),
            ));
        }
        if profile.d.iter().any(|&d| d == 0.0 || !d.is_finite()) {
            return Err(Error::InvalidArgument("profile d must be nonzero".into()));
        }
        let cast = |v: &[f64]| v.iter().map(|&x| T::of_f64(x)).collect::<Vec<T>>();
        let a_prime = cast(&profile.a_prime);
        let b_prime = cast(&profile.b_prime);
        let c_prime = cast(&profile.c_prime);
        let d = cast(&profile.d);
        let vdiag = (0..n_z).map(|k| a_prime[k] - b_prime[k] - c_prime[k]).collect();

        let mut columns = Vec::with_capacity(m * m);
        for i in 0..m {
            for j in 0..m {
                let nb = geometry.neighbor_alphas(i, j);
                let area = T::of_f64(geometry.area(i, j));
                let diag = T::of_f64(geometry.alpha_diag(i, j));
                columns.push(ColumnStencil {
                    area,
                    west: T::of_f64(nb.west),
                    east: T::of_f64(nb.east),
                    south: T::of_f64(nb.south),
                    north: T::of_f64(nb.north),
                    diag,
                    diag_scaled: diag / area,
                });
            }
        }

        Ok(OperatorContext {
            m,
            n_z,
            profile,
            geometry,
            b_prime,
            c_prime,
            d,
            vdiag,
            columns,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn len(&self) -> usize {
        self.m * self.m * self.n_z
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn profile(&self) -> &VerticalProfile {
        &self.profile
    }

    pub fn geometry(&self) -> &PanelGeometry {
        &self.geometry
    }

    pub fn column(&self, i: usize, j: usize) -> &ColumnStencil<T> {
        &self.columns[i * self.m + j]
    }

    #[inline(always)]
    fn column_of(&self, layout: Layout, s: usize, c: usize) -> &ColumnStencil<T> {
        let (i, j) = layout.slab_column(s, c);
        self.column(i, j)
    }

    /// Diagonal entry of row `(i, j, k)`.
    #[inline(always)]
    pub fn diagonal_entry(&self, i: usize, j: usize, k: usize) -> T {
        let st = self.column(i, j);
        (self.vdiag[k] * st.area - st.diag) * self.d[k]
    }

    /// Coupling of level `k` to `k + 1` in a column (zero on the top level).
    #[inline(always)]
    pub fn upper_entry(&self, i: usize, j: usize, k: usize) -> T {
        self.b_prime[k] * self.column(i, j).area * self.d[k]
    }

    /// Coupling of level `k` to `k - 1` in a column (zero on the bottom level).
    #[inline(always)]
    pub fn lower_entry(&self, i: usize, j: usize, k: usize) -> T {
        self.c_prime[k] * self.column(i, j).area * self.d[k]
    }

    /// Coupling of level `k` to the same level of a horizontal neighbour.
    #[inline(always)]
    pub fn horizontal_entry(&self, alpha: T, k: usize) -> T {
        alpha * self.d[k]
    }

    pub fn zeros(&self, layout: Layout) -> Field3D<T> {
        Field3D::zeros(self.m, self.n_z, layout)
    }

    pub(crate) fn check(&self, x: &Field3D<T>) -> Result<()> {
        if x.m() != self.m || x.n_z() != self.n_z {
            return Err(Error::InvalidArgument(format!(
                "field {}x{}x{} does not match operator {}x{}x{}",
                x.m(),
                x.m(),
                x.n_z(),
                self.m,
                self.m,
                self.n_z
            )));
        }
        Ok(())
    }

    /// Start offsets of the column and its four neighbours. Missing
    /// neighbours point at the column itself; their coefficient is zero.
    #[inline(always)]
    fn neighbourhood(&self, layout: Layout, i: usize, j: usize) -> Neighbourhood {
        let (m, n_z) = (self.m, self.n_z);
        let (base, ks) = layout.column(i, j, m, n_z);
        let at = |ii: usize, jj: usize| layout.column(ii, jj, m, n_z).0;
        Neighbourhood {
            base,
            ks,
            west: if i > 0 { at(i - 1, j) } else { base },
            east: if i + 1 < m { at(i + 1, j) } else { base },
            south: if j > 0 { at(i, j - 1) } else { base },
            north: if j + 1 < m { at(i, j + 1) } else { base },
        }
    }

    /// Bracketed stencil term at level `k` (everything but the factor `d_k`).
    /// Out-of-range vertical neighbours are read from the cell itself; their
    /// coefficients `c'_0` and `b'_{n_z-1}` vanish.
    #[inline(always)]
    fn stencil(&self, st: &ColumnStencil<T>, nh: &Neighbourhood, x: &[T], k: usize) -> T {
        let ks = nh.ks;
        let below = k.saturating_sub(1) * ks;
        let above = if k + 1 < self.n_z { (k + 1) * ks } else { k * ks };
        let off = k * ks;
        (self.vdiag[k] * st.area - st.diag) * x[nh.base + off]
            + self.b_prime[k] * st.area * x[nh.base + above]
            + self.c_prime[k] * st.area * x[nh.base + below]
            + st.east * x[nh.east + off]
            + st.west * x[nh.west + off]
            + st.north * x[nh.north + off]
            + st.south * x[nh.south + off]
    }

    /// Calls `emit(k, s_k)` for every level of the column, where `s_k` is
    /// the bracketed stencil term. Contiguous columns take a branch-free path
    /// over slices; it evaluates the same expression as [`Self::stencil`].
    #[inline(always)]
    fn sweep_column(&self, st: &ColumnStencil<T>, nh: &Neighbourhood, x: &[T], mut emit: impl FnMut(usize, T)) {
        let n = self.n_z;
        if nh.ks != 1 {
            for k in 0..n {
                emit(k, self.stencil(st, nh, x, k));
            }
            return;
        }
        let xc = &x[nh.base..nh.base + n];
        let (xw, xe) = (&x[nh.west..nh.west + n], &x[nh.east..nh.east + n]);
        let (xs, xn) = (&x[nh.south..nh.south + n], &x[nh.north..nh.north + n]);
        let (vd, bp, cp) = (&self.vdiag[..n], &self.b_prime[..n], &self.c_prime[..n]);
        let term = |k: usize, below: usize, above: usize| {
            (vd[k] * st.area - st.diag) * xc[k]
                + bp[k] * st.area * xc[above]
                + cp[k] * st.area * xc[below]
                + st.east * xe[k]
                + st.west * xw[k]
                + st.north * xn[k]
                + st.south * xs[k]
        };
        if n == 1 {
            emit(0, term(0, 0, 0));
            return;
        }
        emit(0, term(0, 0, 1));
        for k in 1..n - 1 {
            emit(k, term(k, k - 1, k + 1));
        }
        emit(n - 1, term(n - 1, n - 2, n - 1));
    }

    /// `y <- A x`
    pub fn apply(&self, x: &Field3D<T>, y: &mut Field3D<T>) -> Result<()> {
        self.check(x)?;
        check_conformant(x, y)?;
        let (m, n_z, layout) = (self.m, self.n_z, x.layout());
        let (cs, ks) = layout.slab_strides(m, n_z);
        let xs = x.data();
        y.data_mut()
            .par_chunks_mut(m * n_z)
            .enumerate()
            .for_each(|(s, slab)| {
                for c in 0..m {
                    let (i, j) = layout.slab_column(s, c);
                    let st = self.column(i, j);
                    let nh = self.neighbourhood(layout, i, j);
                    let d = &self.d[..n_z];
                    if ks == 1 {
                        let out = &mut slab[c * cs..c * cs + n_z];
                        self.sweep_column(st, &nh, xs, |k, v| out[k] = v * d[k]);
                    } else {
                        self.sweep_column(st, &nh, xs, |k, v| slab[c * cs + k * ks] = v * d[k]);
                    }
                }
            });
        Ok(())
    }

    /// Solves `M x = y` column by column, where `M` keeps the full column
    /// coupling of `A` (including the horizontal diagonal) and drops the
    /// couplings between columns.
    pub fn precondition(&self, y: &Field3D<T>, x: &mut Field3D<T>) -> Result<()> {
        self.check(y)?;
        check_conformant(y, x)?;
        let (m, n_z, layout) = (self.m, self.n_z, y.layout());
        let chunk = m * n_z;
        x.data_mut()
            .par_chunks_mut(chunk)
            .zip(y.data().par_chunks(chunk))
            .enumerate()
            .try_for_each_init(
                || vec![T::zero(); LANES * n_z],
                |phi, (s, (xs, ys))| {
                    let mut c0 = 0;
                    while c0 < m {
                        if m - c0 >= LANES {
                            self.solve_group::<LANES>(layout, s, c0, ys, xs, phi)?;
                            c0 += LANES;
                        } else {
                            self.solve_group::<1>(layout, s, c0, ys, xs, phi)?;
                            c0 += 1;
                        }
                    }
                    Ok(())
                },
            )
    }

    /// Thomas sweeps over `G` adjacent columns of slab `s`, starting at local
    /// column `c0`. The columns are independent; interleaving them lets their
    /// elimination chains overlap.
    #[inline(always)]
    fn solve_group<const G: usize>(
        &self,
        layout: Layout,
        s: usize,
        c0: usize,
        ys: &[T],
        xs: &mut [T],
        phi: &mut [T],
    ) -> Result<()> {
        let n_z = self.n_z;
        let (cs, ks) = layout.slab_strides(self.m, n_z);
        let sts: [&ColumnStencil<T>; G] = std::array::from_fn(|l| self.column_of(layout, s, c0 + l));
        let base: [usize; G] = std::array::from_fn(|l| (c0 + l) * cs);
        let phi = &mut phi[..G * n_z];
        let mut ok = true;
        for l in 0..G {
            let (z0, phi0) = self.thomas_first(sts[l], ys[base[l]], &mut ok);
            xs[base[l]] = z0;
            phi[l] = phi0;
        }
        for k in 1..n_z {
            for l in 0..G {
                let at = base[l] + k * ks;
                let (zk, phik) = self.thomas_step(sts[l], k, ys[at], xs[at - ks], phi[(k - 1) * G + l], &mut ok);
                xs[at] = zk;
                phi[k * G + l] = phik;
            }
        }
        check_pivots(ok)?;
        for k in (0..n_z - 1).rev() {
            for l in 0..G {
                let at = base[l] + k * ks;
                xs[at] = xs[at] - phi[k * G + l] * xs[at + ks];
            }
        }
        Ok(())
    }

    /// Fused counterpart of [`Self::solve_group`]: updates `r`, solves for
    /// `z` and writes the per-column `||r||^2` and `<r, z>` partials.
    #[allow(clippy::too_many_arguments)]
    #[inline(always)]
    fn fused_solve_group<const G: usize>(
        &self,
        layout: Layout,
        s: usize,
        c0: usize,
        alpha: T,
        qs: &[T],
        rs: &mut [T],
        zs: &mut [T],
        phi: &mut [T],
        rr_out: &mut [T],
        rz_out: &mut [T],
    ) -> Result<()> {
        let n_z = self.n_z;
        let (cs, ks) = layout.slab_strides(self.m, n_z);
        let sts: [&ColumnStencil<T>; G] = std::array::from_fn(|l| self.column_of(layout, s, c0 + l));
        let base: [usize; G] = std::array::from_fn(|l| (c0 + l) * cs);
        let phi = &mut phi[..G * n_z];
        let mut ok = true;
        let mut rr = [T::zero(); G];
        let mut rz = [T::zero(); G];
        for l in 0..G {
            let at = base[l];
            let r_star = rs[at] - alpha * qs[at];
            rr[l] = rr[l] + r_star * r_star;
            let (z0, phi0) = self.thomas_first(sts[l], r_star, &mut ok);
            zs[at] = z0;
            rs[at] = r_star;
            phi[l] = phi0;
        }
        for k in 1..n_z {
            for l in 0..G {
                let at = base[l] + k * ks;
                let r_star = rs[at] - alpha * qs[at];
                rr[l] = rr[l] + r_star * r_star;
                let (zk, phik) = self.thomas_step(sts[l], k, r_star, zs[at - ks], phi[(k - 1) * G + l], &mut ok);
                zs[at] = zk;
                rs[at] = r_star;
                phi[k * G + l] = phik;
            }
        }
        check_pivots(ok)?;
        for l in 0..G {
            let at = base[l] + (n_z - 1) * ks;
            rz[l] = rz[l] + zs[at] * rs[at];
        }
        for k in (0..n_z - 1).rev() {
            for l in 0..G {
                let at = base[l] + k * ks;
                let z_star = zs[at] - phi[k * G + l] * zs[at + ks];
                rz[l] = rz[l] + z_star * rs[at];
                zs[at] = z_star;
            }
        }
        rr_out.copy_from_slice(&rr);
        rz_out.copy_from_slice(&rz);
        Ok(())
    }

    /// Forward elimination on the bottom level: returns `(z_0, phi_0)`.
    #[inline(always)]
    fn thomas_first(&self, st: &ColumnStencil<T>, rhs: T, ok: &mut bool) -> (T, T) {
        let pivot = self.vdiag[0] - st.diag_scaled;
        *ok &= pivot_ok(pivot);
        (rhs / (pivot * st.area * self.d[0]), self.b_prime[0] / pivot)
    }

    /// Forward elimination on level `k >= 1`: returns `(z_k, phi_k)`.
    #[inline(always)]
    #[allow(clippy::too_many_arguments)]
    fn thomas_step(&self, st: &ColumnStencil<T>, k: usize, rhs: T, z_prev: T, phi_prev: T, ok: &mut bool) -> (T, T) {
        let pivot = (self.vdiag[k] - st.diag_scaled) - phi_prev * self.c_prime[k];
        *ok &= pivot_ok(pivot);
        let z = (rhs / (st.area * self.d[k]) - self.c_prime[k] * z_prev) / pivot;
        (z, self.b_prime[k] / pivot)
    }

    /// Fused sweep computing
    /// `u <- u + alpha p`, `p <- z + beta p`, `q <- A z + beta q`, `sigma <- <p, q>`.
    /// `z` is only read, so neighbour values are always the pre-sweep ones.
    pub fn interleaved_spmv_kernel(&self, state: &mut FusedState<T>) -> Result<T> {
        state.check(self)?;
        let FusedState { u, z, p, q, alpha, beta, .. } = state;
        let (alpha, beta) = (*alpha, *beta);
        let (m, n_z, layout) = (self.m, self.n_z, z.layout());
        let (cs, ks) = layout.slab_strides(m, n_z);
        let chunk = m * n_z;
        let zs = z.data();
        let mut partials = vec![T::zero(); m * m];

        partials
            .par_chunks_mut(m)
            .zip(u.data_mut().par_chunks_mut(chunk))
            .zip(p.data_mut().par_chunks_mut(chunk))
            .zip(q.data_mut().par_chunks_mut(chunk))
            .enumerate()
            .for_each(|(s, (((sig, us), ps), qs))| {
                for (c, sig_c) in sig.iter_mut().enumerate() {
                    let (i, j) = layout.slab_column(s, c);
                    let st = self.column(i, j);
                    let nh = self.neighbourhood(layout, i, j);
                    let mut sigma = T::zero();
                    let d = &self.d[..n_z];
                    if ks == 1 {
                        let cols = c * cs..c * cs + n_z;
                        let (uc, pc, qc) = (&mut us[cols.clone()], &mut ps[cols.clone()], &mut qs[cols]);
                        let zc = &zs[nh.base..nh.base + n_z];
                        self.sweep_column(st, &nh, zs, |k, dq| {
                            sigma = sigma
                                + fused_update(alpha, beta, d[k], dq, zc[k], &mut uc[k], &mut pc[k], &mut qc[k]);
                        });
                    } else {
                        self.sweep_column(st, &nh, zs, |k, dq| {
                            let l = c * cs + k * ks;
                            let z_star = zs[nh.base + k * ks];
                            sigma = sigma
                                + fused_update(alpha, beta, d[k], dq, z_star, &mut us[l], &mut ps[l], &mut qs[l]);
                        });
                    }
                    *sig_c = sigma;
                }
            });

        let sigma = combine_columns(layout, m, &partials);
        state.sigma = sigma;
        Ok(sigma)
    }

    /// Fused sweep computing `r <- r - alpha q`, solving `M z = r`, and
    /// returning `(||r||, <r, z>)`. The inner product is accumulated during
    /// back substitution.
    pub fn interleaved_prec_kernel(&self, state: &mut FusedState<T>) -> Result<(T, T)> {
        state.check(self)?;
        let FusedState { r, z, q, alpha, .. } = state;
        let alpha = *alpha;
        let (m, n_z, layout) = (self.m, self.n_z, r.layout());
        let chunk = m * n_z;
        let qd = q.data();
        let mut rr_partials = vec![T::zero(); m * m];
        let mut rz_partials = vec![T::zero(); m * m];

        rr_partials
            .par_chunks_mut(m)
            .zip(rz_partials.par_chunks_mut(m))
            .zip(r.data_mut().par_chunks_mut(chunk))
            .zip(z.data_mut().par_chunks_mut(chunk))
            .zip(qd.par_chunks(chunk))
            .enumerate()
            .try_for_each_init(
                || vec![T::zero(); LANES * n_z],
                |phi, (s, ((((rr_part, rz_part), rs), zs), qs))| {
                    let mut c0 = 0;
                    while c0 < m {
                        let g = if m - c0 >= LANES { LANES } else { 1 };
                        let (rr, rz) = (&mut rr_part[c0..c0 + g], &mut rz_part[c0..c0 + g]);
                        if g == LANES {
                            self.fused_solve_group::<LANES>(layout, s, c0, alpha, qs, rs, zs, phi, rr, rz)?;
                        } else {
                            self.fused_solve_group::<1>(layout, s, c0, alpha, qs, rs, zs, phi, rr, rz)?;
                        }
                        c0 += g;
                    }
                    Ok::<(), Error>(())
                },
            )?;

        let r_norm = combine_columns(layout, m, &rr_partials).sqrt();
        let kappa = combine_columns(layout, m, &rz_partials);
        state.r_norm = r_norm;
        state.kappa = kappa;
        Ok((r_norm, kappa))
    }
}

/// Per-point part of the fused operator sweep; returns `p* q*`.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn fused_update<T: Scalar>(alpha: T, beta: T, d: T, dq: T, z: T, u: &mut T, p: &mut T, q: &mut T) -> T {
    let p_old = *p;
    *u = alpha * p_old + *u;
    let p_star = beta * p_old + z;
    let q_star = beta * *q + d * dq;
    *p = p_star;
    *q = q_star;
    p_star * q_star
}

#[inline(always)]
fn pivot_ok<T: Scalar>(pivot: T) -> bool {
    (pivot != T::zero()) & pivot.is_finite()
}

fn check_pivots(ok: bool) -> Result<()> {
    if !ok {
        return Err(Error::Breakdown("zero or non-finite pivot in tridiagonal solve".into()));
    }
    Ok(())
}

struct Neighbourhood {
    base: usize,
    ks: usize,
    west: usize,
    east: usize,
    south: usize,
    north: usize,
}

/// Vectors and scalars carried between the two fused kernels.
#[derive(Debug, Clone)]
pub struct FusedState<T> {
    pub u: Field3D<T>,
    pub r: Field3D<T>,
    pub z: Field3D<T>,
    pub p: Field3D<T>,
    pub q: Field3D<T>,
    pub alpha: T,
    pub beta: T,
    pub kappa: T,
    pub kappa_old: T,
    pub sigma: T,
    pub r_norm: T,
}

impl<T: Scalar> FusedState<T> {
    pub fn zeros(m: usize, n_z: usize, layout: Layout) -> Self {
        let f = || Field3D::zeros(m, n_z, layout);
        FusedState {
            u: f(),
            r: f(),
            z: f(),
            p: f(),
            q: f(),
            alpha: T::zero(),
            beta: T::zero(),
            kappa: T::zero(),
            kappa_old: T::zero(),
            sigma: T::zero(),
            r_norm: T::zero(),
        }
    }

    fn check(&self, ctx: &OperatorContext<T>) -> Result<()> {
        ctx.check(&self.u)?;
        for f in [&self.r, &self.z, &self.p, &self.q] {
            check_conformant(&self.u, f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{axpy, dot, nrm2, scal};
    use crate::problem::{GeometryKind, Problem};

    fn ctx(geometry: GeometryKind, m: usize, n_z: usize) -> OperatorContext<f64> {
        Problem::new(geometry, m, n_z).context().unwrap()
    }

    fn max_rel(a: &Field3D<f64>, b: &Field3D<f64>) -> f64 {
        let scale = b.data().iter().fold(0.0f64, |s, v| s.max(v.abs()));
        a.data().iter().zip(b.data()).fold(0.0f64, |s, (x, y)| s.max((x - y).abs())) / scale
    }

    #[test]
    fn zero_maps_to_zero() {
        let c = ctx(GeometryKind::CubedSphere, 3, 4);
        let x = c.zeros(Layout::VerticalContiguous);
        let mut y = Field3D::filled(3, 4, Layout::VerticalContiguous, 7.0);
        c.apply(&x, &mut y).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        c.precondition(&x, &mut y).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constants_see_only_the_mass_term() {
        let c = ctx(GeometryKind::Planar, 4, 5);
        let prof = c.profile().unscaled();
        for layout in Layout::ALL {
            let x = Field3D::filled(4, 5, layout, 1.0);
            let mut y = c.zeros(layout);
            c.apply(&x, &mut y).unwrap();
            let area = c.geometry().area(0, 0);
            for i in 0..4 {
                for j in 0..4 {
                    for k in 0..5 {
                        let expect = area * prof.a[k];
                        assert!((y.get(i, j, k) - expect).abs() <= 1e-13 * expect.abs());
                    }
                }
            }
        }
    }

    #[test]
    fn single_column_preconditioner_inverts_operator() {
        let c = ctx(GeometryKind::CubedSphere, 1, 16);
        let y = Field3D::random(1, 16, Layout::VerticalContiguous, 3);
        let mut x = c.zeros(Layout::VerticalContiguous);
        let mut back = c.zeros(Layout::VerticalContiguous);
        c.precondition(&y, &mut x).unwrap();
        c.apply(&x, &mut back).unwrap();
        assert!(max_rel(&back, &y) <= 1e-12);
    }

    #[test]
    fn rejects_mismatched_fields() {
        let c = ctx(GeometryKind::Planar, 2, 3);
        let x = Field3D::zeros(3, 3, Layout::VerticalContiguous);
        let mut y = Field3D::zeros(3, 3, Layout::VerticalContiguous);
        assert!(c.apply(&x, &mut y).is_err());
        let x = Field3D::zeros(2, 3, Layout::VerticalContiguous);
        let mut y = Field3D::zeros(2, 3, Layout::HorizontalContiguous);
        assert!(c.apply(&x, &mut y).is_err());
    }

    #[test]
    fn spmv_kernel_from_zero_state() {
        let c = ctx(GeometryKind::CubedSphere, 3, 4);
        let layout = Layout::HorizontalContiguous;
        let mut st = FusedState::zeros(3, 4, layout);
        st.z = Field3D::random(3, 4, layout, 11);
        let sigma = c.interleaved_spmv_kernel(&mut st).unwrap();
        let mut az = c.zeros(layout);
        c.apply(&st.z, &mut az).unwrap();
        assert_eq!(st.p, st.z);
        assert_eq!(st.q, az);
        assert!(sigma > 0.0);
        assert_eq!(sigma, dot(&st.z, &az).unwrap());
    }

    #[test]
    fn spmv_kernel_with_zero_direction() {
        let c = ctx(GeometryKind::Planar, 3, 4);
        let layout = Layout::VerticalContiguous;
        let mut st = FusedState::zeros(3, 4, layout);
        st.u = Field3D::random(3, 4, layout, 1);
        st.p = Field3D::random(3, 4, layout, 2);
        st.q = Field3D::random(3, 4, layout, 3);
        st.alpha = 0.5;
        st.beta = 1.0;
        let before = st.clone();
        c.interleaved_spmv_kernel(&mut st).unwrap();
        let mut u = before.u.clone();
        axpy(0.5, &before.p, &mut u).unwrap();
        assert_eq!(st.u, u);
        assert_eq!(st.p, before.p);
        assert_eq!(st.q, before.q);
    }

    #[test]
    fn spmv_kernel_matches_unfused_sequence() {
        let c = ctx(GeometryKind::CubedSphere, 8, 16);
        let layout = Layout::VerticalContiguous;
        let mut st = FusedState::zeros(8, 16, layout);
        st.u = Field3D::random(8, 16, layout, 1);
        st.z = Field3D::random(8, 16, layout, 2);
        st.p = Field3D::random(8, 16, layout, 3);
        st.q = Field3D::random(8, 16, layout, 4);
        st.alpha = 0.3;
        st.beta = -0.7;
        let mut reference = st.clone();
        let sigma = c.interleaved_spmv_kernel(&mut st).unwrap();

        let FusedState { u, z, p, q, alpha, beta, .. } = &mut reference;
        axpy(*alpha, p, u).unwrap();
        scal(*beta, p);
        axpy(1.0, z, p).unwrap();
        let mut t = c.zeros(layout);
        c.apply(z, &mut t).unwrap();
        scal(*beta, q);
        axpy(1.0, &t, q).unwrap();
        let sigma_ref = dot(p, q).unwrap();

        assert!(max_rel(&st.u, u) <= 1e-13);
        assert!(max_rel(&st.p, p) <= 1e-13);
        assert!(max_rel(&st.q, q) <= 1e-13);
        assert!((sigma - sigma_ref).abs() <= 1e-13 * sigma_ref.abs());
    }

    #[test]
    fn prec_kernel_matches_unfused_sequence() {
        let c = ctx(GeometryKind::Planar, 8, 16);
        let layout = Layout::HorizontalContiguous;
        let mut st = FusedState::zeros(8, 16, layout);
        st.r = Field3D::random(8, 16, layout, 5);
        st.q = Field3D::random(8, 16, layout, 6);
        st.alpha = 0.25;
        let mut r = st.r.clone();
        let (r_norm, kappa) = c.interleaved_prec_kernel(&mut st).unwrap();

        axpy(-0.25, &st.q, &mut r).unwrap();
        let mut z = c.zeros(layout);
        c.precondition(&r, &mut z).unwrap();
        let r_norm_ref = nrm2(&r);
        let kappa_ref = dot(&r, &z).unwrap();

        assert!(max_rel(&st.r, &r) <= 1e-13);
        assert!(max_rel(&st.z, &z) <= 1e-13);
        assert!((r_norm - r_norm_ref).abs() <= 1e-13 * r_norm_ref);
        assert!((kappa - kappa_ref).abs() <= 1e-13 * kappa_ref.abs());
    }

    #[test]
    fn prec_kernel_on_vanishing_residual() {
        let c = ctx(GeometryKind::CubedSphere, 2, 3);
        let layout = Layout::VerticalContiguous;
        let mut st = FusedState::zeros(2, 3, layout);
        st.r = Field3D::random(2, 3, layout, 9);
        st.q = st.r.clone();
        st.alpha = 1.0;
        let (r_norm, kappa) = c.interleaved_prec_kernel(&mut st).unwrap();
        assert_eq!((r_norm, kappa), (0.0, 0.0));
        assert!(st.z.data().iter().all(|&v| v == 0.0));
    }
}
