//! Preconditioned conjugate gradient driver.
//!
//! The standard variant calls the operator, the preconditioner and level-1
//! BLAS routines separately. The interleaved variant alternates the two
//! fused matrix-free kernels and needs two sweeps over the grid per
//! iteration. Both run the same recurrences and produce the same iterates up
//! to round-off.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::csr::{solve_tridiag_set, spmv_csr, CsrBackend, CsrMatrix, TridiagonalSet};
use crate::error::{invalid, Error, Result};
use crate::fields::{axpy, check_conformant, dot, nrm2, scal, Field3D};
use crate::matrix_free::{FusedState, OperatorContext};
use crate::scalar::{Precision, Scalar};

/// `y <- A x`
pub trait LinearOperator<T: Scalar>: Sync {
    fn apply(&self, x: &Field3D<T>, y: &mut Field3D<T>) -> Result<()>;
}

/// `z <- M^{-1} r`
pub trait Preconditioner<T: Scalar>: Sync {
    fn precondition(&self, r: &Field3D<T>, z: &mut Field3D<T>) -> Result<()>;
}

impl<T: Scalar> LinearOperator<T> for OperatorContext<T> {
    fn apply(&self, x: &Field3D<T>, y: &mut Field3D<T>) -> Result<()> {
        OperatorContext::apply(self, x, y)
    }
}

impl<T: Scalar> Preconditioner<T> for OperatorContext<T> {
    fn precondition(&self, r: &Field3D<T>, z: &mut Field3D<T>) -> Result<()> {
        OperatorContext::precondition(self, r, z)
    }
}

impl<T: Scalar> LinearOperator<T> for CsrMatrix<T> {
    fn apply(&self, x: &Field3D<T>, y: &mut Field3D<T>) -> Result<()> {
        spmv_csr(self, x, y)
    }
}

impl<T: Scalar> Preconditioner<T> for TridiagonalSet<T> {
    fn precondition(&self, r: &Field3D<T>, z: &mut Field3D<T>) -> Result<()> {
        solve_tridiag_set(self, r, z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Standard,
    Interleaved,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Standard, Variant::Interleaved];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Standard => "standard",
            Variant::Interleaved => "interleaved",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Variant::Standard),
            "interleaved" => Ok(Variant::Interleaved),
            _ => invalid(format!("unknown variant '{s}' (expected standard or interleaved)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    MatrixFree,
    Csr,
}

impl Backend {
    pub const ALL: [Backend; 2] = [Backend::MatrixFree, Backend::Csr];

    pub fn as_str(self) -> &'static str {
        match self {
            Backend::MatrixFree => "matrix_free",
            Backend::Csr => "csr",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matrix_free" | "matrix-free" => Ok(Backend::MatrixFree),
            "csr" => Ok(Backend::Csr),
            _ => invalid(format!("unknown backend '{s}' (expected matrix-free or csr)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverConfig {
    /// Stop when `||r|| / ||r_0|| < epsilon`.
    pub epsilon: f64,
    /// Stop when `||r|| < tau`.
    pub tau: f64,
    pub maxiter: usize,
    pub variant: Variant,
    pub backend: Backend,
    /// Must match the scalar type the solver is instantiated with.
    pub precision: Precision,
    pub workers: usize,
    /// Ignore `epsilon` and run `maxiter` iterations (benchmark mode).
    pub fixed_iterations: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon: 1e-5,
            tau: 1e-20,
            maxiter: 1000,
            variant: Variant::Standard,
            backend: Backend::MatrixFree,
            precision: Precision::Double,
            workers: default_workers(),
            fixed_iterations: false,
        }
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

impl SolverConfig {
    pub fn for_precision<T: Scalar>() -> Self {
        SolverConfig { precision: T::PRECISION, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return invalid(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return invalid(format!("tau must be positive, got {}", self.tau));
        }
        if self.maxiter == 0 {
            return invalid("maxiter must be at least 1");
        }
        if self.workers == 0 {
            return invalid("workers must be at least 1");
        }
        if self.backend == Backend::Csr && self.variant == Variant::Interleaved {
            return invalid("the interleaved variant requires the matrix-free backend");
        }
        Ok(())
    }

    fn validate_for<T: Scalar>(&self) -> Result<()> {
        self.validate()?;
        if self.precision != T::PRECISION {
            return invalid(format!(
                "configuration asks for {} precision but the solver runs in {}",
                self.precision,
                T::PRECISION
            ));
        }
        Ok(())
    }
}

/// Accumulated wall-clock seconds per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Timings {
    pub spmv: f64,
    pub prec: f64,
    pub blas: f64,
    pub fused_spmv: f64,
    pub fused_prec: f64,
    pub setup: f64,
    pub total: f64,
}

/// CG coefficients of one iteration. `kappa` and `beta` are missing on the
/// iteration that meets the stopping test in the standard variant, which
/// skips the preconditioner there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub sigma: f64,
    pub alpha: f64,
    pub r_norm: f64,
    pub kappa: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    pub iterations: usize,
    pub converged: bool,
    /// `||r_j||` for `j = 0..=iterations`, from the residual recurrence.
    pub residual_history: Vec<f64>,
    /// `||f - A u||` recomputed at exit.
    pub true_residual: f64,
    pub timings: Timings,
    pub trace: Vec<IterationRecord>,
}

impl SolveResult {
    pub fn initial_residual(&self) -> f64 {
        self.residual_history[0]
    }

    pub fn final_residual(&self) -> f64 {
        *self.residual_history.last().expect("history is never empty")
    }

    pub fn relative_residual(&self) -> f64 {
        let r0 = self.initial_residual();
        if r0 == 0.0 {
            0.0
        } else {
            self.final_residual() / r0
        }
    }

    /// Residual history as CSV: `iteration,abs_residual,rel_residual`.
    pub fn write_residual_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iteration,abs_residual,rel_residual")?;
        let r0 = self.initial_residual();
        for (j, r) in self.residual_history.iter().enumerate() {
            let rel = if r0 == 0.0 { 0.0 } else { r / r0 };
            writeln!(out, "{j},{r:e},{rel:e}")?;
        }
        Ok(())
    }
}

struct Stopping {
    r0: f64,
    epsilon: f64,
    tau: f64,
    fixed: bool,
}

impl Stopping {
    fn met(&self, r: f64) -> bool {
        r < self.tau || r / self.r0 < self.epsilon
    }

    fn done(&self, r: f64) -> bool {
        r < self.tau || (!self.fixed && r / self.r0 < self.epsilon)
    }
}

fn timed<R>(acc: &mut f64, f: impl FnOnce() -> R) -> R {
    let t = Instant::now();
    let out = f();
    *acc += t.elapsed().as_secs_f64();
    out
}

fn check_sigma<T: Scalar>(sigma: T, iteration: usize) -> Result<()> {
    if !(sigma > T::zero()) {
        return Err(Error::Breakdown(format!(
            "<p, Ap> = {sigma} is not positive in iteration {iteration}; the operator is not positive definite"
        )));
    }
    Ok(())
}

/// `||f - A u||`, computed from scratch.
pub fn true_residual<T: Scalar, A: LinearOperator<T> + ?Sized>(a: &A, u: &Field3D<T>, f: &Field3D<T>) -> Result<f64> {
    check_conformant(u, f)?;
    let mut au = Field3D::zeros(u.m(), u.n_z(), u.layout());
    a.apply(u, &mut au)?;
    let mut res = f.clone();
    axpy(-T::one(), &au, &mut res)?;
    Ok(nrm2(&res).as_f64())
}

/// Unfused PCG with an arbitrary operator and preconditioner. Runs on the
/// current rayon pool.
pub fn pcg_standard_with<T, A, P>(
    a: &A,
    prec: &P,
    f: &Field3D<T>,
    u0: &Field3D<T>,
    cfg: &SolverConfig,
) -> Result<(Field3D<T>, SolveResult)>
where
    T: Scalar,
    A: LinearOperator<T> + ?Sized,
    P: Preconditioner<T> + ?Sized,
{
    cfg.validate_for::<T>()?;
    check_conformant(f, u0)?;
    let start = Instant::now();
    let mut tm = Timings::default();
    let (m, n_z, layout) = (f.m(), f.n_z(), f.layout());
    let new = || Field3D::<T>::zeros(m, n_z, layout);

    let mut u = u0.clone();
    let mut q = new();
    let mut z = new();
    timed(&mut tm.spmv, || a.apply(&u, &mut q))?;
    let mut r = f.clone();
    timed(&mut tm.blas, || axpy(-T::one(), &q, &mut r))?;
    let r0 = timed(&mut tm.blas, || nrm2(&r));
    let mut history = vec![r0.as_f64()];
    let mut trace = Vec::new();
    let stop = Stopping { r0: r0.as_f64(), epsilon: cfg.epsilon, tau: cfg.tau, fixed: cfg.fixed_iterations };

    let mut converged = r0.as_f64() <= cfg.tau;
    if !converged {
        timed(&mut tm.prec, || prec.precondition(&r, &mut z))?;
        let mut kappa_old = timed(&mut tm.blas, || dot(&r, &z))?;
        let mut p = z.clone();
        for it in 0..cfg.maxiter {
            timed(&mut tm.spmv, || a.apply(&p, &mut q))?;
            let sigma = timed(&mut tm.blas, || dot(&p, &q))?;
            check_sigma(sigma, it)?;
            let alpha = kappa_old / sigma;
            let r_norm = timed(&mut tm.blas, || -> Result<T> {
                axpy(alpha, &p, &mut u)?;
                axpy(-alpha, &q, &mut r)?;
                Ok(nrm2(&r))
            })?;
            history.push(r_norm.as_f64());
            let mut rec = IterationRecord {
                sigma: sigma.as_f64(),
                alpha: alpha.as_f64(),
                r_norm: r_norm.as_f64(),
                kappa: None,
                beta: None,
            };
            if stop.done(r_norm.as_f64()) {
                trace.push(rec);
                break;
            }
            timed(&mut tm.prec, || prec.precondition(&r, &mut z))?;
            let kappa = timed(&mut tm.blas, || dot(&r, &z))?;
            let beta = kappa / kappa_old;
            timed(&mut tm.blas, || {
                scal(beta, &mut p);
                axpy(T::one(), &z, &mut p)
            })?;
            kappa_old = kappa;
            rec.kappa = Some(kappa.as_f64());
            rec.beta = Some(beta.as_f64());
            trace.push(rec);
        }
        converged = stop.met(history[history.len() - 1]);
    }

    tm.total = start.elapsed().as_secs_f64();
    let true_res = true_residual(a, &u, f)?;
    let result = SolveResult {
        iterations: history.len() - 1,
        converged,
        residual_history: history,
        true_residual: true_res,
        timings: tm,
        trace,
    };
    Ok((u, result))
}

/// Interleaved PCG on the matrix-free backend: one fused preconditioner
/// sweep and one fused operator sweep per iteration. Runs on the current
/// rayon pool.
pub fn pcg_interleaved_with<T: Scalar>(
    ctx: &OperatorContext<T>,
    f: &Field3D<T>,
    u0: &Field3D<T>,
    cfg: &SolverConfig,
) -> Result<(Field3D<T>, SolveResult)> {
    cfg.validate_for::<T>()?;
    check_conformant(f, u0)?;
    let start = Instant::now();
    let mut tm = Timings::default();
    let (m, n_z, layout) = (f.m(), f.n_z(), f.layout());
    let mut st = FusedState::zeros(m, n_z, layout);
    st.u.copy_from(u0)?;

    // r = f - A u0
    timed(&mut tm.spmv, || ctx.apply(&st.u, &mut st.q))?;
    st.r.copy_from(f)?;
    timed(&mut tm.blas, || axpy(-T::one(), &st.q, &mut st.r))?;
    let r0 = timed(&mut tm.blas, || nrm2(&st.r));
    st.r_norm = r0;
    let mut history = vec![r0.as_f64()];
    let mut trace = Vec::new();
    let stop = Stopping { r0: r0.as_f64(), epsilon: cfg.epsilon, tau: cfg.tau, fixed: cfg.fixed_iterations };

    let mut converged = r0.as_f64() <= cfg.tau;
    if !converged {
        timed(&mut tm.prec, || ctx.precondition(&st.r, &mut st.z))?;
        st.kappa_old = timed(&mut tm.blas, || dot(&st.r, &st.z))?;
        st.p.copy_from(&st.z)?;
        timed(&mut tm.spmv, || ctx.apply(&st.p, &mut st.q))?;
        st.sigma = timed(&mut tm.blas, || dot(&st.p, &st.q))?;
        check_sigma(st.sigma, 0)?;
        st.alpha = st.kappa_old / st.sigma;

        for it in 0..cfg.maxiter {
            let (r_norm, kappa) = timed(&mut tm.fused_prec, || ctx.interleaved_prec_kernel(&mut st))?;
            history.push(r_norm.as_f64());
            let mut rec = IterationRecord {
                sigma: st.sigma.as_f64(),
                alpha: st.alpha.as_f64(),
                r_norm: r_norm.as_f64(),
                kappa: Some(kappa.as_f64()),
                beta: None,
            };
            let done = stop.done(r_norm.as_f64()) || it + 1 == cfg.maxiter;
            if done {
                trace.push(rec);
                converged = stop.met(r_norm.as_f64());
                break;
            }
            st.beta = kappa / st.kappa_old;
            st.kappa_old = kappa;
            rec.beta = Some(st.beta.as_f64());
            trace.push(rec);
            let sigma = timed(&mut tm.fused_spmv, || ctx.interleaved_spmv_kernel(&mut st))?;
            check_sigma(sigma, it + 1)?;
            st.alpha = st.kappa_old / sigma;
        }
        // The fused operator sweep updates u one step behind r.
        let alpha = st.alpha;
        timed(&mut tm.blas, || axpy(alpha, &st.p, &mut st.u))?;
    }

    tm.total = start.elapsed().as_secs_f64();
    let true_res = true_residual(ctx, &st.u, f)?;
    let result = SolveResult {
        iterations: history.len() - 1,
        converged,
        residual_history: history,
        true_residual: true_res,
        timings: tm,
        trace,
    };
    Ok((st.u, result))
}

/// Runs `job` on a dedicated pool of `workers` threads.
pub fn with_workers<R: Send>(workers: usize, job: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(job))
}

/// Standard PCG with the backend chosen by `cfg.backend`, on `cfg.workers`
/// threads. CSR assembly time is reported as setup.
pub fn pcg_standard<T: Scalar>(
    ctx: &OperatorContext<T>,
    f: &Field3D<T>,
    u0: &Field3D<T>,
    cfg: &SolverConfig,
) -> Result<(Field3D<T>, SolveResult)> {
    cfg.validate_for::<T>()?;
    with_workers(cfg.workers, || match cfg.backend {
        Backend::MatrixFree => pcg_standard_with(ctx, ctx, f, u0, cfg),
        Backend::Csr => {
            let t = Instant::now();
            let csr = CsrBackend::assemble(ctx, f.layout());
            let setup = t.elapsed().as_secs_f64();
            let (u, mut res) = pcg_standard_with(&csr.matrix, &csr.preconditioner, f, u0, cfg)?;
            res.timings.setup = setup;
            res.timings.total += setup;
            Ok((u, res))
        }
    })?
}

/// Interleaved PCG on `cfg.workers` threads (matrix-free backend only).
pub fn pcg_interleaved<T: Scalar>(
    ctx: &OperatorContext<T>,
    f: &Field3D<T>,
    u0: &Field3D<T>,
    cfg: &SolverConfig,
) -> Result<(Field3D<T>, SolveResult)> {
    cfg.validate_for::<T>()?;
    if cfg.backend != Backend::MatrixFree {
        return invalid("the interleaved variant requires the matrix-free backend");
    }
    with_workers(cfg.workers, || pcg_interleaved_with(ctx, f, u0, cfg))?
}

/// Dispatches on `cfg.variant`.
pub fn solve<T: Scalar>(
    ctx: &OperatorContext<T>,
    f: &Field3D<T>,
    u0: &Field3D<T>,
    cfg: &SolverConfig,
) -> Result<(Field3D<T>, SolveResult)> {
    match cfg.variant {
        Variant::Standard => pcg_standard(ctx, f, u0, cfg),
        Variant::Interleaved => pcg_interleaved(ctx, f, u0, cfg),
    }
}
