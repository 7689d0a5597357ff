use std::io::Write;
use std::time::Instant;

use anisolve::csr::CsrBackend;
use anisolve::discretization::{cost_model, throughput_estimate, CacheAssumption, Kernel};
use anisolve::matrix_free::OperatorContext;
use anisolve::problem::Problem;
use anisolve::solver::{pcg_interleaved_with, pcg_standard_with, with_workers, Backend, SolveResult, SolverConfig, Variant};
use anisolve::{Error, Field3D, Layout, Precision, Result, Scalar};

use crate::args::BenchArgs;

pub const BENCH_HEADER: &str = "backend,variant,layout,precision,workers,m,n_z,iterations,time_per_iteration_ms,\
spmv_ms,prec_ms,blas_ms,fused_spmv_ms,fused_prec_ms,setup_ms,gflops_estimate,gbytes_per_s_estimate";

/// Median timings of one configuration. Per-kernel figures are per iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub backend: Backend,
    pub variant: Variant,
    pub layout: Layout,
    pub precision: Precision,
    pub workers: usize,
    pub m: usize,
    pub n_z: usize,
    pub iterations: usize,
    pub time_per_iteration_ms: f64,
    pub spmv_ms: f64,
    pub prec_ms: f64,
    pub blas_ms: f64,
    pub fused_spmv_ms: f64,
    pub fused_prec_ms: f64,
    pub setup_ms: f64,
    pub gflops: f64,
    pub gbytes_per_s: f64,
}

impl BenchRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.4},{:.4}",
            self.backend,
            self.variant,
            self.layout,
            self.precision,
            self.workers,
            self.m,
            self.n_z,
            self.iterations,
            self.time_per_iteration_ms,
            self.spmv_ms,
            self.prec_ms,
            self.blas_ms,
            self.fused_spmv_ms,
            self.fused_prec_ms,
            self.setup_ms,
            self.gflops,
            self.gbytes_per_s
        )
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Timing protocol: one untimed warm-up iteration, then `repetitions` runs
/// of `iterations` fixed PCG iterations; medians over the runs.
#[derive(Debug, Clone, Copy)]
pub struct BenchPlan {
    pub problem: Problem,
    pub seed: u64,
    pub backend: Backend,
    pub variant: Variant,
    pub layout: Layout,
    pub precision: Precision,
    pub workers: usize,
    pub iterations: usize,
    pub repetitions: usize,
}

pub fn bench_one(plan: &BenchPlan) -> Result<BenchRow> {
    if plan.iterations == 0 || plan.repetitions == 0 {
        return Err(Error::InvalidArgument("iterations and repetitions must be at least 1".into()));
    }
    plan.problem.validate()?;
    match plan.precision {
        Precision::Single => bench_typed::<f32>(plan),
        Precision::Double => bench_typed::<f64>(plan),
    }
}

fn bench_typed<T: Scalar>(plan: &BenchPlan) -> Result<BenchRow> {
    let cfg = SolverConfig {
        maxiter: plan.iterations,
        variant: plan.variant,
        backend: plan.backend,
        precision: plan.precision,
        workers: plan.workers,
        fixed_iterations: true,
        // Well-conditioned runs reach the default absolute floor before 100
        // iterations; the fixed-length protocol should not stop there.
        tau: f64::MIN_POSITIVE,
        ..SolverConfig::default()
    };
    cfg.validate()?;
    let ctx: OperatorContext<T> = plan.problem.context()?;
    let f = plan.problem.rhs::<T>(plan.layout, plan.seed);
    let u0 = Field3D::zeros(ctx.m(), ctx.n_z(), plan.layout);

    with_workers(plan.workers, || {
        let t = Instant::now();
        let csr = (plan.backend == Backend::Csr).then(|| CsrBackend::assemble(&ctx, plan.layout));
        let setup = t.elapsed().as_secs_f64();
        let run = |c: &SolverConfig| -> Result<SolveResult> {
            let res = match (&csr, plan.variant) {
                (Some(b), _) => pcg_standard_with(&b.matrix, &b.preconditioner, &f, &u0, c)?.1,
                (None, Variant::Standard) => pcg_standard_with(&ctx, &ctx, &f, &u0, c)?.1,
                (None, Variant::Interleaved) => pcg_interleaved_with(&ctx, &f, &u0, c)?.1,
            };
            Ok(res)
        };

        run(&SolverConfig { maxiter: 1, ..cfg })?;
        let mut runs = Vec::with_capacity(plan.repetitions);
        for _ in 0..plan.repetitions {
            runs.push(run(&cfg)?);
        }
        let iterations = runs[0].iterations.max(1);
        let per = |g: fn(&SolveResult) -> f64| median(runs.iter().map(|r| g(r) / r.iterations.max(1) as f64 * 1e3).collect());
        let time_ms = per(|r| r.timings.total);
        let total_kernel = match plan.variant {
            Variant::Standard => Kernel::PcgTotal,
            Variant::Interleaved => Kernel::InterleavedTotal,
        };
        let rates = throughput_estimate(
            cost_model(total_kernel, CacheAssumption::None),
            (ctx.m() * ctx.m() * ctx.n_z()) as u64,
            time_ms * 1e-3,
            plan.precision.bytes(),
        )?;
        Ok(BenchRow {
            backend: plan.backend,
            variant: plan.variant,
            layout: plan.layout,
            precision: plan.precision,
            workers: plan.workers,
            m: ctx.m(),
            n_z: ctx.n_z(),
            iterations,
            time_per_iteration_ms: time_ms,
            spmv_ms: per(|r| r.timings.spmv),
            prec_ms: per(|r| r.timings.prec),
            blas_ms: per(|r| r.timings.blas),
            fused_spmv_ms: per(|r| r.timings.fused_spmv),
            fused_prec_ms: per(|r| r.timings.fused_prec),
            setup_ms: setup * 1e3,
            gflops: rates.flop_rate * 1e-9,
            gbytes_per_s: rates.bandwidth * 1e-9,
        })
    })?
}

/// Expands the sweep lists; CSR is only combined with the standard variant.
pub fn plans(args: &BenchArgs) -> Vec<BenchPlan> {
    let mut out = Vec::new();
    for &backend in &args.backend {
        for &variant in &args.variant {
            if backend == Backend::Csr && variant == Variant::Interleaved {
                continue;
            }
            for &layout in &args.layout {
                for &precision in &args.precision {
                    for &workers in &args.workers {
                        out.push(BenchPlan {
                            problem: args.problem.problem(),
                            seed: args.problem.seed,
                            backend,
                            variant,
                            layout,
                            precision,
                            workers,
                            iterations: args.iterations,
                            repetitions: args.repetitions,
                        });
                    }
                }
            }
        }
    }
    out
}

pub fn run_bench<W: Write>(args: &BenchArgs, mut out: W) -> Result<Vec<BenchRow>> {
    args.problem.problem().validate()?;
    if args.workers.contains(&0) {
        return Err(Error::InvalidArgument("workers must be at least 1".into()));
    }
    let plans = plans(args);
    if plans.is_empty() {
        return Err(Error::InvalidArgument("the csr backend only supports the standard variant".into()));
    }
    writeln!(out, "{BENCH_HEADER}")?;
    let mut rows = Vec::with_capacity(plans.len());
    for plan in &plans {
        let row = bench_one(plan)?;
        writeln!(out, "{}", row.csv())?;
        out.flush()?;
        rows.push(row);
    }
    Ok(rows)
}
