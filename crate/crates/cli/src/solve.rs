use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anisolve::csr::assemble_csr;
use anisolve::solver::{solve, SolveResult};
use anisolve::{Error, Field3D, Precision, Result, Scalar};
use serde_json::{json, Map, Value};

use crate::args::SolveArgs;

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

pub const RHS_GENERATOR: &str = "chacha8 uniform [-1,1) in (i,j,k) order";

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::InvalidArgument(format!("cannot create {}: {e}", path.display())))
}

/// Runs one solve and writes the requested outputs. Returns the summary
/// object and whether the solver converged.
pub fn run_solve(args: &SolveArgs) -> Result<(Map<String, Value>, bool)> {
    args.validate()?;
    match args.precision {
        Precision::Single => run_typed::<f32>(args),
        Precision::Double => run_typed::<f64>(args),
    }
}

fn run_typed<T: Scalar>(args: &SolveArgs) -> Result<(Map<String, Value>, bool)> {
    let problem = args.problem.problem();
    let cfg = args.config();
    let layout = args.layout;

    let u0 = match &args.initial_guess {
        Some(path) => {
            let file = File::open(path)
                .map_err(|e| Error::InvalidArgument(format!("cannot open {}: {e}", path.display())))?;
            let u = Field3D::<T>::read_raw(BufReader::new(file))?;
            if u.m() != problem.m || u.n_z() != problem.n_z {
                return Err(Error::InvalidArgument(format!(
                    "initial guess is {}x{}x{}, grid is {}x{}x{}",
                    u.m(),
                    u.m(),
                    u.n_z(),
                    problem.m,
                    problem.m,
                    problem.n_z
                )));
            }
            u.relayout(layout)
        }
        None => Field3D::zeros(problem.m, problem.n_z, layout),
    };

    let ctx = problem.context::<T>()?;
    let f = problem.rhs::<T>(layout, args.problem.seed);

    if let Some(path) = &args.dump_geometry {
        ctx.geometry().write_csv(create(path)?)?;
    }
    if let Some(path) = &args.dump_matrix {
        let mut out = create(path)?;
        assemble_csr(&ctx, layout).write_matrix_market(&mut out)?;
        out.flush()?;
    }

    let (u, res) = solve(&ctx, &f, &u0, &cfg)?;

    if let Some(path) = &args.dump_solution {
        let mut out = create(path)?;
        u.write_raw(&mut out)?;
        out.flush()?;
    }
    if let Some(path) = &args.out_csv {
        let mut out = create(path)?;
        res.write_residual_csv(&mut out)?;
        out.flush()?;
    }
    let summary = summary(args, &res);
    if let Some(path) = &args.out_json {
        let mut out = create(path)?;
        serde_json::to_writer_pretty(&mut out, &summary).map_err(|e| Error::Io(e.into()))?;
        writeln!(out)?;
        out.flush()?;
    }
    Ok((summary, res.converged))
}

/// Flat JSON summary of one run.
pub fn summary(args: &SolveArgs, res: &SolveResult) -> Map<String, Value> {
    let p = &args.problem;
    let t = &res.timings;
    let per_iter_ms = if res.iterations > 0 {
        (t.total - t.setup) / res.iterations as f64 * 1e3
    } else {
        0.0
    };
    let v = json!({
        "geometry": p.geometry.as_str(),
        "m": p.m,
        "n_z": p.n_z,
        "unknowns": p.m * p.m * p.n_z,
        "h_atmos": p.h_atmos,
        "omega2": p.omega2,
        "lambda2": p.lambda2,
        "backend": args.backend.as_str(),
        "variant": args.variant.as_str(),
        "layout": args.layout.as_str(),
        "precision": args.precision.as_str(),
        "workers": args.workers,
        "seed": p.seed,
        "rhs_generator": RHS_GENERATOR,
        "initial_guess": if args.initial_guess.is_some() { "file" } else { "zero" },
        "epsilon": args.epsilon,
        "tau": args.tau,
        "maxiter": args.maxiter,
        "iterations": res.iterations,
        "converged": res.converged,
        "initial_residual": res.initial_residual(),
        "final_residual": res.final_residual(),
        "relative_residual": res.relative_residual(),
        "true_residual": res.true_residual,
        "true_relative_residual": if res.initial_residual() > 0.0 { res.true_residual / res.initial_residual() } else { 0.0 },
        "time_setup_s": t.setup,
        "time_spmv_s": t.spmv,
        "time_prec_s": t.prec,
        "time_blas_s": t.blas,
        "time_fused_spmv_s": t.fused_spmv,
        "time_fused_prec_s": t.fused_prec,
        "time_total_s": t.total,
        "time_per_iteration_ms": per_iter_ms,
    });
    match v {
        Value::Object(map) => map,
        _ => unreachable!(),
    }
}
