use std::io::Write;

use anisolve::discretization::{blas_op_cost, blas_total_cost, cost_model, BlasOp, CacheAssumption, Kernel};
use anisolve::Result;

pub const COST_HEADER: &str = "kernel,cache,flops,mem_refs";

/// Level-1 BLAS rows (cache `n/a`), then every kernel under every cache
/// assumption.
pub fn cost_rows() -> Vec<(String, String, u32, u32)> {
    let mut rows = Vec::new();
    for op in [BlasOp::Scal, BlasOp::Axpy, BlasOp::Dot, BlasOp::Nrm2] {
        let c = blas_op_cost(op);
        rows.push((op.as_str().to_string(), "n/a".to_string(), c.flops, c.mem_refs));
    }
    let t = blas_total_cost();
    rows.push(("blas_total".to_string(), "n/a".to_string(), t.flops, t.mem_refs));
    for kernel in Kernel::ALL {
        for cache in CacheAssumption::ALL {
            let c = cost_model(kernel, cache);
            rows.push((kernel.as_str().to_string(), cache.as_str().to_string(), c.flops, c.mem_refs));
        }
    }
    rows
}

pub fn write_cost_model<W: Write>(mut out: W) -> Result<()> {
    writeln!(out, "{COST_HEADER}")?;
    for (kernel, cache, flops, mem) in cost_rows() {
        writeln!(out, "{kernel},{cache},{flops},{mem}")?;
    }
    Ok(())
}
