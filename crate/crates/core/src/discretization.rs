//! Vertical discretization profile and the per-grid-point cost model.
//!
//! The whole 3D operator is parameterized by four vectors of length `n_z`
//! (mass `a`, vertical fluxes `b`, `c`, horizontal scale `d`) together with
//! the panel geometry. They are stored in the scaled form
//! `a' = a / d`, `b' = b / d`, `c' = c / d` plus `d` itself.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::geometry::VerticalGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct VerticalProfile {
    pub n_z: usize,
    pub a_prime: Vec<f64>,
    pub b_prime: Vec<f64>,
    pub c_prime: Vec<f64>,
    pub d: Vec<f64>,
    pub omega2: f64,
    pub lambda2: f64,
}

/// Unscaled coefficient vectors reconstructed from a profile.
#[derive(Debug, Clone, PartialEq)]
pub struct UnscaledProfile {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
}

impl VerticalProfile {
    pub fn unscaled(&self) -> UnscaledProfile {
        let mul = |v: &[f64]| v.iter().zip(&self.d).map(|(x, d)| x * d).collect();
        UnscaledProfile {
            a: mul(&self.a_prime),
            b: mul(&self.b_prime),
            c: mul(&self.c_prime),
            d: self.d.clone(),
        }
    }
}

/// Finite-volume coefficients for cell averages on the shell.
///
/// With `v_k = (r_{k+1}^3 - r_k^3) / 3` and the distance between adjacent
/// cell centers `delta = (r_{k+2} - r_k) / 2`:
/// `a_k = v_k`, `d_k = -omega2 v_k`,
/// `b_k = -omega2 lambda2 r_{k+1}^2 / delta` (zero on the top level), `c_k = b_{k-1}`
/// (zero on the bottom level).
pub fn build_vertical_profile(
    vgrid: &VerticalGrid,
    omega2: f64,
    lambda2: f64,
) -> Result<VerticalProfile> {
    if !(omega2 > 0.0) || !omega2.is_finite() {
        return invalid(format!("omega2 must be positive and finite, got {omega2}"));
    }
    if !(lambda2 >= 0.0) || !lambda2.is_finite() {
        return invalid(format!("lambda2 must be non-negative and finite, got {lambda2}"));
    }
    let n_z = vgrid.n_z();
    let r = vgrid.radii();

    let v: Vec<f64> = (0..n_z)
        .map(|k| (r[k + 1].powi(3) - r[k].powi(3)) / 3.0)
        .collect();
    let a = v.clone();
    let d: Vec<f64> = v.iter().map(|vk| -omega2 * vk).collect();
    let mut b = vec![0.0; n_z];
    for k in 0..n_z.saturating_sub(1) {
        let delta = (r[k + 2] + r[k + 1]) / 2.0 - (r[k + 1] + r[k]) / 2.0;
        b[k] = -omega2 * lambda2 * r[k + 1] * r[k + 1] / delta;
    }
    let mut c = vec![0.0; n_z];
    c[1..].copy_from_slice(&b[..n_z - 1]);

    let scale = |x: &[f64]| x.iter().zip(&d).map(|(x, d)| x / d).collect::<Vec<_>>();
    Ok(VerticalProfile {
        n_z,
        a_prime: scale(&a),
        b_prime: scale(&b),
        c_prime: scale(&c),
        d,
        omega2,
        lambda2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Spmv,
    Prec,
    Blas,
    InterleavedSpmv,
    InterleavedPrec,
    PcgTotal,
    InterleavedTotal,
}

impl Kernel {
    pub const ALL: [Kernel; 7] = [
        Kernel::Spmv,
        Kernel::Prec,
        Kernel::Blas,
        Kernel::InterleavedSpmv,
        Kernel::InterleavedPrec,
        Kernel::PcgTotal,
        Kernel::InterleavedTotal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Kernel::Spmv => "spmv",
            Kernel::Prec => "prec",
            Kernel::Blas => "blas",
            Kernel::InterleavedSpmv => "interleaved_spmv",
            Kernel::InterleavedPrec => "interleaved_prec",
            Kernel::PcgTotal => "pcg_total",
            Kernel::InterleavedTotal => "interleaved_total",
        }
    }
}

/// What is assumed to stay resident in cache between grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheAssumption {
    None,
    /// The four profile vectors stay cached.
    MatrixCached,
    /// Profile vectors and all data of the current column stay cached.
    ColumnsCached,
}

impl CacheAssumption {
    pub const ALL: [CacheAssumption; 3] = [
        CacheAssumption::None,
        CacheAssumption::MatrixCached,
        CacheAssumption::ColumnsCached,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CacheAssumption::None => "none",
            CacheAssumption::MatrixCached => "matrix_cached",
            CacheAssumption::ColumnsCached => "columns_cached",
        }
    }

    fn column(self) -> usize {
        self as usize
    }
}

impl FromStr for CacheAssumption {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        CacheAssumption::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown cache assumption '{s}'"))
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for CacheAssumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Level-1 operations of one PCG iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlasOp {
    Scal,
    Axpy,
    Dot,
    Nrm2,
}

impl BlasOp {
    pub const ALL: [BlasOp; 4] = [BlasOp::Scal, BlasOp::Axpy, BlasOp::Dot, BlasOp::Nrm2];

    pub fn as_str(self) -> &'static str {
        match self {
            BlasOp::Scal => "scal",
            BlasOp::Axpy => "axpy",
            BlasOp::Dot => "dot",
            BlasOp::Nrm2 => "nrm2",
        }
    }

    /// How often the op occurs in one standard PCG iteration.
    pub fn count_per_iteration(self) -> u32 {
        match self {
            BlasOp::Scal => 1,
            BlasOp::Axpy => 3,
            BlasOp::Dot => 2,
            BlasOp::Nrm2 => 1,
        }
    }
}

/// Floating point operations and memory references per grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CostReport {
    pub flops: u32,
    pub mem_refs: u32,
}

pub fn blas_op_cost(op: BlasOp) -> CostReport {
    let (flops, mem_refs) = match op {
        BlasOp::Scal => (1, 2),
        BlasOp::Axpy => (2, 3),
        BlasOp::Dot => (2, 2),
        BlasOp::Nrm2 => (2, 1),
    };
    CostReport { flops, mem_refs }
}

/// Sum of all level-1 operations of one standard PCG iteration.
pub fn blas_total_cost() -> CostReport {
    BlasOp::ALL.iter().fold(CostReport { flops: 0, mem_refs: 0 }, |acc, &op| {
        let c = blas_op_cost(op);
        let n = op.count_per_iteration();
        CostReport {
            flops: acc.flops + n * c.flops,
            mem_refs: acc.mem_refs + n * c.mem_refs,
        }
    })
}

/// Per-iteration, per-grid-point cost of the matrix-free kernels.
/// Level-1 operations are not affected by the cache assumption.
pub fn cost_model(kernel: Kernel, cache: CacheAssumption) -> CostReport {
    // mem refs: [no cache, profile cached, column cached]
    let (flops, mem): (u32, [u32; 3]) = match kernel {
        Kernel::Spmv => (20, [12, 8, 6]),
        Kernel::Prec => (13, [12, 8, 5]),
        Kernel::Blas => {
            let t = blas_total_cost();
            (t.flops, [t.mem_refs; 3])
        }
        Kernel::InterleavedSpmv => (28, [17, 13, 11]),
        Kernel::InterleavedPrec => (19, [16, 12, 9]),
        Kernel::PcgTotal => {
            let parts = [Kernel::Spmv, Kernel::Prec, Kernel::Blas].map(|k| cost_model(k, cache));
            return sum_reports(&parts);
        }
        Kernel::InterleavedTotal => {
            let parts =
                [Kernel::InterleavedSpmv, Kernel::InterleavedPrec].map(|k| cost_model(k, cache));
            return sum_reports(&parts);
        }
    };
    CostReport {
        flops,
        mem_refs: mem[cache.column()],
    }
}

fn sum_reports(parts: &[CostReport]) -> CostReport {
    CostReport {
        flops: parts.iter().map(|p| p.flops).sum(),
        mem_refs: parts.iter().map(|p| p.mem_refs).sum(),
    }
}

/// Rates in FLOP/s and bytes/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Throughput {
    pub flop_rate: f64,
    pub bandwidth: f64,
}

/// Converts a cost report and a measured time into rates. The bandwidth
/// figure is a traffic model estimate, not a measurement.
pub fn throughput_estimate(
    report: CostReport,
    grid_points: u64,
    seconds: f64,
    scalar_bytes: usize,
) -> Result<Throughput> {
    if !(seconds > 0.0) {
        return invalid(format!("seconds must be positive, got {seconds}"));
    }
    let n = grid_points as f64;
    Ok(Throughput {
        flop_rate: report.flops as f64 * n / seconds,
        bandwidth: report.mem_refs as f64 * n * scalar_bytes as f64 / seconds,
    })
}
