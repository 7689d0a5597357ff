use std::path::PathBuf;

use anisolve::problem::{GeometryKind, Problem, DEFAULT_H_ATMOS, DEFAULT_LAMBDA2, DEFAULT_OMEGA2, DEFAULT_SEED};
use anisolve::solver::{default_workers, Backend, SolverConfig, Variant};
use anisolve::{Layout, Precision, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "anisolve", version, about = "PCG solvers for anisotropic elliptic problems on a thin spherical shell")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one problem and report iterations, residuals and timings.
    Solve(SolveArgs),
    /// Run the equivalence and definiteness checks on small grids.
    Verify(VerifyArgs),
    /// Time fixed-length PCG runs and print one CSV row per configuration.
    Bench(BenchArgs),
    /// Print the per-grid-point FLOP and memory reference tables.
    CostModel(CostModelArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    #[arg(long, default_value = "cubed-sphere")]
    pub geometry: GeometryKind,
    /// Horizontal cells per panel side.
    #[arg(long, default_value_t = 64)]
    pub m: usize,
    /// Vertical levels.
    #[arg(long = "nz", default_value_t = 64)]
    pub n_z: usize,
    /// Shell thickness relative to the inner radius.
    #[arg(long, default_value_t = DEFAULT_H_ATMOS)]
    pub h_atmos: f64,
    #[arg(long, default_value_t = DEFAULT_OMEGA2)]
    pub omega2: f64,
    #[arg(long, default_value_t = DEFAULT_LAMBDA2)]
    pub lambda2: f64,
    /// Seed of the pseudorandom right-hand side.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

impl ProblemArgs {
    pub fn problem(&self) -> Problem {
        Problem {
            geometry: self.geometry,
            m: self.m,
            n_z: self.n_z,
            h_atmos: self.h_atmos,
            omega2: self.omega2,
            lambda2: self.lambda2,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value = "matrix-free")]
    pub backend: Backend,
    #[arg(long, default_value = "standard")]
    pub variant: Variant,
    #[arg(long, default_value = "vertical")]
    pub layout: Layout,
    #[arg(long, default_value = "double")]
    pub precision: Precision,
    /// Relative residual reduction target.
    #[arg(long, default_value_t = 1e-5)]
    pub epsilon: f64,
    /// Absolute residual target.
    #[arg(long, default_value_t = 1e-20)]
    pub tau: f64,
    #[arg(long, default_value_t = 1000)]
    pub maxiter: usize,
    #[arg(long, default_value_t = default_workers())]
    pub workers: usize,
    /// Start vector in the raw field format (defaults to zero).
    #[arg(long)]
    pub initial_guess: Option<PathBuf>,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    /// Residual history as CSV.
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    /// Assembled operator in Matrix Market format.
    #[arg(long)]
    pub dump_matrix: Option<PathBuf>,
    /// Solution in the raw field format.
    #[arg(long)]
    pub dump_solution: Option<PathBuf>,
    /// Per-cell areas and couplings as CSV.
    #[arg(long)]
    pub dump_geometry: Option<PathBuf>,
}

impl SolveArgs {
    pub fn config(&self) -> SolverConfig {
        SolverConfig {
            epsilon: self.epsilon,
            tau: self.tau,
            maxiter: self.maxiter,
            variant: self.variant,
            backend: self.backend,
            precision: self.precision,
            workers: self.workers,
            fixed_iterations: false,
        }
    }

    /// All parameter checks, before anything is allocated.
    pub fn validate(&self) -> Result<()> {
        self.problem.problem().validate()?;
        self.config().validate()
    }
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Single grid `MxMxNZ` (at most 4096 unknowns); adds the spectrum check.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long, default_value_t = default_workers().max(2))]
    pub workers: usize,
    /// Corrupts one matrix entry before checking (exercises the failure path).
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// One or more backends, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "matrix-free")]
    pub backend: Vec<Backend>,
    #[arg(long, value_delimiter = ',', default_value = "standard")]
    pub variant: Vec<Variant>,
    #[arg(long, value_delimiter = ',', default_value = "vertical")]
    pub layout: Vec<Layout>,
    #[arg(long, value_delimiter = ',', default_value = "double")]
    pub precision: Vec<Precision>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![default_workers()])]
    pub workers: Vec<usize>,
    /// PCG iterations per timed run.
    #[arg(long, default_value_t = 100)]
    pub iterations: usize,
    /// Timed repetitions; the median is reported.
    #[arg(long, default_value_t = 3)]
    pub repetitions: usize,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CostModelArgs {
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}

/// Parses `MxMxNZ` (for example `4x4x8`) into `(m, n_z)`.
pub fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = s.split('x').collect();
    let bad = || anisolve::Error::InvalidArgument(format!("grid '{s}' is not of the form MxMxNZ"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<usize> = parts
        .iter()
        .map(|p| p.parse::<usize>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    if nums[0] != nums[1] {
        return Err(anisolve::Error::InvalidArgument(format!("grid '{s}' must be square horizontally")));
    }
    if nums[0] == 0 || nums[2] == 0 {
        return Err(bad());
    }
    Ok((nums[0], nums[2]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_strings() {
        assert_eq!(parse_grid("4x4x8").unwrap(), (4, 8));
        assert!(parse_grid("4x5x8").is_err());
        assert!(parse_grid("4x4").is_err());
        assert!(parse_grid("0x0x3").is_err());
        assert!(parse_grid("axbxc").is_err());
    }

    #[test]
    fn defaults_parse() {
        let cli = Cli::try_parse_from(["anisolve", "solve"]).unwrap();
        let Command::Solve(a) = cli.command else { panic!() };
        assert_eq!(a.problem.m, 64);
        assert_eq!(a.backend, Backend::MatrixFree);
        assert_eq!(a.layout, Layout::VerticalContiguous);
        assert!(a.validate().is_ok());
    }

    #[test]
    fn sweep_lists() {
        let cli = Cli::try_parse_from(["anisolve", "bench", "--backend", "matrix-free,csr", "--workers", "1,2"]).unwrap();
        let Command::Bench(b) = cli.command else { panic!() };
        assert_eq!(b.backend, vec![Backend::MatrixFree, Backend::Csr]);
        assert_eq!(b.workers, vec![1, 2]);
    }
}
