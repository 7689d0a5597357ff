use anisolve::csr::{assemble_csr, assemble_preconditioner, solve_tridiag_set, spmv_csr, CsrMatrix};
use anisolve::dense::{
    assemble_dense, assemble_dense_preconditioner, dense_apply, spectrum_report, symmetric_eigenvalues,
    symmetry_defect, DENSE_LIMIT,
};
use anisolve::fields::{axpy, dot, nrm2, scal};
use anisolve::matrix_free::{FusedState, OperatorContext};
use anisolve::problem::{GeometryKind, Problem, DEFAULT_SEED};
use anisolve::solver::{pcg_interleaved, pcg_standard, with_workers, Backend, SolverConfig, Variant};
use anisolve::{Error, Field3D, Layout, Result};

pub const EXIT_FAILED: i32 = 3;

const GEOMETRIES: [GeometryKind; 2] = [GeometryKind::CubedSphere, GeometryKind::Planar];

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub grids: Vec<(usize, usize)>,
    pub spectrum: bool,
    pub workers: usize,
    pub inject_fault: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            grids: vec![(2, 2), (4, 8), (8, 16)],
            spectrum: false,
            workers: 2,
            inject_fault: false,
        }
    }
}

/// `max |a - b| / max |b|`
pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let diff = a.iter().zip(b).fold(0.0f64, |s, (x, y)| s.max((x - y).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        (a - b).abs() / b.abs()
    }
}

/// Worst value seen for one check across all grids.
struct Tally {
    name: &'static str,
    limit: f64,
    worst: f64,
    failed_at: Option<String>,
}

impl Tally {
    fn new(name: &'static str, limit: f64) -> Self {
        Tally { name, limit, worst: 0.0, failed_at: None }
    }

    fn record(&mut self, value: f64, at: impl FnOnce() -> String) {
        let bad = !(value <= self.limit);
        if bad && self.failed_at.is_none() {
            self.failed_at = Some(at());
        }
        if value > self.worst || value.is_nan() {
            self.worst = value;
        }
    }

    fn fail(&mut self, at: String) {
        if self.failed_at.is_none() {
            self.failed_at = Some(at);
        }
    }

    fn finish(self) -> Check {
        let detail = match &self.failed_at {
            None => format!("worst {:.2e} <= {:.0e}", self.worst, self.limit),
            Some(at) => format!("worst {:.2e} > {:.0e} ({at})", self.worst, self.limit),
        };
        Check { name: self.name, passed: self.failed_at.is_none(), detail }
    }
}

fn context(geometry: GeometryKind, m: usize, n_z: usize) -> Result<OperatorContext<f64>> {
    Problem::new(geometry, m, n_z).context()
}

fn assemble(ctx: &OperatorContext<f64>, layout: Layout, fault: bool) -> CsrMatrix<f64> {
    let mut a = assemble_csr(ctx, layout);
    if fault {
        // Flip the sign of the last coupling in the first row.
        let last = a.row_ptr[1] - 1;
        a.vals[last] = -a.vals[last];
    }
    a
}

fn label(geometry: GeometryKind, m: usize, n_z: usize, layout: Layout) -> String {
    format!("{geometry} {m}x{m}x{n_z} {layout}")
}

pub fn run_verify(opts: &VerifyOptions) -> Result<Vec<Check>> {
    if opts.workers == 0 {
        return Err(Error::InvalidArgument("workers must be at least 1".into()));
    }
    for &(m, n_z) in &opts.grids {
        if m * m * n_z > DENSE_LIMIT {
            return Err(Error::TooLarge { n: m * m * n_z, limit: DENSE_LIMIT });
        }
    }
    with_workers(opts.workers, || suite(opts))?
}

fn suite(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut equiv = Tally::new("operator_equivalence", 1e-13);
    let mut sym = Tally::new("symmetry", 1e-15);
    let mut spd = Tally::new("positive_definite", 0.0);
    let mut prec = Tally::new("preconditioner_exactness", 1e-12);
    let mut fusion = Tally::new("fusion_equivalence", 1e-13);
    let mut variants = Tally::new("variant_equivalence", 1e-13);
    let mut backends = Tally::new("backend_equivalence", 1e-13);
    let mut determinism = Tally::new("worker_determinism", 0.0);
    let mut spectrum = opts.spectrum.then(|| Tally::new("spectrum", 0.0));
    let mut spectrum_note = String::new();

    for &(m, n_z) in &opts.grids {
        for geometry in GEOMETRIES {
            let ctx = context(geometry, m, n_z)?;
            for layout in Layout::ALL {
                let at = || label(geometry, m, n_z, layout);
                let a = assemble(&ctx, layout, opts.inject_fault);
                let dense = assemble_dense(&ctx, layout)?;
                let dense_m = assemble_dense_preconditioner(&ctx, layout)?;
                let set = assemble_preconditioner(&ctx);

                // Matrix-free, CSR and dense products.
                for seed in 0..20 {
                    let x = Field3D::<f64>::random(m, n_z, layout, seed);
                    let mut y_mf = ctx.zeros(layout);
                    let mut y_csr = ctx.zeros(layout);
                    ctx.apply(&x, &mut y_mf)?;
                    spmv_csr(&a, &x, &mut y_csr)?;
                    let y_dense = dense_apply(&dense, &x)?;
                    for (p, q) in [(&y_mf, &y_csr), (&y_mf, &y_dense), (&y_csr, &y_dense)] {
                        equiv.record(rel_diff(p.data(), q.data()), at);
                    }
                }

                // Symmetry of the dense oracle, of the stored matrix (up to
                // rounding of the scaled coefficients) and of the stencil.
                sym.record(symmetry_defect(&dense), at);
                for l in 0..a.n() {
                    let (cols, vals) = a.row(l);
                    for (&c, &v) in cols.iter().zip(vals) {
                        let t = a.get(c, l);
                        if (v - t).abs() > 4.0 * f64::EPSILON * v.abs() {
                            sym.fail(format!("stored entries ({l},{c}) and ({c},{l}) differ in {}", at()));
                            sym.record((v - t).abs() / v.abs(), at);
                        }
                    }
                }
                for seed in 0..5 {
                    let x = Field3D::<f64>::random(m, n_z, layout, 100 + seed);
                    let y = Field3D::<f64>::random(m, n_z, layout, 200 + seed);
                    let mut ax = ctx.zeros(layout);
                    let mut ay = ctx.zeros(layout);
                    spmv_csr(&a, &x, &mut ax)?;
                    spmv_csr(&a, &y, &mut ay)?;
                    let (xay, yax) = (dot(&x, &ay)?, dot(&y, &ax)?);
                    if rel(xay, yax) > 1e-12 {
                        sym.fail(format!("<x,Ay> != <Ax,y> in {}", at()));
                    }
                }

                // Definiteness: dense spectrum and random quadratic forms.
                if layout == Layout::VerticalContiguous {
                    let lmin = symmetric_eigenvalues(&dense)?[0];
                    if !(lmin > 0.0) {
                        spd.fail(format!("smallest eigenvalue {lmin:e} in {}", at()));
                    }
                }
                for seed in 0..100 {
                    let x = Field3D::<f64>::random(m, n_z, layout, 300 + seed);
                    let mut ax = ctx.zeros(layout);
                    ctx.apply(&x, &mut ax)?;
                    let q = dot(&x, &ax)?;
                    if !(q > 0.0) {
                        spd.fail(format!("<x,Ax> = {q:e} in {}", at()));
                    }
                }

                // M applied to M^{-1} y through the dense block matrix.
                for seed in 0..10 {
                    let y = Field3D::<f64>::random(m, n_z, layout, 400 + seed);
                    let mut x_mf = ctx.zeros(layout);
                    let mut x_csr = ctx.zeros(layout);
                    ctx.precondition(&y, &mut x_mf)?;
                    solve_tridiag_set(&set, &y, &mut x_csr)?;
                    for x in [&x_mf, &x_csr] {
                        let back = dense_apply(&dense_m, x)?;
                        let mut r = y.clone();
                        axpy(-1.0, &back, &mut r)?;
                        prec.record(nrm2(&r) / nrm2(&y), at);
                    }
                }

                check_fusion(&ctx, layout, &mut fusion, &at)?;
                check_solvers(&ctx, layout, &mut variants, &mut backends, &at)?;
                check_determinism(&ctx, layout, opts.workers, &mut determinism, &at)?;

                if let Some(t) = spectrum.as_mut() {
                    if layout == Layout::VerticalContiguous {
                        let rep = spectrum_report(&dense, &dense_m)?;
                        if !(rep.line_min > 0.0) {
                            t.fail(format!("M^-1 A has eigenvalue {:e} in {}", rep.line_min, at()));
                        }
                        if !(rep.cond_line < rep.cond_jacobi) {
                            t.fail(format!(
                                "cond(M^-1 A) = {:.3e} not below cond(D^-1 A) = {:.3e} in {}",
                                rep.cond_line,
                                rep.cond_jacobi,
                                at()
                            ));
                        }
                        spectrum_note.push_str(&format!(
                            "{}: cond(A) {:.3e}, cond(D^-1 A) {:.3e}, cond(M^-1 A) {:.3e}, eig(M^-1 A) in [{:.4}, {:.4}]; ",
                            at(),
                            rep.cond,
                            rep.cond_jacobi,
                            rep.cond_line,
                            rep.line_min,
                            rep.line_max
                        ));
                    }
                }
            }
        }
    }

    let mut checks = vec![
        equiv.finish(),
        sym.finish(),
        {
            let mut c = spd.finish();
            c.detail = if c.passed {
                "all eigenvalues and quadratic forms positive".into()
            } else {
                c.detail
            };
            c
        },
        prec.finish(),
        fusion.finish(),
        variants.finish(),
        backends.finish(),
        {
            let mut c = determinism.finish();
            if c.passed {
                c.detail = format!("1 vs {} workers bit-identical", opts.workers);
            }
            c
        },
    ];
    if let Some(t) = spectrum {
        let mut c = t.finish();
        if c.passed {
            c.detail = spectrum_note.trim_end_matches("; ").to_string();
        }
        checks.push(c);
    }
    Ok(checks)
}

fn check_fusion(ctx: &OperatorContext<f64>, layout: Layout, t: &mut Tally, at: &dyn Fn() -> String) -> Result<()> {
    let (m, n_z) = (ctx.m(), ctx.n_z());
    let rand = |seed| Field3D::<f64>::random(m, n_z, layout, seed);

    let mut st = FusedState::zeros(m, n_z, layout);
    st.u = rand(1);
    st.z = rand(2);
    st.p = rand(3);
    st.q = rand(4);
    st.r = rand(5);
    st.alpha = 0.37;
    st.beta = 0.61;
    let mut reference = st.clone();

    let sigma = ctx.interleaved_spmv_kernel(&mut st)?;
    {
        let FusedState { u, z, p, q, alpha, beta, .. } = &mut reference;
        axpy(*alpha, p, u)?;
        scal(*beta, p);
        axpy(1.0, z, p)?;
        let mut az = ctx.zeros(layout);
        ctx.apply(z, &mut az)?;
        scal(*beta, q);
        axpy(1.0, &az, q)?;
        let sigma_ref = dot(p, q)?;
        t.record(rel(sigma, sigma_ref), at);
    }
    for (x, y) in [(&st.u, &reference.u), (&st.p, &reference.p), (&st.q, &reference.q)] {
        t.record(rel_diff(x.data(), y.data()), at);
    }

    let (r_norm, kappa) = ctx.interleaved_prec_kernel(&mut st)?;
    let FusedState { r, z, q, alpha, .. } = &mut reference;
    axpy(-*alpha, q, r)?;
    ctx.precondition(r, z)?;
    t.record(rel(r_norm, nrm2(r)), at);
    t.record(rel(kappa, dot(r, z)?), at);
    t.record(rel_diff(st.r.data(), r.data()), at);
    t.record(rel_diff(st.z.data(), z.data()), at);
    Ok(())
}

fn check_solvers(
    ctx: &OperatorContext<f64>,
    layout: Layout,
    variants: &mut Tally,
    backends: &mut Tally,
    at: &dyn Fn() -> String,
) -> Result<()> {
    let f = Field3D::<f64>::random(ctx.m(), ctx.n_z(), layout, DEFAULT_SEED);
    let u0 = ctx.zeros(layout);
    let cfg = SolverConfig { workers: 1, ..SolverConfig::default() };
    let (_, s) = pcg_standard(ctx, &f, &u0, &cfg)?;
    let (_, i) = pcg_interleaved(ctx, &f, &u0, &SolverConfig { variant: Variant::Interleaved, ..cfg })?;
    let (_, c) = pcg_standard(ctx, &f, &u0, &SolverConfig { backend: Backend::Csr, ..cfg })?;
    if s.iterations != i.iterations {
        variants.fail(format!("{} vs {} iterations in {}", s.iterations, i.iterations, at()));
    }
    if s.iterations != c.iterations {
        backends.fail(format!("{} vs {} iterations in {}", s.iterations, c.iterations, at()));
    }
    // Rounding differences are absolute in units of ||r_0|| and grow
    // relative to ||r_j|| as the residual falls, so histories are compared
    // on the scale of the initial residual.
    let r0 = s.initial_residual();
    let hist = |x: &[f64], y: &[f64]| x.iter().zip(y).fold(0.0f64, |w, (a, b)| w.max((a - b).abs() / r0));
    variants.record(hist(&s.residual_history, &i.residual_history), at);
    backends.record(hist(&s.residual_history, &c.residual_history), at);
    Ok(())
}

fn check_determinism(
    ctx: &OperatorContext<f64>,
    layout: Layout,
    workers: usize,
    t: &mut Tally,
    at: &dyn Fn() -> String,
) -> Result<()> {
    let f = Field3D::<f64>::random(ctx.m(), ctx.n_z(), layout, DEFAULT_SEED);
    let u0 = ctx.zeros(layout);
    let run = |w: usize| -> Result<Vec<u64>> {
        let mut bits = Vec::new();
        for variant in Variant::ALL {
            let cfg = SolverConfig { workers: w, variant, ..SolverConfig::default() };
            let (u, res) = if variant == Variant::Standard {
                pcg_standard(ctx, &f, &u0, &cfg)?
            } else {
                pcg_interleaved(ctx, &f, &u0, &cfg)?
            };
            bits.extend(u.data().iter().map(|v| v.to_bits()));
            bits.extend(res.residual_history.iter().map(|v| v.to_bits()));
        }
        Ok(bits)
    };
    if run(1)? != run(workers)? {
        t.fail(format!("results differ between 1 and {workers} workers in {}", at()));
    }
    Ok(())
}

pub fn format_table(checks: &[Check]) -> String {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
    let mut out = format!("{:<width$}  {:<6}  detail\n", "check", "result");
    for c in checks {
        let status = if c.passed { "ok" } else { "FAILED" };
        out.push_str(&format!("{:<width$}  {:<6}  {}\n", c.name, status, c.detail));
    }
    out
}
