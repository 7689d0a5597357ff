use anisolve::dense::{assemble_dense, assemble_dense_preconditioner, dense_pcg, to_vector};
use anisolve::problem::{GeometryKind, Problem, DEFAULT_SEED};
use anisolve::solver::{pcg_interleaved, pcg_standard, solve, true_residual, Backend, SolveResult, SolverConfig, Variant};
use anisolve::Layout;

fn cfg(workers: usize) -> SolverConfig {
    SolverConfig { workers, ..SolverConfig::default() }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn run(p: &Problem, layout: Layout, seed: u64, c: &SolverConfig) -> (anisolve::Field3D<f64>, SolveResult) {
    let ctx = p.context::<f64>().unwrap();
    let f = p.rhs(layout, seed);
    solve(&ctx, &f, &ctx.zeros(layout), c).unwrap()
}

#[test]
fn standard_pcg_follows_textbook_iterates() {
    let p = Problem::new(GeometryKind::Planar, 4, 8);
    let ctx = p.context::<f64>().unwrap();
    let layout = Layout::VerticalContiguous;
    let f = p.rhs::<f64>(layout, 17);
    let a = assemble_dense(&ctx, layout).unwrap();
    let m = assemble_dense_preconditioner(&ctx, layout).unwrap();
    let (r0, steps) = dense_pcg(&a, &m, &to_vector(&f), 6).unwrap();

    let c = SolverConfig { epsilon: 1e-14, ..cfg(2) };
    let (_, res) = pcg_standard(&ctx, &f, &ctx.zeros(layout), &c).unwrap();
    assert!(rel(res.residual_history[0], r0) <= 1e-12);
    for (j, step) in steps.iter().enumerate() {
        let t = &res.trace[j];
        assert!(rel(t.alpha, step.alpha) <= 1e-12, "alpha {j}");
        if let Some(beta) = t.beta {
            assert!(rel(beta, step.beta) <= 1e-12, "beta {j}");
        }
        assert!(rel(t.r_norm, step.r_norm) <= 1e-12, "residual {j}");
    }
}

#[test]
fn interleaved_matches_standard_per_iteration() {
    for geometry in [GeometryKind::CubedSphere, GeometryKind::Planar] {
        let p = Problem::new(geometry, 8, 16);
        let ctx = p.context::<f64>().unwrap();
        for layout in Layout::ALL {
            let f = p.rhs::<f64>(layout, DEFAULT_SEED);
            let u0 = ctx.zeros(layout);
            let (us, s) = pcg_standard(&ctx, &f, &u0, &cfg(2)).unwrap();
            let (ui, i) = pcg_interleaved(&ctx, &f, &u0, &SolverConfig { variant: Variant::Interleaved, ..cfg(2) }).unwrap();
            assert_eq!(s.iterations, i.iterations);
            assert!(s.converged && i.converged);
            for (a, b) in s.trace.iter().zip(&i.trace) {
                assert!(rel(b.alpha, a.alpha) <= 1e-13);
                assert!(rel(b.sigma, a.sigma) <= 1e-13);
                assert!(rel(b.r_norm, a.r_norm) <= 1e-13);
                if let (Some(x), Some(y)) = (a.kappa, b.kappa) {
                    assert!(rel(y, x) <= 1e-13);
                }
                if let (Some(x), Some(y)) = (a.beta, b.beta) {
                    assert!(rel(y, x) <= 1e-13);
                }
            }
            let diff = us.data().iter().zip(ui.data()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let scale = us.data().iter().fold(0.0f64, |m, a| m.max(a.abs()));
            assert!(diff <= 1e-12 * scale);
        }
    }
}

#[test]
fn backends_give_the_same_history() {
    let p = Problem::new(GeometryKind::CubedSphere, 8, 16);
    let layout = Layout::HorizontalContiguous;
    let (_, mf) = run(&p, layout, 5, &cfg(2));
    let (_, csr) = run(&p, layout, 5, &SolverConfig { backend: Backend::Csr, ..cfg(2) });
    assert_eq!(mf.iterations, csr.iterations);
    for (a, b) in mf.residual_history.iter().zip(&csr.residual_history) {
        assert!(rel(*b, *a) <= 1e-13);
    }
    assert!(csr.timings.setup > 0.0);
}

#[test]
fn kappa_stays_positive() {
    let p = Problem::new(GeometryKind::CubedSphere, 12, 24);
    for variant in Variant::ALL {
        let (_, res) = run(&p, Layout::VerticalContiguous, 8, &SolverConfig { variant, ..cfg(2) });
        assert!(res.trace.iter().filter_map(|t| t.kappa).all(|k| k > 0.0));
        assert!(res.trace.iter().all(|t| t.sigma > 0.0));
    }
}

#[test]
fn recurrence_residual_is_trustworthy() {
    let p = Problem::new(GeometryKind::CubedSphere, 16, 32);
    for variant in Variant::ALL {
        let (_, res) = run(&p, Layout::VerticalContiguous, 1, &SolverConfig { variant, ..cfg(2) });
        assert!(res.converged);
        let gap = (res.true_residual - res.final_residual()).abs() / res.initial_residual();
        assert!(gap <= 1e-9, "{variant}: {gap}");
    }
}

#[test]
fn true_residual_of_zero_is_rhs_norm() {
    let p = Problem::new(GeometryKind::Planar, 3, 5);
    let ctx = p.context::<f64>().unwrap();
    let f = p.rhs::<f64>(Layout::VerticalContiguous, 2);
    let r = true_residual(&ctx, &ctx.zeros(Layout::VerticalContiguous), &f).unwrap();
    assert_eq!(r, anisolve::fields::nrm2(&f));
}

#[test]
fn solutions_do_not_depend_on_worker_count() {
    let p = Problem::new(GeometryKind::CubedSphere, 10, 16);
    for variant in Variant::ALL {
        for backend in Backend::ALL {
            if backend == Backend::Csr && variant == Variant::Interleaved {
                continue;
            }
            let c = |w| SolverConfig { variant, backend, ..cfg(w) };
            let (u1, r1) = run(&p, Layout::HorizontalContiguous, 4, &c(1));
            let (u4, r4) = run(&p, Layout::HorizontalContiguous, 4, &c(4));
            assert_eq!(u1, u4);
            assert_eq!(r1.residual_history, r4.residual_history);
        }
    }
}

#[test]
fn layouts_give_identical_iterates() {
    let p = Problem::new(GeometryKind::CubedSphere, 6, 10);
    for variant in Variant::ALL {
        let c = SolverConfig { variant, ..cfg(2) };
        let (uv, rv) = run(&p, Layout::VerticalContiguous, 9, &c);
        let (uh, rh) = run(&p, Layout::HorizontalContiguous, 9, &c);
        assert_eq!(rv.residual_history, rh.residual_history);
        assert_eq!(uh.relayout(Layout::VerticalContiguous), uv);
    }
}

#[test]
fn single_precision_tracks_double() {
    let p = Problem::new(GeometryKind::CubedSphere, 8, 16);
    let ctx = p.context::<f32>().unwrap();
    let layout = Layout::VerticalContiguous;
    let f = p.rhs::<f32>(layout, 3);
    let c = SolverConfig { workers: 2, maxiter: 5, ..SolverConfig::for_precision::<f32>() };
    let (_, s) = solve(&ctx, &f, &ctx.zeros(layout), &c).unwrap();
    let (_, i) = solve(&ctx, &f, &ctx.zeros(layout), &SolverConfig { variant: Variant::Interleaved, ..c }).unwrap();
    // Rounding differences in the residual recurrence grow like
    // eps * ||r_0|| / ||r_j||, so single precision is compared on the scale
    // of the initial residual.
    let r0 = s.residual_history[0];
    for (a, b) in s.residual_history.iter().zip(&i.residual_history) {
        assert!((a - b).abs() / r0 <= 1e-5);
    }
}

#[test]
fn precision_mismatch_is_rejected() {
    let p = Problem::new(GeometryKind::Planar, 2, 2);
    let ctx = p.context::<f32>().unwrap();
    let f = p.rhs::<f32>(Layout::VerticalContiguous, 1);
    assert!(solve(&ctx, &f, &f, &cfg(1)).is_err());
}
