use core::ops::ControlFlow;

use mgritopt_core::exec::Sequential;
use mgritopt_core::mgrit::{LevelKernel, Rhs};
use mgritopt_core::problems::{build_mp1, build_mp2};
use mgritopt_core::sequential::Storage;
use mgritopt_core::{
    adaptive_horizon_solve, mgrit_solve, run_sequential, AdaptiveConfig, CorrectionScheme, Error,
    GrowthPolicy, HaltReason, IterationHierarchy, IterationView, LevelOperator, Method,
    MgritConfig, MgritSolver, Monitor, Problem, Propagator, PropagatorKind, SequentialConfig,
};
use nalgebra::{DMatrix, DVector};

struct Snapshots(Vec<Vec<f64>>);

impl Monitor for Snapshots {
    fn observe(&mut self, view: &IterationView<'_>) -> ControlFlow<()> {
        self.0.push(view.trajectory.to_vec());
        ControlFlow::Continue(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Sequential trajectory with exactly `steps` iterations, flattened.
fn sequential_points(p: &Problem, steps: usize) -> Vec<f64> {
    let mut cfg = SequentialConfig::new(Method::baseline(p));
    cfg.tol = 0.0;
    cfg.max_iter = steps;
    cfg.storage = Storage::Strided(1);
    let run = run_sequential(p, &cfg, &p.initial_condition()).unwrap();
    assert_eq!(run.trajectory.len(), steps + 1);
    run.trajectory.checkpoints().to_vec()
}

fn random_trajectory(p: &Problem, points: usize) -> Vec<f64> {
    use rand::Rng;
    let mut rng = p.initial_stream();
    (0..points * p.len()).map(|_| rng.random::<f64>()).collect()
}

#[test]
fn f_relax_reproduces_power_step_from_c_points() {
    let p = build_mp1(6, 2).unwrap();
    let s = 1.0 / p.lipschitz();
    let op =
        LevelOperator::Single(Propagator::new(&p, PropagatorKind::GradientDescent, s).unwrap());
    let gd = Propagator::new(&p, PropagatorKind::GradientDescent, s).unwrap();
    let (n, m, points) = (6, 4, 13);
    let mut u = random_trajectory(&p, points);
    let w0 = u[..n].to_vec();
    let kernel = LevelKernel {
        op: &op,
        homogeneous: false,
        rhs: Rhs::Initial(&w0),
        n,
        m,
    };
    let before = u.clone();
    kernel.f_relax(&Sequential, &mut u);
    for j in 0..3 {
        let c = &before[j * m * n..(j * m + 1) * n];
        assert_eq!(&u[j * m * n..(j * m + 1) * n], c);
        for k in 1..m {
            let want = gd.power_step(k, c).unwrap();
            let got = &u[(j * m + k) * n..(j * m + k + 1) * n];
            for (x, y) in got.iter().zip(&want) {
                assert!((x - y).abs() <= 1e-14 * y.abs().max(1.0));
            }
        }
    }
    // residual vanishes at every F-point
    let mut phi = vec![0.0; n];
    for i in 1..points {
        if i % m == 0 {
            continue;
        }
        op.apply(&u[(i - 1) * n..i * n], &mut phi);
        let r: Vec<f64> = phi
            .iter()
            .zip(&u[i * n..(i + 1) * n])
            .map(|(a, b)| a - b)
            .collect();
        assert!(norm(&r) <= 1e-14 * norm(&w0));
    }
}

#[test]
fn c_relax_single_interval_by_hand() {
    // n = 3 on [0, 1]: h = 1/4, A = 16·tridiag(−1, 2, −1)
    let p = build_mp1(3, 0).unwrap();
    let s = 1.0 / p.lipschitz();
    let op =
        LevelOperator::Single(Propagator::new(&p, PropagatorKind::GradientDescent, s).unwrap());
    let b = p.linear_term().to_vec();
    let mut u = vec![0.5, 0.5, 0.5, 1.0, 0.0, 2.0, 9.0, 9.0, 9.0];
    let w0 = u[..3].to_vec();
    let kernel = LevelKernel {
        op: &op,
        homogeneous: false,
        rhs: Rhs::Initial(&w0),
        n: 3,
        m: 2,
    };
    let mut scratch = vec![0.0; 6];
    kernel.c_relax(&Sequential, &mut u, &mut scratch);
    let au = [
        16.0 * (2.0 * 1.0 - 0.0),
        16.0 * (0.0 - 1.0 - 2.0),
        16.0 * (4.0 - 0.0),
    ];
    let want: Vec<f64> = [1.0, 0.0, 2.0]
        .iter()
        .zip(au)
        .zip(&b)
        .map(|((x, a), bi)| x - s * (a - bi))
        .collect();
    for (x, y) in u[6..].iter().zip(&want) {
        assert!((x - y).abs() < 1e-14);
    }
    assert_eq!(&u[..6], &[0.5, 0.5, 0.5, 1.0, 0.0, 2.0]);
    let once = u.clone();
    kernel.c_relax(&Sequential, &mut u, &mut scratch);
    assert_eq!(u, once);
}

#[test]
fn relaxation_leaves_exact_trajectory_unchanged() {
    let p = build_mp1(5, 3).unwrap();
    let exact = sequential_points(&p, 16);
    let s = 1.0 / p.lipschitz();
    let op =
        LevelOperator::Single(Propagator::new(&p, PropagatorKind::GradientDescent, s).unwrap());
    let w0 = exact[..5].to_vec();
    let kernel = LevelKernel {
        op: &op,
        homogeneous: false,
        rhs: Rhs::Initial(&w0),
        n: 5,
        m: 4,
    };
    let mut u = exact.clone();
    let mut scratch = vec![0.0; 25];
    kernel.fcf_relax(&Sequential, &mut u, &mut scratch);
    assert_eq!(u, exact);
    let r = kernel.residual(&Sequential, &u, &mut scratch);
    assert_eq!(r, 0.0);
}

#[test]
fn residual_equals_dense_operator_times_error() {
    // N_t = 8, n = 3: A e = r for the linear all-at-once operator
    let p = build_mp1(3, 5).unwrap();
    let (n, m, points) = (3, 4, 9);
    let s = 1.0 / p.lipschitz();
    let gd = Propagator::new(&p, PropagatorKind::GradientDescent, s).unwrap();
    let op = LevelOperator::Single(gd.clone());
    let exact = sequential_points(&p, 8);
    let mut v = random_trajectory(&p, points);
    v[..n].copy_from_slice(&exact[..n]);
    let w0 = v[..n].to_vec();
    let kernel = LevelKernel {
        op: &op,
        homogeneous: false,
        rhs: Rhs::Initial(&w0),
        n,
        m,
    };
    kernel.f_relax(&Sequential, &mut v);
    let mut c_res = vec![0.0; 3 * n];
    kernel.residual(&Sequential, &v, &mut c_res);

    let a = DMatrix::from_row_slice(n, n, &p.laplacian().to_dense());
    let mmat = DMatrix::identity(n, n) - a * s;
    let dim = n * points;
    let mut big = DMatrix::identity(dim, dim);
    for i in 1..points {
        big.view_mut((i * n, (i - 1) * n), (n, n))
            .copy_from(&(-&mmat));
    }
    let e = DVector::from_iterator(dim, exact.iter().zip(&v).map(|(u, x)| u - x));
    let ae = big * e;
    for i in 0..points {
        for q in 0..n {
            let want = if i % m == 0 {
                c_res[(i / m) * n + q]
            } else {
                0.0
            };
            assert!((ae[i * n + q] - want).abs() < 1e-12, "point {i}");
        }
    }
}

#[test]
fn first_2mk_points_are_exact_after_k_iterations() {
    let p = build_mp1(40, 0).unwrap();
    let exact = sequential_points(&p, 64);
    let solver = MgritSolver::new(&p, MgritConfig::new(4, 2, 64)).unwrap();
    let mut snaps = Snapshots(Vec::new());
    solver.solve_with(&Sequential, &mut snaps).unwrap();
    let scale = norm(&exact);
    assert!(snaps.0.len() >= 3);
    for (k, traj) in snaps.0.iter().enumerate() {
        let upto = (8 * k).min(65) * 40;
        let err: f64 = norm(
            &traj[..upto]
                .iter()
                .zip(&exact[..upto])
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        assert!(err <= 1e-10 * scale, "k={k}: {err}");
    }
}

#[test]
fn linear_and_fas_iterates_agree() {
    let p = build_mp1(32, 6).unwrap();
    for levels in [2, 3, 4] {
        let mut snaps = Vec::new();
        for scheme in [CorrectionScheme::Fas, CorrectionScheme::Linear] {
            let mut cfg = MgritConfig::new(4, levels, 1024);
            cfg.scheme = scheme;
            let mut mon = Snapshots(Vec::new());
            MgritSolver::new(&p, cfg)
                .unwrap()
                .solve_with(&Sequential, &mut mon)
                .unwrap();
            snaps.push(mon.0);
        }
        assert_eq!(snaps[0].len(), snaps[1].len());
        for (a, b) in snaps[0].iter().zip(&snaps[1]) {
            let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            assert!(norm(&d) <= 1e-12 * norm(a));
        }
    }
}

#[test]
fn linear_scheme_needs_affine_coarse_operators() {
    let p = build_mp2(1, 16, 900.0).unwrap();
    let mut cfg = MgritConfig::new(4, 2, 64);
    cfg.scheme = CorrectionScheme::Linear;
    assert!(matches!(
        MgritSolver::new(&p, cfg),
        Err(Error::Unsupported(_))
    ));
}

#[test]
fn ideal_coarse_operator_converges_in_one_iteration() {
    let p = build_mp1(3, 1).unwrap();
    let s = 1.0 / p.lipschitz();
    let gd = Propagator::new(&p, PropagatorKind::GradientDescent, s).unwrap();
    let ops = vec![
        LevelOperator::Single(gd.clone()),
        LevelOperator::Power {
            base: gd,
            repeats: 4,
        },
    ];
    let h = IterationHierarchy::with_operators(&p, 4, 16, ops).unwrap();
    let solver = MgritSolver::from_hierarchy(h, MgritConfig::new(4, 2, 16)).unwrap();
    let sol = solver.solve().unwrap();
    assert_eq!(sol.report.halted, HaltReason::Converged);
    assert_eq!(sol.report.iterations, 1);
    assert!(sol.report.relative_residual() < 1e-13);
}

#[test]
fn residual_history_is_monotone_and_initial_point_is_kept() {
    let p = build_mp1(40, 9).unwrap();
    for (m, levels) in [(4, 2), (4, 4), (16, 2), (64, 2)] {
        let sol = mgrit_solve(&p, MgritConfig::new(m, levels, 8000)).unwrap();
        assert!(sol.report.converged());
        assert!(sol.report.residual_factors().iter().all(|&f| f < 1.0));
        assert!(sol.report.residual_norms.iter().all(|&r| r > 0.0));
        assert_eq!(sol.point(0), p.initial_condition().as_slice());
    }
}

#[test]
fn converged_final_point_matches_sequential() {
    let p = build_mp2(1, 32, 900.0).unwrap();
    let exact = sequential_points(&p, 1000);
    let sol = mgrit_solve(&p, MgritConfig::new(4, 3, 1000)).unwrap();
    assert!(sol.report.converged());
    assert_eq!(sol.report.padded_steps, 1008);
    let last = &exact[1000 * 32..];
    let d: Vec<f64> = sol
        .point(1000)
        .iter()
        .zip(last)
        .map(|(a, b)| a - b)
        .collect();
    assert!(norm(&d) <= 1e-6 * norm(last));
}

#[test]
fn reruns_are_bit_identical() {
    let p = build_mp2(1, 48, 900.0).unwrap().with_seed(3);
    let a = mgrit_solve(&p, MgritConfig::new(4, 3, 2000)).unwrap();
    let b = mgrit_solve(&p, MgritConfig::new(4, 3, 2000)).unwrap();
    assert_eq!(a.trajectory, b.trajectory);
    assert_eq!(a.report, b.report);
}

#[test]
fn max_iter_is_reported() {
    let p = build_mp1(20, 0).unwrap();
    let mut cfg = MgritConfig::new(4, 2, 400);
    cfg.max_iter = 2;
    let sol = mgrit_solve(&p, cfg).unwrap();
    assert_eq!(sol.report.halted, HaltReason::MaxIter);
    assert_eq!(sol.report.iterations, 2);
    assert_eq!(sol.report.residual_norms.len(), 3);
}

fn sequential_steps(p: &Problem) -> usize {
    run_sequential(
        p,
        &SequentialConfig::new(Method::baseline(p)),
        &p.initial_condition(),
    )
    .unwrap()
    .steps
}

#[test]
fn adaptive_single_window_when_horizon_suffices() {
    let p = build_mp1(40, 0).unwrap();
    let nt = sequential_steps(&p);
    let cfg = AdaptiveConfig::new(MgritConfig::new(4, 2, nt + 100));
    let rep = adaptive_horizon_solve(&p, &cfg, &Sequential).unwrap();
    assert!(rep.converged);
    assert_eq!(rep.windows.len(), 1);
}

#[test]
fn adaptive_short_guess_opens_more_windows() {
    let p = build_mp1(40, 0).unwrap();
    let nt = sequential_steps(&p);
    for growth in [
        GrowthPolicy::Geometric(2.0),
        GrowthPolicy::RateEstimate { safety: 1.1 },
    ] {
        let mut cfg = AdaptiveConfig::new(MgritConfig::new(4, 2, nt / 4));
        cfg.growth = growth;
        let rep = adaptive_horizon_solve(&p, &cfg, &Sequential).unwrap();
        assert!(rep.converged);
        assert!(rep.windows.len() >= 2);
        assert!(rep.total_steps >= nt);
        let gg = mgritopt_core::GeneralizedGradient::at_inverse_lipschitz(&p);
        assert!(gg.norm(&rep.final_state) <= rep.gradient_target * (1.0 + 1e-9));
    }
}

#[test]
fn adaptive_window_cap() {
    let p = build_mp1(40, 0).unwrap();
    let mut cfg = AdaptiveConfig::new(MgritConfig::new(4, 2, 16));
    cfg.growth = GrowthPolicy::Geometric(1.1);
    cfg.max_windows = 3;
    assert!(matches!(
        adaptive_horizon_solve(&p, &cfg, &Sequential),
        Err(Error::WindowLimit(3))
    ));
}
