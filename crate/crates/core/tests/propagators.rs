use mgritopt_core::problems::{build_mp1, build_mp2};
use mgritopt_core::propagators::{prox_penalty, prox_penalty_in_place};
use mgritopt_core::{GeneralizedGradient, Propagator, PropagatorKind};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[test]
fn power_step_matches_dense_matrix_power() {
    let p = build_mp1(12, 3).unwrap();
    let s = 1.0 / p.lipschitz();
    let gd = Propagator::new(&p, PropagatorKind::GradientDescent, s).unwrap();
    let a = DMatrix::from_row_slice(12, 12, &p.laplacian().to_dense());
    let b = DVector::from_column_slice(p.linear_term());
    let m = DMatrix::identity(12, 12) - &a * s;
    let u0 = DVector::from_vec(p.initial_condition());
    // Φ^4(u) = M^4 u + (M^3 + M^2 + M + I) s b
    let mut forcing = DMatrix::identity(12, 12);
    let mut acc = DMatrix::identity(12, 12);
    for _ in 0..3 {
        acc = &acc * &m;
        forcing += &acc;
    }
    let m4 = &acc * &m;
    let want = m4 * &u0 + forcing * b * s;
    let got = gd.power_step(4, u0.as_slice()).unwrap();
    for (x, y) in got.iter().zip(want.iter()) {
        assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
    }
}

#[test]
fn proximal_point_matches_dense_solve() {
    let p = build_mp1(10, 1).unwrap();
    let s = 7.0 / p.lipschitz();
    let pp = Propagator::new(&p, PropagatorKind::ProximalPoint, s).unwrap();
    let a = DMatrix::from_row_slice(10, 10, &p.laplacian().to_dense());
    let u0 = p.initial_condition();
    let rhs = DVector::from_vec(u0.clone()) + DVector::from_column_slice(p.linear_term()) * s;
    let want = (DMatrix::identity(10, 10) + a * s)
        .lu()
        .solve(&rhs)
        .unwrap();
    let got = pp.step(&u0).unwrap();
    for (x, y) in got.iter().zip(want.iter()) {
        assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
    }
}

#[test]
fn prox_gradient_matches_straight_line_loop() {
    let p = build_mp2(1, 256, 900.0).unwrap();
    let s = 1.0 / p.lipschitz();
    let pg = Propagator::new(&p, PropagatorKind::ProximalGradient, s).unwrap();
    let h = p.laplacian().h();
    let c = p.linear_term().to_vec();
    let tau = s * 900.0;
    let mut u = p.initial_condition();
    let mut v = u.clone();
    for _ in 0..10 {
        let n = u.len();
        let mut next = vec![0.0; n];
        for i in 0..n {
            let left = if i > 0 { u[i - 1] } else { 0.0 };
            let right = if i + 1 < n { u[i + 1] } else { 0.0 };
            let au = (2.0 * u[i] - left - right) / (h * h);
            let y = u[i] - s * (au - c[i]);
            next[i] = if y + tau < 0.0 {
                y + tau
            } else if y <= 0.0 {
                0.0
            } else {
                y
            };
        }
        u = next;
        v = pg.step(&v).unwrap();
    }
    for (x, y) in u.iter().zip(&v) {
        assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
    }
}

#[test]
fn alternating_proximal_is_prox_after_prox_point() {
    let p = build_mp2(1, 32, 900.0).unwrap();
    let s = 16.0 / p.lipschitz();
    let alt = Propagator::new(&p, PropagatorKind::AlternatingProximal, s).unwrap();
    let pp = Propagator::new(&p, PropagatorKind::ProximalPoint, s).unwrap();
    let u = p.initial_condition();
    assert_eq!(
        alt.step(&u).unwrap(),
        prox_penalty(&pp.step(&u).unwrap(), s * 900.0)
    );
}

#[test]
fn generalized_gradient_vanishes_only_at_fixed_points() {
    let p = build_mp1(20, 4).unwrap();
    let gg = GeneralizedGradient::at_inverse_lipschitz(&p);
    let u = p.unconstrained_minimizer().unwrap();
    assert!(gg.norm(&u) < 1e-9);
    assert!(gg.norm(&p.initial_condition()) > 1.0);
}

fn vec_strategy(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, len)
}

proptest! {
    #[test]
    fn prox_branches(x in -10.0f64..10.0, tau in 0.0f64..5.0) {
        let y = prox_penalty(&[x], tau)[0];
        if x + tau < 0.0 {
            prop_assert_eq!(y, x + tau);
        } else if x <= 0.0 {
            prop_assert_eq!(y, 0.0);
        } else {
            prop_assert_eq!(y, x);
        }
    }

    #[test]
    fn prox_is_idempotent_on_nonnegative_vectors(u in vec_strategy(16), tau in 0.0f64..5.0) {
        let feasible: Vec<f64> = u.iter().map(|x| x.abs()).collect();
        let once = prox_penalty(&feasible, tau);
        prop_assert_eq!(&once, &feasible);
        prop_assert_eq!(prox_penalty(&once, tau), once.clone());
        prop_assert_eq!(prox_penalty(&u, 0.0), u);
    }

    #[test]
    fn prox_is_firmly_nonexpansive(x in vec_strategy(16), y in vec_strategy(16), tau in 0.0f64..5.0) {
        let px = prox_penalty(&x, tau);
        let py = prox_penalty(&y, tau);
        let dp = diff(&px, &py);
        let dx = diff(&x, &y);
        let inner: f64 = dp.iter().zip(&dx).map(|(a, b)| a * b).sum();
        prop_assert!(norm(&dp) <= norm(&dx) + 1e-12);
        prop_assert!(norm(&dp).powi(2) <= inner + 1e-12);
        let mut inplace = x.clone();
        prox_penalty_in_place(&mut inplace, tau);
        prop_assert_eq!(inplace, px);
    }

    #[test]
    fn generalized_gradient_is_sqrt2_over_s_lipschitz(
        x in vec_strategy(32),
        y in vec_strategy(32),
        scale in 0.01f64..1.0,
    ) {
        let p = build_mp2(1, 32, 900.0).unwrap();
        let s = scale / p.lipschitz();
        let gg = GeneralizedGradient::new(&p, s).unwrap();
        let lhs = norm(&diff(&gg.evaluate(&x), &gg.evaluate(&y)));
        let rhs = 2f64.sqrt() / s * norm(&diff(&x, &y));
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-9);
    }

    #[test]
    fn explicit_step_is_nonexpansive_below_2_over_l(
        x in vec_strategy(24),
        y in vec_strategy(24),
        scale in 0.05f64..1.95,
    ) {
        let p = build_mp1(24, 0).unwrap();
        let gd = Propagator::new(&p, PropagatorKind::GradientDescent, scale / p.lipschitz()).unwrap();
        let d = norm(&diff(&gd.step(&x).unwrap(), &gd.step(&y).unwrap()));
        prop_assert!(d <= norm(&diff(&x, &y)) * (1.0 + 1e-12));
    }
}
