//! One-step optimizer maps `Φ` used as time-steppers on the iteration axis.
//!
//! The constant forcing (`s·b` or `s·p`) is folded into each step, so the
//! all-at-once right-hand side is zero everywhere except the initial
//! condition.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::linalg::ShiftedFactorization;
use crate::problems::Problem;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropagatorKind {
    /// `u − s∇f(u)`
    GradientDescent,
    /// `(I + s∇f)⁻¹ u`
    ProximalPoint,
    /// `P_{sg}(u − s∇f(u))`
    ProximalGradient,
    /// `P_{sg}((I + s∇f)⁻¹ u)`
    AlternatingProximal,
}

impl PropagatorKind {
    /// Explicit kinds are only stable for `0 < s < 2/L`.
    pub fn is_explicit(self) -> bool {
        matches!(
            self,
            PropagatorKind::GradientDescent | PropagatorKind::ProximalGradient
        )
    }

    pub fn applies_penalty(self) -> bool {
        matches!(
            self,
            PropagatorKind::ProximalGradient | PropagatorKind::AlternatingProximal
        )
    }

    /// The implicit counterpart used on coarse levels.
    pub fn implicit_analogue(self) -> Self {
        match self {
            PropagatorKind::GradientDescent | PropagatorKind::ProximalPoint => {
                PropagatorKind::ProximalPoint
            }
            PropagatorKind::ProximalGradient | PropagatorKind::AlternatingProximal => {
                PropagatorKind::AlternatingProximal
            }
        }
    }
}

/// Entrywise proximal map of `τ‖(−·)₊‖₁`, in place.
pub fn prox_penalty_in_place(u: &mut [f64], tau: f64) {
    for x in u.iter_mut() {
        *x = prox_penalty_scalar(*x, tau);
    }
}

/// Entrywise proximal map of `τ‖(−·)₊‖₁`.
pub fn prox_penalty(u: &[f64], tau: f64) -> Vec<f64> {
    u.iter().map(|&x| prox_penalty_scalar(x, tau)).collect()
}

#[inline]
fn prox_penalty_scalar(x: f64, tau: f64) -> f64 {
    if x + tau < 0.0 {
        x + tau
    } else if x <= 0.0 {
        0.0
    } else {
        x
    }
}

/// A fixed-step optimizer map bound to a problem.
#[derive(Debug, Clone)]
pub struct Propagator<'p> {
    kind: PropagatorKind,
    step: f64,
    tau: f64,
    problem: &'p Problem,
    factor: Option<ShiftedFactorization>,
}

impl<'p> Propagator<'p> {
    /// Validates the step size and, for implicit kinds, factors `I + sA`.
    pub fn new(problem: &'p Problem, kind: PropagatorKind, step: f64) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::param("step", "must be positive and finite"));
        }
        if kind.is_explicit() {
            let limit = 2.0 / problem.lipschitz();
            if step >= limit {
                return Err(Error::UnstableStep { step, limit });
            }
        }
        let factor = if kind.is_explicit() {
            None
        } else {
            Some(problem.laplacian().factor_shifted(step)?)
        };
        let tau = match (kind.applies_penalty(), problem.penalty()) {
            (true, Some(lambda)) => step * lambda,
            _ => 0.0,
        };
        Ok(Self {
            kind,
            step,
            tau,
            problem,
            factor,
        })
    }

    pub fn kind(&self) -> PropagatorKind {
        self.kind
    }

    pub fn step_size(&self) -> f64 {
        self.step
    }

    /// Effective penalty threshold `s·λ` (0 when no penalty is applied).
    pub fn penalty_threshold(&self) -> f64 {
        self.tau
    }

    pub fn problem(&self) -> &'p Problem {
        self.problem
    }

    /// True when the map is affine, `Φ(u) = Mu + c`.
    pub fn is_affine(&self) -> bool {
        self.tau == 0.0
    }

    /// `out = Φ(u)`.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let c = self.problem.linear_term();
        let s = self.step;
        match &self.factor {
            None => {
                self.problem.laplacian().apply_into(u, out);
                for ((o, &x), &ci) in out.iter_mut().zip(u).zip(c) {
                    *o = x - s * (*o - ci);
                }
            }
            Some(f) => {
                for ((o, &x), &ci) in out.iter_mut().zip(u).zip(c) {
                    *o = x + s * ci;
                }
                f.solve_in_place(out);
            }
        }
        if self.tau > 0.0 {
            prox_penalty_in_place(out, self.tau);
        }
    }

    /// `out = M e`, the linear part of an affine map.
    ///
    /// # Panics
    /// If the map is not affine.
    pub fn apply_homogeneous(&self, e: &[f64], out: &mut [f64]) {
        assert!(
            self.is_affine(),
            "homogeneous part requested for a nonlinear map"
        );
        match &self.factor {
            None => {
                self.problem.laplacian().apply_into(e, out);
                for (o, &x) in out.iter_mut().zip(e) {
                    *o = x - self.step * *o;
                }
            }
            Some(f) => {
                out.copy_from_slice(e);
                f.solve_in_place(out);
            }
        }
    }

    /// Checked single step.
    pub fn step(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.problem.len() {
            return Err(Error::LengthMismatch {
                expected: self.problem.len(),
                actual: u.len(),
            });
        }
        let mut out = vec![0.0; u.len()];
        self.apply(u, &mut out);
        Ok(out)
    }

    /// `Φ^m(u)`: `m` successive applications.
    pub fn power_step(&self, m: usize, u: &[f64]) -> Result<Vec<f64>> {
        if m == 0 {
            return Err(Error::param("m", "repeat count must be at least 1"));
        }
        let mut cur = self.step(u)?;
        let mut next = vec![0.0; u.len()];
        for _ in 1..m {
            self.apply(&cur, &mut next);
            core::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }
}

/// `G_{sF}(u) = (u − P_{sg}(u − s∇f(u))) / s`, which reduces to `∇f(u)`
/// when the problem has no penalty.
#[derive(Debug, Clone)]
pub struct GeneralizedGradient<'p> {
    problem: &'p Problem,
    step: f64,
}

impl<'p> GeneralizedGradient<'p> {
    pub fn new(problem: &'p Problem, step: f64) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::param("step", "must be positive and finite"));
        }
        Ok(Self { problem, step })
    }

    /// Evaluator at the classical step `s = 1/L`.
    pub fn at_inverse_lipschitz(problem: &'p Problem) -> Self {
        Self {
            problem,
            step: 1.0 / problem.lipschitz(),
        }
    }

    pub fn step_size(&self) -> f64 {
        self.step
    }

    pub fn evaluate_into(&self, u: &[f64], out: &mut [f64]) {
        self.problem.smooth_gradient_into(u, out);
        let Some(lambda) = self.problem.penalty() else {
            return;
        };
        let s = self.step;
        for (o, &x) in out.iter_mut().zip(u) {
            let forward = x - s * *o;
            *o = (x - prox_penalty_scalar(forward, s * lambda)) / s;
        }
    }

    pub fn evaluate(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.evaluate_into(u, &mut out);
        out
    }

    /// `‖G_{sF}(u)‖₂`.
    pub fn norm(&self, u: &[f64]) -> f64 {
        crate::vector::norm(&self.evaluate(u))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{build_mp1, build_mp2};
    use crate::vector::dist;

    #[test]
    fn prox_branches() {
        assert_eq!(prox_penalty(&[-2.0, -0.5, 3.0], 1.0), vec![-1.0, 0.0, 3.0]);
        assert_eq!(prox_penalty(&[-1.0], 1.0), vec![0.0]);
        let feasible = [0.0, 0.1, 5.0];
        assert_eq!(prox_penalty(&feasible, 2.0), feasible.to_vec());
    }

    #[test]
    fn explicit_step_limits() {
        let p = build_mp1(8, 0).unwrap();
        let l = p.lipschitz();
        assert!(matches!(
            Propagator::new(&p, PropagatorKind::GradientDescent, 2.0 / l),
            Err(Error::UnstableStep { .. })
        ));
        assert!(Propagator::new(&p, PropagatorKind::ProximalPoint, 100.0 / l).is_ok());
        assert!(Propagator::new(&p, PropagatorKind::ProximalPoint, 0.0).is_err());
        assert!(Propagator::new(&p, PropagatorKind::GradientDescent, 1.9 / l).is_ok());
    }

    #[test]
    fn gd_from_zero_on_n3() {
        let p = build_mp1(3, 0).unwrap();
        let s = 1.0 / p.lipschitz();
        let mut q = p.clone();
        // b = (1, 1, 1)
        q.set_linear_term(vec![1.0; 3]);
        let gd = Propagator::new(&q, PropagatorKind::GradientDescent, s).unwrap();
        let out = gd.step(&[0.0; 3]).unwrap();
        for x in out {
            assert!((x - 1.0 / 54.627417).abs() < 1e-8);
        }
    }

    #[test]
    fn minimizer_is_fixed_point() {
        let p = build_mp1(20, 1).unwrap();
        let u = p.unconstrained_minimizer().unwrap();
        let s = 1.0 / p.lipschitz();
        for kind in [
            PropagatorKind::GradientDescent,
            PropagatorKind::ProximalPoint,
        ] {
            let prop = Propagator::new(&p, kind, s).unwrap();
            assert!(dist(&prop.step(&u).unwrap(), &u) < 1e-12);
        }
    }

    #[test]
    fn gd_twice_equals_square() {
        let p = build_mp1(10, 2).unwrap();
        let gd = Propagator::new(&p, PropagatorKind::GradientDescent, 1.0 / p.lipschitz()).unwrap();
        let u = p.initial_condition();
        let two = gd.step(&gd.step(&u).unwrap()).unwrap();
        assert_eq!(gd.power_step(2, &u).unwrap(), two);
        assert_eq!(gd.power_step(1, &u).unwrap(), gd.step(&u).unwrap());
        assert!(gd.power_step(0, &u).is_err());
    }

    #[test]
    fn coarse_penalty_scales_with_step() {
        let p = build_mp2(1, 16, 900.0).unwrap();
        let s = 1.0 / p.lipschitz();
        let m = 4.0_f64;
        let lvl3 = Propagator::new(&p, PropagatorKind::AlternatingProximal, m * m * s).unwrap();
        assert!((lvl3.penalty_threshold() - m * m * s * 900.0).abs() < 1e-12);
        let fine = Propagator::new(&p, PropagatorKind::ProximalGradient, s).unwrap();
        assert!((fine.penalty_threshold() - s * 900.0).abs() < 1e-15);
        assert!(!fine.is_affine());
    }

    #[test]
    fn generalized_gradient_is_plain_gradient_without_penalty() {
        let p = build_mp1(12, 4).unwrap();
        let u = p.initial_condition();
        let gg = GeneralizedGradient::at_inverse_lipschitz(&p);
        let mut grad = vec![0.0; 12];
        p.smooth_gradient_into(&u, &mut grad);
        assert_eq!(gg.evaluate(&u), grad);
    }

    #[test]
    fn generalized_gradient_rearrangement() {
        let p = build_mp2(1, 32, 900.0).unwrap();
        let s = 1.0 / p.lipschitz();
        let pg = Propagator::new(&p, PropagatorKind::ProximalGradient, s).unwrap();
        let gg = GeneralizedGradient::new(&p, s).unwrap();
        let u: Vec<f64> = p.initial_condition().iter().map(|x| x - 0.5).collect();
        let g = gg.evaluate(&u);
        let back: Vec<f64> = u.iter().zip(&g).map(|(x, gi)| x - s * gi).collect();
        let step = pg.step(&u).unwrap();
        assert!(dist(&back, &step) < 1e-12 * crate::vector::norm(&u).max(1.0));
    }
}
