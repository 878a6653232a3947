//! The two model problems: a random quadratic (MP1) and the linearized
//! elastic obstacle problem in exact-penalty form (MP2, 1D and 2D).

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{Laplacian, ShiftedFactorization};
use crate::vector::dot;
use crate::{Error, Result};

/// Default penalty weight for the obstacle problems.
pub const DEFAULT_PENALTY: f64 = 900.0;

/// Length of the obstacle-problem domain `[0, 3π]` in each direction.
pub const OBSTACLE_DOMAIN: f64 = 3.0 * PI;

const DATA_STREAM: u64 = 0;
const INIT_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProblemKind {
    #[serde(rename = "mp1")]
    Mp1,
    #[serde(rename = "mp2-1d")]
    Mp2OneD,
    #[serde(rename = "mp2-2d")]
    Mp2TwoD,
}

impl ProblemKind {
    pub fn dim(self) -> usize {
        match self {
            ProblemKind::Mp1 | ProblemKind::Mp2OneD => 1,
            ProblemKind::Mp2TwoD => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Mp1 => "mp1",
            ProblemKind::Mp2OneD => "mp2-1d",
            ProblemKind::Mp2TwoD => "mp2-2d",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "mp1" => Some(ProblemKind::Mp1),
            "mp2-1d" => Some(ProblemKind::Mp2OneD),
            "mp2-2d" => Some(ProblemKind::Mp2TwoD),
            _ => None,
        }
    }

    /// Whether the objective carries the nonsmooth penalty term.
    pub fn has_penalty(self) -> bool {
        !matches!(self, ProblemKind::Mp1)
    }
}

/// Everything needed to rebuild a [`Problem`] bit-for-bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemDescriptor {
    pub kind: ProblemKind,
    pub n: usize,
    pub d: usize,
    /// Penalty weight; ignored for MP1.
    pub lambda: f64,
    pub seed: u64,
}

impl ProblemDescriptor {
    pub fn new(kind: ProblemKind, n: usize, seed: u64) -> Self {
        Self {
            kind,
            n,
            d: kind.dim(),
            lambda: DEFAULT_PENALTY,
            seed,
        }
    }

    pub fn build(&self) -> Result<Problem> {
        if self.d != self.kind.dim() {
            return Err(Error::param("d", "does not match the problem kind"));
        }
        match self.kind {
            ProblemKind::Mp1 => build_mp1(self.n, self.seed),
            _ => Ok(build_mp2(self.d, self.n, self.lambda)?.with_seed(self.seed)),
        }
    }
}

/// A minimization problem `F(u) = ½⟨Au, u⟩ − ⟨c, u⟩ + g(u)` with
/// `g = λ‖(−u)₊‖₁` for MP2 and `g = 0` for MP1.
#[derive(Debug, Clone)]
pub struct Problem {
    descriptor: ProblemDescriptor,
    laplacian: Laplacian,
    linear: Vec<f64>,
    obstacle: Option<Vec<f64>>,
    lipschitz: f64,
}

/// MP1 on a unit-length mesh with `b` drawn uniformly from `[0, 1)`.
pub fn build_mp1(n: usize, seed: u64) -> Result<Problem> {
    let laplacian = Laplacian::new(1, n, 1.0)?;
    let mut rng = stream(seed, DATA_STREAM);
    let b = (0..n).map(|_| rng.random::<f64>()).collect();
    Ok(Problem {
        descriptor: ProblemDescriptor {
            kind: ProblemKind::Mp1,
            n,
            d: 1,
            lambda: 0.0,
            seed,
        },
        lipschitz: laplacian.spectral_norm(),
        laplacian,
        linear: b,
        obstacle: None,
    })
}

/// MP2 on `[0, 3π]^d` with the obstacle sampled at the interior mesh
/// points and `p = −Aφ`.
pub fn build_mp2(d: usize, n: usize, lambda: f64) -> Result<Problem> {
    if !(lambda > 0.0) {
        return Err(Error::param("lambda", "penalty must be positive"));
    }
    let laplacian = Laplacian::new(d, n, OBSTACLE_DOMAIN)?;
    let phi = sample_obstacle(&laplacian);
    let mut p = laplacian.apply(&phi)?;
    p.iter_mut().for_each(|x| *x = -*x);
    let kind = if d == 1 {
        ProblemKind::Mp2OneD
    } else {
        ProblemKind::Mp2TwoD
    };
    Ok(Problem {
        descriptor: ProblemDescriptor {
            kind,
            n,
            d,
            lambda,
            seed: 0,
        },
        lipschitz: laplacian.spectral_norm(),
        laplacian,
        linear: p,
        obstacle: Some(phi),
    })
}

/// Mesh coordinate of interior index `i` (0-based) on a mesh of spacing `h`.
pub fn mesh_coordinate(h: f64, i: usize) -> f64 {
    (i as f64 + 1.0) * h
}

fn sample_obstacle(laplacian: &Laplacian) -> Vec<f64> {
    let n = laplacian.n();
    let h = laplacian.h();
    if laplacian.dim() == 1 {
        (0..n).map(|i| obstacle_1d(mesh_coordinate(h, i))).collect()
    } else {
        let mut phi = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                phi[i * n + j] = obstacle_2d(mesh_coordinate(h, i), mesh_coordinate(h, j));
            }
        }
        phi
    }
}

/// `φ(x) = max{0, sin x}`.
pub fn obstacle_1d(x: f64) -> f64 {
    libm::sin(x).max(0.0)
}

/// `φ(x, y) = max{0, sin x} · max{0, sin y}`.
pub fn obstacle_2d(x: f64, y: f64) -> f64 {
    obstacle_1d(x) * obstacle_1d(y)
}

/// Closed-form membrane position for the 1D obstacle on `[0, 3π]`.
pub fn exact_solution_mp2_1d(x: f64) -> f64 {
    if (PI / 2.0..=2.5 * PI).contains(&x) {
        1.0
    } else {
        libm::sin(x)
    }
}

/// Reverses the change of variables: `û = u + φ`.
pub fn unshift(u: &[f64], phi: &[f64]) -> Result<Vec<f64>> {
    if u.len() != phi.len() {
        return Err(Error::LengthMismatch {
            expected: phi.len(),
            actual: u.len(),
        });
    }
    Ok(u.iter().zip(phi).map(|(a, b)| a + b).collect())
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl Problem {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.descriptor.seed = seed;
        self
    }

    #[cfg(test)]
    pub(crate) fn set_linear_term(&mut self, c: Vec<f64>) {
        self.linear = c;
    }

    pub fn descriptor(&self) -> &ProblemDescriptor {
        &self.descriptor
    }

    pub fn kind(&self) -> ProblemKind {
        self.descriptor.kind
    }

    pub fn seed(&self) -> u64 {
        self.descriptor.seed
    }

    pub fn laplacian(&self) -> &Laplacian {
        &self.laplacian
    }

    /// `b` for MP1, `p` for MP2.
    pub fn linear_term(&self) -> &[f64] {
        &self.linear
    }

    /// `λ` when the penalty term is present.
    pub fn penalty(&self) -> Option<f64> {
        self.kind().has_penalty().then_some(self.descriptor.lambda)
    }

    pub fn obstacle(&self) -> Option<&[f64]> {
        self.obstacle.as_deref()
    }

    /// Lipschitz constant of `∇f`, `‖A‖₂`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Number of unknowns.
    pub fn len(&self) -> usize {
        self.laplacian.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `out = ∇f(u) = Au − c`.
    pub fn smooth_gradient_into(&self, u: &[f64], out: &mut [f64]) {
        self.laplacian.apply_into(u, out);
        for (o, c) in out.iter_mut().zip(&self.linear) {
            *o -= c;
        }
    }

    /// `F(u)`, including the penalty for MP2.
    pub fn objective(&self, u: &[f64]) -> f64 {
        let mut au = vec![0.0; u.len()];
        self.laplacian.apply_into(u, &mut au);
        let smooth = 0.5 * dot(&au, u) - dot(&self.linear, u);
        let g = self.penalty().map_or(0.0, |lambda| {
            lambda * u.iter().map(|x| (-x).max(0.0)).sum::<f64>()
        });
        smooth + g
    }

    /// Solution of `Au = c`; the minimizer for MP1.
    pub fn unconstrained_minimizer(&self) -> Result<Vec<f64>> {
        ShiftedFactorization::unshifted(self.laplacian)?.solve(&self.linear)
    }

    /// Initial iterate `u_0`, uniform in `[0, 1)` and derived from the seed.
    pub fn initial_condition(&self) -> Vec<f64> {
        let mut rng = self.initial_stream();
        (0..self.len()).map(|_| rng.random::<f64>()).collect()
    }

    /// Generator for the initial trajectory. Its first `len()` draws are the
    /// initial condition.
    pub fn initial_stream(&self) -> ChaCha8Rng {
        stream(self.seed(), INIT_STREAM)
    }

    /// Mesh coordinates of each unknown: `x` in 1D, `(x, y)` pairs
    /// flattened in 2D.
    pub fn coordinates(&self) -> Vec<f64> {
        let n = self.laplacian.n();
        let h = self.laplacian.h();
        if self.laplacian.dim() == 1 {
            (0..n).map(|i| mesh_coordinate(h, i)).collect()
        } else {
            let mut xy = Vec::with_capacity(2 * n * n);
            for i in 0..n {
                for j in 0..n {
                    xy.push(mesh_coordinate(h, i));
                    xy.push(mesh_coordinate(h, j));
                }
            }
            xy
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mp1_is_deterministic_and_in_range() {
        let a = build_mp1(40, 7).unwrap();
        let b = build_mp1(40, 7).unwrap();
        assert_eq!(a.linear_term(), b.linear_term());
        assert!(a.linear_term().iter().all(|x| (0.0..=1.0).contains(x)));
        let c = build_mp1(40, 8).unwrap();
        assert_ne!(a.linear_term(), c.linear_term());
        assert!(a.penalty().is_none());
        assert!(build_mp1(1, 0).is_err());
    }

    #[test]
    fn mp1_minimizer_has_zero_gradient() {
        let p = build_mp1(40, 3).unwrap();
        let u = p.unconstrained_minimizer().unwrap();
        let mut g = vec![0.0; 40];
        p.smooth_gradient_into(&u, &mut g);
        assert!(crate::vector::norm(&g) < 1e-10);
    }

    #[test]
    fn obstacle_values() {
        assert!((obstacle_1d(PI / 2.0) - 1.0).abs() < 1e-15);
        assert_eq!(obstacle_1d(2.0 * PI), 0.0);
        assert!((obstacle_2d(PI / 2.0, PI / 2.0) - 1.0).abs() < 1e-15);
        assert_eq!(obstacle_1d(1.5 * PI), 0.0);
    }

    #[test]
    fn exact_solution_values() {
        assert_eq!(exact_solution_mp2_1d(0.0), 0.0);
        assert_eq!(exact_solution_mp2_1d(PI), 1.0);
        let x = 11.0 * PI / 4.0;
        let v = exact_solution_mp2_1d(x);
        assert!((v - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn unshift_basics() {
        let phi = [0.5, 1.0, 0.0];
        assert_eq!(unshift(&[0.0; 3], &phi).unwrap(), phi.to_vec());
        let u = [1.0, -2.0, 3.0];
        let shifted: Vec<f64> = u.iter().zip(&phi).map(|(a, b)| a - b).collect();
        assert_eq!(unshift(&shifted, &phi).unwrap(), u.to_vec());
        assert!(unshift(&[0.0; 2], &phi).is_err());
    }

    #[test]
    fn mp2_assembly() {
        let p = build_mp2(1, 16, DEFAULT_PENALTY).unwrap();
        assert_eq!(p.penalty(), Some(900.0));
        assert!((p.laplacian().h() - 3.0 * PI / 17.0).abs() < 1e-15);
        let p2 = build_mp2(2, 8, 900.0).unwrap();
        assert_eq!(p2.len(), 64);
        assert!(build_mp2(1, 16, 0.0).is_err());
        assert!(build_mp2(3, 16, 1.0).is_err());
    }

    #[test]
    fn descriptor_roundtrip_builds_same_problem() {
        let d = ProblemDescriptor::new(ProblemKind::Mp2OneD, 32, 11);
        let p = d.build().unwrap();
        assert_eq!(p.descriptor(), &d);
        let q = p.descriptor().build().unwrap();
        assert_eq!(p.linear_term(), q.linear_term());
        assert_eq!(p.initial_condition(), q.initial_condition());
    }
}
