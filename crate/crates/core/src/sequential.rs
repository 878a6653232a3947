//! Serial optimizer runs: the reference trajectory MGRIT reproduces.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::problems::Problem;
use crate::propagators::{GeneralizedGradient, Propagator, PropagatorKind};
use crate::vector::norm;
use crate::{Error, Result};

/// Default bound on stored values before the trajectory switches to
/// strided checkpoints.
pub const FULL_STORAGE_LIMIT: usize = 1 << 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Gd,
    ProxGrad,
    ProxPoint,
    AltProx,
}

impl Method {
    pub fn kind(self) -> PropagatorKind {
        match self {
            Method::Gd => PropagatorKind::GradientDescent,
            Method::ProxGrad => PropagatorKind::ProximalGradient,
            Method::ProxPoint => PropagatorKind::ProximalPoint,
            Method::AltProx => PropagatorKind::AlternatingProximal,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Gd => "gd",
            Method::ProxGrad => "prox-grad",
            Method::ProxPoint => "prox-point",
            Method::AltProx => "alt-prox",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            Method::Gd,
            Method::ProxGrad,
            Method::ProxPoint,
            Method::AltProx,
        ]
        .into_iter()
        .find(|m| m.name() == name)
    }

    /// The baseline method for a problem: gradient descent without a
    /// penalty, proximal gradient with one.
    pub fn baseline(problem: &Problem) -> Self {
        if problem.penalty().is_some() {
            Method::ProxGrad
        } else {
            Method::Gd
        }
    }
}

/// How many iterates to keep in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Storage {
    /// Keep every iterate while at most `limit` values are stored; beyond
    /// that, repeatedly drop every other checkpoint.
    Auto { limit: usize },
    /// Keep every `stride`-th iterate.
    Strided(usize),
}

impl Default for Storage {
    fn default() -> Self {
        Storage::Auto {
            limit: FULL_STORAGE_LIMIT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequentialConfig {
    pub method: Method,
    /// Step as a multiple of `1/L`.
    pub step_scale: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub storage: Storage,
}

impl SequentialConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            step_scale: 1.0,
            tol: 1e-8,
            max_iter: 10_000_000,
            storage: Storage::default(),
        }
    }
}

/// Iterates `u_0 … u_{K}`, stored at indices that are multiples of `stride`
/// plus the final iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    n: usize,
    points: usize,
    stride: usize,
    checkpoints: Vec<f64>,
    last: Vec<f64>,
}

impl Trajectory {
    fn start(u0: &[f64], stride: usize) -> Self {
        Self {
            n: u0.len(),
            points: 1,
            stride,
            checkpoints: u0.to_vec(),
            last: u0.to_vec(),
        }
    }

    /// Rebuilds a trajectory from stored checkpoints (indices `0, stride,
    /// 2·stride, …`) and the final iterate.
    pub fn from_parts(
        n: usize,
        points: usize,
        stride: usize,
        checkpoints: Vec<f64>,
        last: Vec<f64>,
    ) -> Result<Self> {
        if n == 0 || points == 0 || stride == 0 {
            return Err(Error::param("trajectory", "sizes must be positive"));
        }
        let expected = (points - 1) / stride + 1;
        if checkpoints.len() != expected * n {
            return Err(Error::LengthMismatch {
                expected: expected * n,
                actual: checkpoints.len(),
            });
        }
        if last.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: last.len(),
            });
        }
        Ok(Self {
            n,
            points,
            stride,
            checkpoints,
            last,
        })
    }

    fn push(&mut self, u: &[f64], storage: Storage) {
        if self.points.is_multiple_of(self.stride) {
            self.checkpoints.extend_from_slice(u);
        }
        self.last.copy_from_slice(u);
        self.points += 1;
        if let Storage::Auto { limit } = storage {
            if self.checkpoints.len() > limit && self.checkpoints.len() > self.n {
                self.thin();
            }
        }
    }

    fn thin(&mut self) {
        let n = self.n;
        let kept = self.checkpoints.len() / n;
        let mut w = 0;
        for j in (0..kept).step_by(2) {
            self.checkpoints.copy_within(j * n..(j + 1) * n, w * n);
            w += 1;
        }
        self.checkpoints.truncate(w * n);
        self.stride *= 2;
    }

    /// Number of iterates, `K + 1`.
    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points == 0
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn is_full(&self) -> bool {
        self.stride == 1
    }

    /// Stored checkpoint values, `stride` iterates apart.
    pub fn checkpoints(&self) -> &[f64] {
        &self.checkpoints
    }

    pub fn final_point(&self) -> &[f64] {
        &self.last
    }

    /// Iterate `i` if it is stored.
    pub fn stored(&self, i: usize) -> Option<&[f64]> {
        if i + 1 == self.points {
            return Some(&self.last);
        }
        (i < self.points && i.is_multiple_of(self.stride)).then(|| {
            let j = i / self.stride;
            &self.checkpoints[j * self.n..(j + 1) * self.n]
        })
    }

    /// Iterate `i`, recomputed from the nearest earlier checkpoint with
    /// `propagator` when it is not stored.
    pub fn point(&self, propagator: &Propagator<'_>, i: usize) -> Result<Vec<f64>> {
        if i >= self.points {
            return Err(Error::param("index", "beyond the trajectory"));
        }
        if let Some(u) = self.stored(i) {
            return Ok(u.to_vec());
        }
        let base = i / self.stride;
        let mut cur = self.checkpoints[base * self.n..(base + 1) * self.n].to_vec();
        let mut next = vec![0.0; self.n];
        for _ in base * self.stride..i {
            propagator.apply(&cur, &mut next);
            core::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Visits every iterate in order, recomputing unstored ones.
    pub fn for_each_point(&self, propagator: &Propagator<'_>, mut f: impl FnMut(usize, &[f64])) {
        let n = self.n;
        let mut cur = self.checkpoints[..n].to_vec();
        let mut next = vec![0.0; n];
        for i in 0..self.points {
            if i > 0 {
                match self.stored(i) {
                    Some(u) => cur.copy_from_slice(u),
                    None => {
                        propagator.apply(&cur, &mut next);
                        core::mem::swap(&mut cur, &mut next);
                    }
                }
            }
            f(i, &cur);
        }
    }
}

#[derive(Debug, Clone)]
pub struct SequentialRun {
    pub method: Method,
    pub step: f64,
    pub trajectory: Trajectory,
    /// Iterations performed: the smallest `K` meeting the tolerance when
    /// `converged`, else `max_iter`.
    pub steps: usize,
    /// `‖G_{sF}(u_k)‖` for `k = 0 … steps`.
    pub gradient_norms: Vec<f64>,
    pub converged: bool,
}

impl SequentialRun {
    /// Rebuilds the step operator used for this run.
    pub fn propagator<'p>(&self, problem: &'p Problem) -> Result<Propagator<'p>> {
        Propagator::new(problem, self.method.kind(), self.step)
    }
}

/// Iterates `u_{k+1} = Φ(u_k)` until `‖G_{sF}(u_k)‖ ≤ tol·‖G_{sF}(u_0)‖`.
pub fn run_sequential(
    problem: &Problem,
    config: &SequentialConfig,
    u0: &[f64],
) -> Result<SequentialRun> {
    if u0.len() != problem.len() {
        return Err(Error::LengthMismatch {
            expected: problem.len(),
            actual: u0.len(),
        });
    }
    if !(config.tol >= 0.0) {
        return Err(Error::param("tol", "must be non-negative"));
    }
    let stride = match config.storage {
        Storage::Strided(0) => return Err(Error::param("storage", "stride must be positive")),
        Storage::Strided(s) => s,
        Storage::Auto { .. } => 1,
    };
    let step = config.step_scale / problem.lipschitz();
    let propagator = Propagator::new(problem, config.method.kind(), step)?;
    let gradient = GeneralizedGradient::new(problem, step)?;
    let n = problem.len();
    let mut trajectory = Trajectory::start(u0, stride);
    let mut grad = vec![0.0; n];
    gradient.evaluate_into(u0, &mut grad);
    let g0 = norm(&grad);
    let target = config.tol * g0;
    let floor = roundoff_floor(problem, u0);
    let mut gradient_norms = vec![g0];
    let mut cur = u0.to_vec();
    let mut next = vec![0.0; n];
    let mut converged = g0 <= target.max(floor);
    let mut steps = 0;
    while !converged && steps < config.max_iter {
        propagator.apply(&cur, &mut next);
        core::mem::swap(&mut cur, &mut next);
        steps += 1;
        trajectory.push(&cur, config.storage);
        gradient.evaluate_into(&cur, &mut grad);
        let g = norm(&grad);
        gradient_norms.push(g);
        converged = g <= target.max(floor);
    }
    Ok(SequentialRun {
        method: config.method,
        step,
        trajectory,
        steps,
        gradient_norms,
        converged,
    })
}

/// Size of the rounding error in evaluating the gradient near `u`; a gradient
/// this small cannot be reduced further.
fn roundoff_floor(problem: &Problem, u: &[f64]) -> f64 {
    64.0 * f64::EPSILON * (problem.lipschitz() * norm(u) + norm(problem.linear_term()))
}
