//! Multilevel MGRIT over the iteration axis.
//!
//! Level 0 holds the fine trajectory `u_0 … u_{N_t}` stepped by the
//! explicit optimizer map; level `ℓ ≥ 1` holds every `m^ℓ`-th point and is
//! stepped by the implicit analogue with step `m^ℓ s`. Each iteration is a
//! V-cycle of FCF-relaxation, C-point residual, injection, a recursive coarse
//! solve (exact forward substitution on the coarsest level), correction and
//! F-relaxation.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::exec::{Executor, Sequential};
use crate::problems::Problem;
use crate::propagators::{GeneralizedGradient, Propagator, PropagatorKind};
use crate::vector::{norm, norm_sq};
use crate::{Error, Result};

/// How the coarse level corrects the fine C-points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionScheme {
    /// Full approximation scheme: the coarse level solves for the corrected
    /// C-point values themselves.
    #[default]
    Fas,
    /// Residual correction with the linear part of each coarse operator.
    /// Only valid when every coarse operator is affine.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MgritConfig {
    /// Coarsening factor `m`.
    pub coarsening: usize,
    /// Number of levels `ℓ̂`, including the fine level.
    pub levels: usize,
    /// Requested fine iteration count `N_t`; padded up to a multiple of
    /// `m^(ℓ̂−1)`.
    pub fine_steps: usize,
    /// Relative C-point residual reduction that counts as converged.
    pub tol: f64,
    pub max_iter: usize,
    pub scheme: CorrectionScheme,
    /// Fine step as a multiple of `1/L`.
    pub step_scale: f64,
    /// Consecutive non-decreasing residuals after which a run is declared
    /// stalled.
    pub stall_window: usize,
}

impl MgritConfig {
    pub fn new(coarsening: usize, levels: usize, fine_steps: usize) -> Self {
        Self {
            coarsening,
            levels,
            fine_steps,
            tol: 1e-8,
            max_iter: 100,
            scheme: CorrectionScheme::Fas,
            step_scale: 1.0,
            stall_window: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.coarsening < 2 {
            return Err(Error::param("coarsening", "must be at least 2"));
        }
        if self.levels < 2 {
            return Err(Error::param("levels", "must be at least 2"));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::param("tol", "must lie in (0, 1)"));
        }
        if !(self.step_scale > 0.0) || !self.step_scale.is_finite() {
            return Err(Error::param("step_scale", "must be positive"));
        }
        if self.stall_window == 0 {
            return Err(Error::param("stall_window", "must be at least 1"));
        }
        let span = coarsest_span(self.coarsening, self.levels)?;
        if self.fine_steps < span {
            return Err(Error::param(
                "fine_steps",
                alloc::format!("need at least m^(levels-1) = {span} fine steps"),
            ));
        }
        Ok(())
    }
}

/// `m^(levels−1)`, the fine-step span of one coarsest-level interval.
pub fn coarsest_span(m: usize, levels: usize) -> Result<usize> {
    let exp = u32::try_from(levels.saturating_sub(1))
        .map_err(|_| Error::param("levels", "too many levels"))?;
    m.checked_pow(exp)
        .ok_or_else(|| Error::param("levels", "m^(levels-1) overflows"))
}

/// Smallest multiple of `m^(levels−1)` that is at least `n_t`.
pub fn padded_steps(n_t: usize, m: usize, levels: usize) -> Result<usize> {
    let span = coarsest_span(m, levels)?;
    Ok(n_t.div_ceil(span) * span)
}

/// Step operator of one level.
#[derive(Debug, Clone)]
pub enum LevelOperator<'p> {
    Single(Propagator<'p>),
    /// `repeats` applications of `base`; with the fine map this is the ideal
    /// coarse operator `Φ^m`.
    Power {
        base: Propagator<'p>,
        repeats: usize,
    },
}

impl<'p> LevelOperator<'p> {
    fn base(&self) -> &Propagator<'p> {
        match self {
            LevelOperator::Single(p) | LevelOperator::Power { base: p, .. } => p,
        }
    }

    /// Total pseudo-time advanced by one application.
    pub fn step_size(&self) -> f64 {
        match self {
            LevelOperator::Single(p) => p.step_size(),
            LevelOperator::Power { base, repeats } => base.step_size() * *repeats as f64,
        }
    }

    pub fn is_affine(&self) -> bool {
        self.base().is_affine()
    }

    pub fn kind(&self) -> PropagatorKind {
        self.base().kind()
    }

    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        self.apply_mode(u, out, false);
    }

    fn apply_mode(&self, u: &[f64], out: &mut [f64], homogeneous: bool) {
        let single = |p: &Propagator<'p>, u: &[f64], out: &mut [f64]| {
            if homogeneous {
                p.apply_homogeneous(u, out)
            } else {
                p.apply(u, out)
            }
        };
        match self {
            LevelOperator::Single(p) => single(p, u, out),
            LevelOperator::Power { base, repeats } => {
                single(base, u, out);
                let mut tmp = vec![0.0; u.len()];
                for _ in 1..*repeats {
                    tmp.copy_from_slice(out);
                    single(base, &tmp, out);
                }
            }
        }
    }
}

/// Grids and step operators of every level.
#[derive(Debug, Clone)]
pub struct IterationHierarchy<'p> {
    problem: &'p Problem,
    coarsening: usize,
    requested: usize,
    padded: usize,
    fine_step: f64,
    operators: Vec<LevelOperator<'p>>,
}

impl<'p> IterationHierarchy<'p> {
    /// Fine level: gradient descent (MP1) or proximal gradient (MP2) with
    /// step `fine_step`; level `ℓ`: the implicit analogue with step
    /// `m^ℓ · fine_step`.
    pub fn new(
        problem: &'p Problem,
        coarsening: usize,
        levels: usize,
        fine_steps: usize,
        fine_step: f64,
    ) -> Result<Self> {
        let fine_kind = if problem.penalty().is_some() {
            PropagatorKind::ProximalGradient
        } else {
            PropagatorKind::GradientDescent
        };
        let mut operators = Vec::with_capacity(levels);
        operators.push(LevelOperator::Single(Propagator::new(
            problem, fine_kind, fine_step,
        )?));
        let mut factor = 1.0;
        for _ in 1..levels {
            factor *= coarsening as f64;
            operators.push(LevelOperator::Single(Propagator::new(
                problem,
                fine_kind.implicit_analogue(),
                factor * fine_step,
            )?));
        }
        Self::with_operators(problem, coarsening, fine_steps, operators)
    }

    /// Hierarchy with caller-supplied operators, one per level. The fine
    /// step is taken from the first operator.
    pub fn with_operators(
        problem: &'p Problem,
        coarsening: usize,
        fine_steps: usize,
        operators: Vec<LevelOperator<'p>>,
    ) -> Result<Self> {
        let levels = operators.len();
        if coarsening < 2 {
            return Err(Error::param("coarsening", "must be at least 2"));
        }
        if levels < 2 {
            return Err(Error::param("levels", "must be at least 2"));
        }
        let span = coarsest_span(coarsening, levels)?;
        if fine_steps < span {
            return Err(Error::param(
                "fine_steps",
                alloc::format!("need at least m^(levels-1) = {span} fine steps"),
            ));
        }
        let fine_step = operators[0].step_size();
        Ok(Self {
            problem,
            coarsening,
            requested: fine_steps,
            padded: padded_steps(fine_steps, coarsening, levels)?,
            fine_step,
            operators,
        })
    }

    pub fn problem(&self) -> &'p Problem {
        self.problem
    }

    pub fn coarsening(&self) -> usize {
        self.coarsening
    }

    pub fn num_levels(&self) -> usize {
        self.operators.len()
    }

    pub fn requested_steps(&self) -> usize {
        self.requested
    }

    /// Fine step count after padding.
    pub fn padded_steps(&self) -> usize {
        self.padded
    }

    /// Number of points (including index 0) on `level`.
    pub fn points(&self, level: usize) -> usize {
        self.padded / self.coarsening.pow(level as u32) + 1
    }

    pub fn fine_step(&self) -> f64 {
        self.fine_step
    }

    pub fn operator(&self, level: usize) -> &LevelOperator<'p> {
        &self.operators[level]
    }

    pub fn step_size(&self, level: usize) -> f64 {
        self.operators[level].step_size()
    }
}

/// Right-hand side of one level's all-at-once system.
#[derive(Debug, Clone, Copy)]
pub enum Rhs<'a> {
    /// `w_0` followed by zeros.
    Initial(&'a [f64]),
    /// One block per point.
    Full(&'a [f64]),
}

impl Rhs<'_> {
    fn add_to(&self, i: usize, out: &mut [f64]) {
        let n = out.len();
        let block = match self {
            Rhs::Initial(w0) if i == 0 => *w0,
            Rhs::Initial(_) => return,
            Rhs::Full(g) => &g[i * n..(i + 1) * n],
        };
        for (o, b) in out.iter_mut().zip(block) {
            *o += b;
        }
    }
}

/// Relaxation and residual kernels of a single level.
///
/// `u` holds `points · n` values; point `i` is a C-point iff `i % m == 0`.
pub struct LevelKernel<'a, 'p> {
    pub op: &'a LevelOperator<'p>,
    /// Use only the linear part of the operator.
    pub homogeneous: bool,
    pub rhs: Rhs<'a>,
    pub n: usize,
    pub m: usize,
}

impl LevelKernel<'_, '_> {
    fn phi(&self, u: &[f64], out: &mut [f64]) {
        self.op.apply_mode(u, out, self.homogeneous);
    }

    /// Updates every F-point from the C-point that starts its interval.
    pub fn f_relax<E: Executor + ?Sized>(&self, exec: &E, u: &mut [f64]) {
        let (n, m) = (self.n, self.m);
        exec.for_each_chunk_mut(u, m * n, &|j, chunk| {
            let count = chunk.len() / n;
            for k in 1..count {
                let (head, tail) = chunk.split_at_mut(k * n);
                let cur = &mut tail[..n];
                self.phi(&head[(k - 1) * n..], cur);
                self.rhs.add_to(j * m + k, cur);
            }
        });
    }

    /// Updates every C-point `i > 0` from the F-point preceding it. `scratch`
    /// needs one block per C-point.
    pub fn c_relax<E: Executor + ?Sized>(&self, exec: &E, u: &mut [f64], scratch: &mut [f64]) {
        let (n, m) = (self.n, self.m);
        let coarse = (u.len() / n - 1) / m;
        let scratch = &mut scratch[..(coarse + 1) * n];
        {
            let u: &[f64] = u;
            exec.for_each_chunk_mut(scratch, n, &|j, out| {
                if j == 0 {
                    return;
                }
                let i = j * m;
                self.phi(&u[(i - 1) * n..i * n], out);
                self.rhs.add_to(i, out);
            });
        }
        for j in 1..=coarse {
            u[j * m * n..(j * m + 1) * n].copy_from_slice(&scratch[j * n..(j + 1) * n]);
        }
    }

    pub fn fcf_relax<E: Executor + ?Sized>(&self, exec: &E, u: &mut [f64], scratch: &mut [f64]) {
        self.f_relax(exec, u);
        self.c_relax(exec, u, scratch);
        self.f_relax(exec, u);
    }

    /// Writes `r_j = g_{jm} − (u_{jm} − Φ(u_{jm−1}))` (and `r_0 = g_0 − u_0`)
    /// into `residual` and returns the 2-norm over all blocks.
    pub fn residual<E: Executor + ?Sized>(&self, exec: &E, u: &[f64], residual: &mut [f64]) -> f64 {
        let (n, m) = (self.n, self.m);
        let coarse = (u.len() / n - 1) / m;
        let residual = &mut residual[..(coarse + 1) * n];
        exec.for_each_chunk_mut(residual, n, &|j, out| {
            let i = j * m;
            if j == 0 {
                out.fill(0.0);
            } else {
                self.phi(&u[(i - 1) * n..i * n], out);
            }
            self.rhs.add_to(i, out);
            for (o, x) in out.iter_mut().zip(&u[i * n..(i + 1) * n]) {
                *o -= x;
            }
        });
        libm::sqrt(residual.chunks(n).map(norm_sq).sum::<f64>())
    }

    /// Exact forward substitution `u_0 = g_0`, `u_i = Φ(u_{i−1}) + g_i`.
    pub fn forward_solve(&self, u: &mut [f64]) {
        let n = self.n;
        u[..n].fill(0.0);
        self.rhs.add_to(0, &mut u[..n]);
        for i in 1..u.len() / n {
            let (head, tail) = u.split_at_mut(i * n);
            let cur = &mut tail[..n];
            self.phi(&head[(i - 1) * n..], cur);
            self.rhs.add_to(i, cur);
        }
    }
}

/// Copies the C-point blocks `0, m, 2m, …` of `fine` into `coarse`.
pub fn restrict_inject(fine: &[f64], n: usize, m: usize, coarse: &mut [f64]) {
    for (j, block) in coarse.chunks_mut(n).enumerate() {
        block.copy_from_slice(&fine[j * m * n..(j * m + 1) * n]);
    }
}

/// Why an MGRIT run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HaltReason {
    Converged,
    /// The residual stopped decreasing, became non-finite, or a monitor
    /// requested an early stop.
    Stalled,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub seed: u64,
    pub coarsening: usize,
    pub levels: usize,
    pub requested_steps: usize,
    pub padded_steps: usize,
    pub scheme: CorrectionScheme,
    pub tol: f64,
    /// `‖r^k‖` for `k = 0, 1, …`, measured after each FCF-relaxation.
    pub residual_norms: Vec<f64>,
    /// `‖G_{sF}(u^k_{N_t})‖` at the final point, same indexing.
    pub gradient_norms: Vec<f64>,
    /// Coarse-grid corrections performed.
    pub iterations: usize,
    pub halted: HaltReason,
}

impl ConvergenceReport {
    /// Empirical factors `‖r^k‖ / ‖r^{k−1}‖`.
    pub fn residual_factors(&self) -> Vec<f64> {
        self.residual_norms
            .windows(2)
            .map(|w| w[1] / w[0])
            .collect()
    }

    pub fn converged(&self) -> bool {
        self.halted == HaltReason::Converged
    }

    /// `‖r^k‖ / ‖r^0‖` of the last recorded iterate.
    pub fn relative_residual(&self) -> f64 {
        match (self.residual_norms.first(), self.residual_norms.last()) {
            (Some(&first), Some(&last)) if first > 0.0 => last / first,
            _ => 0.0,
        }
    }
}

/// Snapshot handed to a [`Monitor`] after each FCF-relaxation and residual
/// evaluation on the fine level.
#[derive(Debug, Clone, Copy)]
pub struct IterationView<'a> {
    pub iteration: usize,
    pub residual_norm: f64,
    pub gradient_norm: f64,
    /// Fine trajectory, `points · n` values.
    pub trajectory: &'a [f64],
    /// C-point residual blocks, one per coarse index.
    pub residual: &'a [f64],
    pub n: usize,
    pub coarsening: usize,
}

impl<'a> IterationView<'a> {
    pub fn points(&self) -> usize {
        self.trajectory.len() / self.n
    }

    pub fn point(&self, i: usize) -> &'a [f64] {
        &self.trajectory[i * self.n..(i + 1) * self.n]
    }

    pub fn residual_block(&self, j: usize) -> &'a [f64] {
        &self.residual[j * self.n..(j + 1) * self.n]
    }
}

/// Observer of fine-level iterates; returning `Break` stops the run with
/// [`HaltReason::Stalled`].
pub trait Monitor {
    fn observe(&mut self, view: &IterationView<'_>) -> ControlFlow<()>;
}

impl Monitor for () {
    fn observe(&mut self, _: &IterationView<'_>) -> ControlFlow<()> {
        ControlFlow::Continue(())
    }
}

impl<M: Monitor + ?Sized> Monitor for &mut M {
    fn observe(&mut self, view: &IterationView<'_>) -> ControlFlow<()> {
        (**self).observe(view)
    }
}

macro_rules! impl_monitor_tuple {
    ($($name:ident $idx:tt),+) => {
        impl<$($name: Monitor),+> Monitor for ($($name,)+) {
            fn observe(&mut self, view: &IterationView<'_>) -> ControlFlow<()> {
                let mut flow = ControlFlow::Continue(());
                $(
                    if self.$idx.observe(view).is_break() {
                        flow = ControlFlow::Break(());
                    }
                )+
                flow
            }
        }
    };
}

impl_monitor_tuple!(A 0);
impl_monitor_tuple!(A 0, B 1);
impl_monitor_tuple!(A 0, B 1, C 2);

/// Converged (or halted) trajectory and its history.
#[derive(Debug, Clone)]
pub struct MgritSolution {
    pub trajectory: Vec<f64>,
    pub n: usize,
    pub report: ConvergenceReport,
}

impl MgritSolution {
    pub fn points(&self) -> usize {
        self.trajectory.len() / self.n
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.trajectory[i * self.n..(i + 1) * self.n]
    }

    /// The last (padded) iterate.
    pub fn final_point(&self) -> &[f64] {
        self.point(self.points() - 1)
    }
}

struct LevelState {
    u: Vec<f64>,
    rhs: Vec<f64>,
    scratch: Vec<f64>,
    homogeneous: bool,
}

#[derive(Debug, Clone)]
pub struct MgritSolver<'p> {
    hierarchy: IterationHierarchy<'p>,
    config: MgritConfig,
}

impl<'p> MgritSolver<'p> {
    /// Standard hierarchy with fine step `step_scale / L`.
    pub fn new(problem: &'p Problem, config: MgritConfig) -> Result<Self> {
        config.validate()?;
        let step = config.step_scale / problem.lipschitz();
        let hierarchy = IterationHierarchy::new(
            problem,
            config.coarsening,
            config.levels,
            config.fine_steps,
            step,
        )?;
        Self::from_hierarchy(hierarchy, config)
    }

    /// Uses `hierarchy` as is; the grid fields of `config` are overwritten
    /// from it.
    pub fn from_hierarchy(
        hierarchy: IterationHierarchy<'p>,
        mut config: MgritConfig,
    ) -> Result<Self> {
        config.coarsening = hierarchy.coarsening();
        config.levels = hierarchy.num_levels();
        config.fine_steps = hierarchy.requested_steps();
        config.validate()?;
        if config.scheme == CorrectionScheme::Linear
            && !hierarchy.operators[1..]
                .iter()
                .all(LevelOperator::is_affine)
        {
            return Err(Error::Unsupported(
                "linear correction requires affine coarse operators",
            ));
        }
        Ok(Self { hierarchy, config })
    }

    pub fn hierarchy(&self) -> &IterationHierarchy<'p> {
        &self.hierarchy
    }

    pub fn config(&self) -> &MgritConfig {
        &self.config
    }

    /// Solves from the problem's seeded initial condition.
    pub fn solve(&self) -> Result<MgritSolution> {
        self.solve_with(&Sequential, &mut ())
    }

    pub fn solve_with<E: Executor + ?Sized, M: Monitor + ?Sized>(
        &self,
        exec: &E,
        monitor: &mut M,
    ) -> Result<MgritSolution> {
        let problem = self.hierarchy.problem();
        let mut rng = problem.initial_stream();
        let n = problem.len();
        let total = self.hierarchy.points(0) * n;
        let mut guess = Vec::with_capacity(total);
        guess.extend((0..total).map(|_| rand::Rng::random::<f64>(&mut rng)));
        self.iterate(guess, exec, monitor)
    }

    /// Solves with initial condition `w0`; the remaining points start from
    /// the problem's seeded random guess.
    pub fn solve_from<E: Executor + ?Sized, M: Monitor + ?Sized>(
        &self,
        w0: &[f64],
        exec: &E,
        monitor: &mut M,
    ) -> Result<MgritSolution> {
        let problem = self.hierarchy.problem();
        let n = problem.len();
        if w0.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: w0.len(),
            });
        }
        let mut rng = problem.initial_stream();
        let total = self.hierarchy.points(0) * n;
        let mut guess: Vec<f64> = (0..total)
            .map(|_| rand::Rng::random::<f64>(&mut rng))
            .collect();
        guess[..n].copy_from_slice(w0);
        self.iterate(guess, exec, monitor)
    }

    /// Runs V-cycles from the full initial trajectory `guess`, whose first
    /// block is the initial condition.
    pub fn iterate<E: Executor + ?Sized, M: Monitor + ?Sized>(
        &self,
        guess: Vec<f64>,
        exec: &E,
        monitor: &mut M,
    ) -> Result<MgritSolution> {
        let h = &self.hierarchy;
        let problem = h.problem();
        let n = problem.len();
        let m = h.coarsening();
        if guess.len() != h.points(0) * n {
            return Err(Error::LengthMismatch {
                expected: h.points(0) * n,
                actual: guess.len(),
            });
        }
        let w0 = guess[..n].to_vec();
        let linear = self.config.scheme == CorrectionScheme::Linear;
        let mut levels: Vec<LevelState> = (0..h.num_levels())
            .map(|l| {
                let points = h.points(l);
                let coarse_blocks = if l + 1 < h.num_levels() {
                    (points - 1) / m + 1
                } else {
                    0
                };
                LevelState {
                    u: if l == 0 {
                        Vec::new()
                    } else {
                        vec![0.0; points * n]
                    },
                    rhs: if l == 0 {
                        Vec::new()
                    } else {
                        vec![0.0; points * n]
                    },
                    scratch: vec![0.0; coarse_blocks * n],
                    homogeneous: linear && l > 0,
                }
            })
            .collect();
        levels[0].u = guess;

        let gradient = GeneralizedGradient::new(problem, h.fine_step())?;
        let mut grad_buf = vec![0.0; n];
        let mut report = ConvergenceReport {
            seed: problem.seed(),
            coarsening: m,
            levels: h.num_levels(),
            requested_steps: h.requested_steps(),
            padded_steps: h.padded_steps(),
            scheme: self.config.scheme,
            tol: self.config.tol,
            residual_norms: Vec::new(),
            gradient_norms: Vec::new(),
            iterations: 0,
            halted: HaltReason::MaxIter,
        };
        let mut rising = 0usize;
        let mut k = 0usize;
        loop {
            let (fine, coarser) = levels.split_at_mut(1);
            let fine = &mut fine[0];
            let kernel = LevelKernel {
                op: h.operator(0),
                homogeneous: false,
                rhs: Rhs::Initial(&w0),
                n,
                m,
            };
            kernel.fcf_relax(exec, &mut fine.u, &mut fine.scratch);
            let rnorm = kernel.residual(exec, &fine.u, &mut fine.scratch);
            let last = fine.u.len() - n;
            gradient.evaluate_into(&fine.u[last..], &mut grad_buf);
            let gnorm = norm(&grad_buf);
            if let Some(&prev) = report.residual_norms.last() {
                if rnorm >= prev {
                    rising += 1;
                } else {
                    rising = 0;
                }
            }
            report.residual_norms.push(rnorm);
            report.gradient_norms.push(gnorm);
            report.iterations = k;
            let view = IterationView {
                iteration: k,
                residual_norm: rnorm,
                gradient_norm: gnorm,
                trajectory: &fine.u,
                residual: &fine.scratch,
                n,
                coarsening: m,
            };
            let flow = monitor.observe(&view);
            let r0 = report.residual_norms[0];
            if rnorm <= self.config.tol * r0 {
                report.halted = HaltReason::Converged;
                break;
            }
            if flow.is_break() || !rnorm.is_finite() || rising >= self.config.stall_window {
                report.halted = HaltReason::Stalled;
                break;
            }
            if k >= self.config.max_iter {
                report.halted = HaltReason::MaxIter;
                break;
            }
            coarse_correct(
                h,
                exec,
                &mut fine.u,
                &fine.scratch,
                coarser,
                0,
                self.config.scheme,
            );
            k += 1;
        }
        let trajectory = core::mem::take(&mut levels[0].u);
        Ok(MgritSolution {
            trajectory,
            n,
            report,
        })
    }
}

/// Injects the fine state and C-point residual to `coarser[0]`, solves there
/// (recursively), and corrects the fine C-points.
fn coarse_correct<E: Executor + ?Sized>(
    h: &IterationHierarchy<'_>,
    exec: &E,
    fine_u: &mut [f64],
    residual: &[f64],
    coarser: &mut [LevelState],
    level: usize,
    scheme: CorrectionScheme,
) {
    let n = h.problem().len();
    let m = h.coarsening();
    let (next, rest) = coarser.split_first_mut().expect("coarse level present");
    let op = h.operator(level + 1);
    match scheme {
        CorrectionScheme::Fas => {
            restrict_inject(fine_u, n, m, &mut next.u);
            let uc: &[f64] = &next.u;
            let r = residual;
            let homogeneous = next.homogeneous;
            exec.for_each_chunk_mut(&mut next.rhs, n, &|j, out| {
                if j == 0 {
                    out.fill(0.0);
                } else {
                    op.apply_mode(&uc[(j - 1) * n..j * n], out, homogeneous);
                    out.iter_mut().for_each(|x| *x = -*x);
                }
                for ((o, u), ri) in out
                    .iter_mut()
                    .zip(&uc[j * n..(j + 1) * n])
                    .zip(&r[j * n..(j + 1) * n])
                {
                    *o += u + ri;
                }
            });
        }
        CorrectionScheme::Linear => {
            next.rhs.copy_from_slice(residual);
            next.u.fill(0.0);
        }
    }

    let kernel = LevelKernel {
        op,
        homogeneous: next.homogeneous,
        rhs: Rhs::Full(&next.rhs),
        n,
        m,
    };
    if rest.is_empty() {
        kernel.forward_solve(&mut next.u);
    } else {
        kernel.fcf_relax(exec, &mut next.u, &mut next.scratch);
        kernel.residual(exec, &next.u, &mut next.scratch);
        coarse_correct(h, exec, &mut next.u, &next.scratch, rest, level + 1, scheme);
        kernel.f_relax(exec, &mut next.u);
    }

    let points = fine_u.len() / n;
    for j in 0..=(points - 1) / m {
        let dst = &mut fine_u[j * m * n..(j * m + 1) * n];
        let src = &next.u[j * n..(j + 1) * n];
        match scheme {
            CorrectionScheme::Fas => dst.copy_from_slice(src),
            CorrectionScheme::Linear => dst.iter_mut().zip(src).for_each(|(d, s)| *d += s),
        }
    }
}

/// Runs MGRIT with the sequential executor and no monitor.
pub fn mgrit_solve(problem: &Problem, config: MgritConfig) -> Result<MgritSolution> {
    MgritSolver::new(problem, config)?.solve()
}

/// How the next window's length is chosen when a window ends with the
/// gradient target unmet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrowthPolicy {
    /// Multiply the previous window length.
    Geometric(f64),
    /// Extrapolate the observed linear rate of the final-point gradient over
    /// the previous window, scaled by `safety ≥ 1`.
    RateEstimate { safety: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    /// Grid and solver settings; `fine_steps` is the first window's length.
    pub mgrit: MgritConfig,
    /// Target `‖G(u_final)‖ ≤ gradient_tol · ‖G(u_0)‖`.
    pub gradient_tol: f64,
    pub growth: GrowthPolicy,
    pub max_windows: usize,
}

impl AdaptiveConfig {
    pub fn new(mgrit: MgritConfig) -> Self {
        Self {
            mgrit,
            gradient_tol: 1e-8,
            growth: GrowthPolicy::Geometric(2.0),
            max_windows: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSummary {
    pub requested_steps: usize,
    pub padded_steps: usize,
    pub iterations: usize,
    pub halted: HaltReason,
    pub start_gradient: f64,
    pub final_gradient: f64,
    /// Whether this window ended because the gradient target was reached.
    pub reached_target: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveReport {
    pub seed: u64,
    pub gradient_target: f64,
    pub windows: Vec<WindowSummary>,
    /// Sum of padded window lengths.
    pub total_steps: usize,
    pub converged: bool,
    pub final_state: Vec<f64>,
}

/// Detects a window whose final-point gradient no longer improves.
///
/// Fires when the residual tolerance is met while the gradient target is not,
/// or when the gradient shrinks by less than 1% over `patience` consecutive
/// iterations once the residual tolerance is met.
#[derive(Debug, Clone)]
pub struct StallDetector {
    pub patience: usize,
    flat: usize,
    previous: Option<f64>,
}

impl StallDetector {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            flat: 0,
            previous: None,
        }
    }

    pub fn update(&mut self, residual_met: bool, gradient: f64, target: f64) -> bool {
        let ratio = self.previous.map(|p| gradient / p);
        self.previous = Some(gradient);
        if residual_met && ratio.is_some_and(|r| r > 0.99) {
            self.flat += 1;
        } else {
            self.flat = 0;
        }
        residual_met && (gradient > target || self.flat >= self.patience)
    }
}

struct WindowMonitor {
    target: f64,
    tol: f64,
    detector: StallDetector,
    reached: bool,
    stalled: bool,
    first_residual: Option<f64>,
}

impl Monitor for WindowMonitor {
    fn observe(&mut self, view: &IterationView<'_>) -> ControlFlow<()> {
        let r0 = *self.first_residual.get_or_insert(view.residual_norm);
        if view.gradient_norm <= self.target {
            self.reached = true;
            return ControlFlow::Break(());
        }
        let residual_met = view.residual_norm <= self.tol * r0;
        if self
            .detector
            .update(residual_met, view.gradient_norm, self.target)
        {
            self.stalled = true;
        }
        ControlFlow::Continue(())
    }
}

/// Solves over successive windows until the final-point generalized gradient
/// reaches the target, seeding each window from the previous final state.
pub fn adaptive_horizon_solve<E: Executor + ?Sized>(
    problem: &Problem,
    config: &AdaptiveConfig,
    exec: &E,
) -> Result<AdaptiveReport> {
    config.mgrit.validate()?;
    if !(config.gradient_tol > 0.0) {
        return Err(Error::param("gradient_tol", "must be positive"));
    }
    if config.max_windows == 0 {
        return Err(Error::param("max_windows", "must be at least 1"));
    }
    match config.growth {
        GrowthPolicy::Geometric(f) if !(f > 1.0) => {
            return Err(Error::param("growth", "factor must exceed 1"))
        }
        GrowthPolicy::RateEstimate { safety } if !(safety >= 1.0) => {
            return Err(Error::param("growth", "safety must be at least 1"))
        }
        _ => {}
    }
    let step = config.mgrit.step_scale / problem.lipschitz();
    let gradient = GeneralizedGradient::new(problem, step)?;
    let mut state = problem.initial_condition();
    let g0 = gradient.norm(&state);
    let target = config.gradient_tol * g0;
    let span = coarsest_span(config.mgrit.coarsening, config.mgrit.levels)?;
    let mut report = AdaptiveReport {
        seed: problem.seed(),
        gradient_target: target,
        windows: Vec::new(),
        total_steps: 0,
        converged: g0 <= target,
        final_state: Vec::new(),
    };
    let mut horizon = config.mgrit.fine_steps;
    let mut start_gradient = g0;
    while !report.converged {
        if report.windows.len() >= config.max_windows {
            return Err(Error::WindowLimit(config.max_windows));
        }
        let mut mgrit = config.mgrit;
        mgrit.fine_steps = horizon.max(span);
        let solver = MgritSolver::new(problem, mgrit)?;
        let mut monitor = WindowMonitor {
            target,
            tol: mgrit.tol,
            detector: StallDetector::new(3),
            reached: false,
            stalled: false,
            first_residual: None,
        };
        let solution = solver.solve_from(&state, exec, &mut monitor)?;
        let final_gradient = *solution
            .report
            .gradient_norms
            .last()
            .unwrap_or(&start_gradient);
        let padded = solution.report.padded_steps;
        report.total_steps += padded;
        report.windows.push(WindowSummary {
            requested_steps: mgrit.fine_steps,
            padded_steps: padded,
            iterations: solution.report.iterations,
            halted: solution.report.halted,
            start_gradient,
            final_gradient,
            reached_target: monitor.reached,
        });
        state = solution.final_point().to_vec();
        if monitor.reached || final_gradient <= target {
            report.converged = true;
            break;
        }
        if !(monitor.stalled || solution.report.converged()) {
            break;
        }
        horizon = next_horizon(
            config.growth,
            padded,
            start_gradient,
            final_gradient,
            target,
        );
        start_gradient = final_gradient;
    }
    report.final_state = state;
    Ok(report)
}

fn next_horizon(policy: GrowthPolicy, previous: usize, start: f64, end: f64, target: f64) -> usize {
    match policy {
        GrowthPolicy::Geometric(f) => libm::ceil(previous as f64 * f) as usize,
        GrowthPolicy::RateEstimate { safety } => {
            let rate = libm::pow(end / start, 1.0 / previous as f64);
            if !(rate < 1.0 && rate > 0.0) {
                return 2 * previous;
            }
            let remaining = libm::log(target / end) / libm::log(rate);
            libm::ceil(safety * remaining).max(1.0) as usize
        }
    }
}
