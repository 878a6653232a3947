//! Checks of MGRIT iterates against the gradient and residual error bounds,
//! convergence-rate fits, and per-iteration data extracts for plotting.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::mgrit::{IterationView, Monitor};
use crate::problems::Problem;
use crate::propagators::{GeneralizedGradient, Propagator};
use crate::vector::{dist, norm, norm_sq};
use crate::{Error, Result};

/// Slack tolerated before a bound counts as violated.
pub const BOUND_TOLERANCE: f64 = -1e-10;

/// One evaluated bound `lhs ≤ rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSample {
    pub iteration: usize,
    pub index: usize,
    pub lhs: f64,
    pub rhs: f64,
}

impl BoundSample {
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }

    pub fn holds(&self) -> bool {
        self.slack() >= BOUND_TOLERANCE
    }
}

/// Evaluates `‖G(v_i)‖ ≤ (√2/s)‖v_i − u_i‖ + ‖G(u_i)‖` at each sampled index,
/// where `v` is an approximate trajectory and `u` the exact one.
pub fn check_lemma_bound(
    gradient: &GeneralizedGradient<'_>,
    approximate: &[f64],
    exact: &[f64],
    n: usize,
    samples: &[usize],
    iteration: usize,
) -> Result<Vec<BoundSample>> {
    if approximate.len() != exact.len() {
        return Err(Error::LengthMismatch {
            expected: exact.len(),
            actual: approximate.len(),
        });
    }
    let points = exact.len() / n;
    let coeff = libm::sqrt(2.0) / gradient.step_size();
    samples
        .iter()
        .map(|&i| {
            if i >= points {
                return Err(Error::param("samples", "index beyond the trajectory"));
            }
            let v = &approximate[i * n..(i + 1) * n];
            let u = &exact[i * n..(i + 1) * n];
            Ok(BoundSample {
                iteration,
                index: i,
                lhs: gradient.norm(v),
                rhs: coeff * dist(v, u) + gradient.norm(u),
            })
        })
        .collect()
}

/// Monitor that checks the gradient bound at every iteration against a stored
/// exact trajectory.
pub struct LemmaMonitor<'a, 'p> {
    gradient: GeneralizedGradient<'p>,
    exact: &'a [f64],
    samples: Vec<usize>,
    exact_gradients: Vec<f64>,
    pub records: Vec<BoundSample>,
}

impl<'a, 'p> LemmaMonitor<'a, 'p> {
    /// `exact` must hold as many points as the MGRIT trajectory.
    pub fn new(
        gradient: GeneralizedGradient<'p>,
        exact: &'a [f64],
        n: usize,
        samples: Vec<usize>,
    ) -> Self {
        let exact_gradients = samples
            .iter()
            .map(|&i| gradient.norm(&exact[i * n..(i + 1) * n]))
            .collect();
        Self {
            gradient,
            exact,
            samples,
            exact_gradients,
            records: Vec::new(),
        }
    }

    pub fn worst_slack(&self) -> f64 {
        self.records
            .iter()
            .map(BoundSample::slack)
            .fold(f64::INFINITY, f64::min)
    }
}

impl Monitor for LemmaMonitor<'_, '_> {
    fn observe(&mut self, view: &IterationView<'_>) -> ControlFlow<()> {
        let n = view.n;
        let coeff = libm::sqrt(2.0) / self.gradient.step_size();
        for (&i, &gu) in self.samples.iter().zip(&self.exact_gradients) {
            let v = view.point(i);
            let u = &self.exact[i * n..(i + 1) * n];
            self.records.push(BoundSample {
                iteration: view.iteration,
                index: i,
                lhs: self.gradient.norm(v),
                rhs: coeff * dist(v, u) + gu,
            });
        }
        ControlFlow::Continue(())
    }
}

/// Eigenvalues of a symmetric matrix (row-major, `dim × dim`) by cyclic
/// Jacobi rotations, in ascending order.
pub fn symmetric_eigenvalues(matrix: &[f64], dim: usize) -> Result<Vec<f64>> {
    if matrix.len() != dim * dim {
        return Err(Error::LengthMismatch {
            expected: dim * dim,
            actual: matrix.len(),
        });
    }
    let mut a = matrix.to_vec();
    let scale = libm::sqrt(norm_sq(&a)).max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..dim)
            .flat_map(|i| (0..dim).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * dim + j] * a[i * dim + j])
            .sum();
        if libm::sqrt(off) <= 1e-15 * scale {
            break;
        }
        for p in 0..dim {
            for q in p + 1..dim {
                let apq = a[p * dim + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * dim + q] - a[p * dim + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..dim {
                    let akp = a[k * dim + p];
                    let akq = a[k * dim + q];
                    a[k * dim + p] = c * akp - s * akq;
                    a[k * dim + q] = s * akp + c * akq;
                }
                for k in 0..dim {
                    let apk = a[p * dim + k];
                    let aqk = a[q * dim + k];
                    a[p * dim + k] = c * apk - s * aqk;
                    a[q * dim + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..dim).map(|i| a[i * dim + i]).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// The linear part of the all-at-once operator for an affine step
/// `Φ(u) = Mu + c` over `points` points, assembled densely (row-major).
pub fn dense_all_at_once(propagator: &Propagator<'_>, points: usize) -> Result<Vec<f64>> {
    if !propagator.is_affine() {
        return Err(Error::Unsupported(
            "dense all-at-once operator needs an affine step",
        ));
    }
    let n = propagator.problem().len();
    let dim = n * points;
    let mut a = vec![0.0; dim * dim];
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for i in 0..points {
        for r in 0..n {
            a[(i * n + r) * dim + i * n + r] = 1.0;
        }
    }
    for c in 0..n {
        e.fill(0.0);
        e[c] = 1.0;
        propagator.apply_homogeneous(&e, &mut col);
        for i in 1..points {
            for r in 0..n {
                a[(i * n + r) * dim + (i - 1) * n + c] = -col[r];
            }
        }
    }
    Ok(a)
}

/// `‖A⁻¹‖₂` of the dense all-at-once operator, from the smallest eigenvalue
/// of `AᵀA`.
pub fn inverse_norm_dense(propagator: &Propagator<'_>, points: usize) -> Result<f64> {
    let a = dense_all_at_once(propagator, points)?;
    let dim = propagator.problem().len() * points;
    let mut ata = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in i..dim {
            let v: f64 = (0..dim).map(|k| a[k * dim + i] * a[k * dim + j]).sum();
            ata[i * dim + j] = v;
            ata[j * dim + i] = v;
        }
    }
    let eig = symmetric_eigenvalues(&ata, dim)?;
    Ok(1.0 / libm::sqrt(eig[0]))
}

/// Monitor that checks `‖G(v_i)‖ ≤ (√2/s)‖A⁻¹‖‖r‖ + ‖G(u_i)‖` at every
/// point and iteration. Valid after an F-relaxation, when the full residual
/// equals the C-point residual.
pub struct ResidualBoundMonitor<'a, 'p> {
    gradient: GeneralizedGradient<'p>,
    exact: &'a [f64],
    inverse_norm: f64,
    pub records: Vec<BoundSample>,
}

impl<'a, 'p> ResidualBoundMonitor<'a, 'p> {
    pub fn new(gradient: GeneralizedGradient<'p>, exact: &'a [f64], inverse_norm: f64) -> Self {
        Self {
            gradient,
            exact,
            inverse_norm,
            records: Vec::new(),
        }
    }

    pub fn worst_slack(&self) -> f64 {
        self.records
            .iter()
            .map(BoundSample::slack)
            .fold(f64::INFINITY, f64::min)
    }
}

impl Monitor for ResidualBoundMonitor<'_, '_> {
    fn observe(&mut self, view: &IterationView<'_>) -> ControlFlow<()> {
        let n = view.n;
        let coeff = libm::sqrt(2.0) / self.gradient.step_size();
        let bound = coeff * self.inverse_norm * view.residual_norm;
        for i in 0..view.points() {
            let u = &self.exact[i * n..(i + 1) * n];
            self.records.push(BoundSample {
                iteration: view.iteration,
                index: i,
                lhs: self.gradient.norm(view.point(i)),
                rhs: bound + self.gradient.norm(u),
            });
        }
        ControlFlow::Continue(())
    }
}

/// Geometric envelope `C ρ^k + floor` for a gradient history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub rho: f64,
    pub constant: f64,
    pub floor: f64,
    /// Smallest `C ρ^k + floor − g_k` over the history.
    pub worst_slack: f64,
}

impl Envelope {
    pub fn holds(&self) -> bool {
        self.worst_slack >= BOUND_TOLERANCE * self.constant.max(1.0)
    }
}

/// Geometric mean of successive residual ratios, leaving out the first and
/// last ratio when at least three are available.
pub fn residual_rate(residuals: &[f64]) -> Result<f64> {
    let ratios: Vec<f64> = residuals.windows(2).map(|w| w[1] / w[0]).collect();
    let used = if ratios.len() >= 3 {
        &ratios[1..ratios.len() - 1]
    } else {
        &ratios[..]
    };
    if used.is_empty() {
        return Err(Error::param("residuals", "need at least two entries"));
    }
    let log_sum: f64 = used.iter().map(|r| libm::log(*r)).sum();
    Ok(libm::exp(log_sum / used.len() as f64))
}

/// Fits `ρ` from the residual history and `C = g_0 − floor`, then measures
/// how well `g_k ≤ C ρ^k + floor` holds.
pub fn convergence_envelope(residuals: &[f64], gradients: &[f64], floor: f64) -> Result<Envelope> {
    let rho = residual_rate(residuals)?;
    let g0 = *gradients
        .first()
        .ok_or_else(|| Error::param("gradients", "empty history"))?;
    let constant = (g0 - floor).max(0.0);
    let mut worst_slack = f64::INFINITY;
    let mut power = 1.0;
    for &g in gradients {
        worst_slack = worst_slack.min(constant * power + floor - g);
        power *= rho;
    }
    Ok(Envelope {
        rho,
        constant,
        floor,
        worst_slack,
    })
}

/// Monitor recording `‖v^k − u‖` over the whole trajectory.
pub struct ErrorTracker<'a> {
    exact: &'a [f64],
    pub norms: Vec<f64>,
}

impl<'a> ErrorTracker<'a> {
    pub fn new(exact: &'a [f64]) -> Self {
        Self {
            exact,
            norms: Vec::new(),
        }
    }

    /// Empirical error contraction factors `‖e^k‖ / ‖e^{k−1}‖`.
    pub fn factors(&self) -> Vec<f64> {
        self.norms.windows(2).map(|w| w[1] / w[0]).collect()
    }
}

impl Monitor for ErrorTracker<'_> {
    fn observe(&mut self, view: &IterationView<'_>) -> ControlFlow<()> {
        self.norms.push(dist(view.trajectory, self.exact));
        ControlFlow::Continue(())
    }
}

/// A plot-ready table with a header row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Figure {
    /// `‖G(v^k_{jm})‖` per C-point and iteration.
    GradByIteration,
    /// `‖r^k_j‖` per C-point and iteration.
    ResByIteration,
    /// `(Σ_j (r^k_j)_q²)^{1/2}` per spatial index and iteration.
    SpatialResidual,
}

impl Figure {
    pub fn name(self) -> &'static str {
        match self {
            Figure::GradByIteration => "grad-by-iteration",
            Figure::ResByIteration => "res-by-iteration",
            Figure::SpatialResidual => "spatial-residual",
        }
    }
}

/// Monitor collecting the per-iteration quantities behind each [`Figure`].
pub struct FigureRecorder<'p> {
    gradient: GeneralizedGradient<'p>,
    coordinates: Vec<f64>,
    coord_width: usize,
    pub grad_by_point: Vec<Vec<f64>>,
    pub res_by_point: Vec<Vec<f64>>,
    pub spatial: Vec<Vec<f64>>,
}

impl<'p> FigureRecorder<'p> {
    pub fn new(problem: &'p Problem, gradient: GeneralizedGradient<'p>) -> Self {
        Self {
            gradient,
            coordinates: problem.coordinates(),
            coord_width: problem.laplacian().dim(),
            grad_by_point: Vec::new(),
            res_by_point: Vec::new(),
            spatial: Vec::new(),
        }
    }

    pub fn table(&self, figure: Figure) -> FigureTable {
        let iterations = self.res_by_point.len();
        let mut headers = Vec::new();
        let mut rows = Vec::new();
        match figure {
            Figure::GradByIteration | Figure::ResByIteration => {
                let data = if figure == Figure::GradByIteration {
                    &self.grad_by_point
                } else {
                    &self.res_by_point
                };
                headers.push(String::from("c_point"));
                headers.extend((0..iterations).map(|k| format!("k{k}")));
                let count = data.first().map_or(0, Vec::len);
                for j in 0..count {
                    let mut row = vec![j as f64];
                    row.extend(data.iter().map(|it| it[j]));
                    rows.push(row);
                }
            }
            Figure::SpatialResidual => {
                let axes = if self.coord_width == 1 {
                    &["x"][..]
                } else {
                    &["x", "y"][..]
                };
                headers.push(String::from("index"));
                headers.extend(axes.iter().map(|a| String::from(*a)));
                headers.extend((0..iterations).map(|k| format!("k{k}")));
                let count = self.spatial.first().map_or(0, Vec::len);
                for q in 0..count {
                    let mut row = vec![q as f64];
                    let w = self.coord_width;
                    row.extend_from_slice(&self.coordinates[q * w..(q + 1) * w]);
                    row.extend(self.spatial.iter().map(|it| it[q]));
                    rows.push(row);
                }
            }
        }
        FigureTable { headers, rows }
    }
}

impl Monitor for FigureRecorder<'_> {
    fn observe(&mut self, view: &IterationView<'_>) -> ControlFlow<()> {
        let n = view.n;
        let m = view.coarsening;
        let coarse = (view.points() - 1) / m + 1;
        self.grad_by_point.push(
            (0..coarse)
                .map(|j| self.gradient.norm(view.point(j * m)))
                .collect(),
        );
        self.res_by_point
            .push((0..coarse).map(|j| norm(view.residual_block(j))).collect());
        let mut spatial = vec![0.0; n];
        for j in 0..coarse {
            for (s, r) in spatial.iter_mut().zip(view.residual_block(j)) {
                *s += r * r;
            }
        }
        spatial.iter_mut().for_each(|s| *s = libm::sqrt(*s));
        self.spatial.push(spatial);
        ControlFlow::Continue(())
    }
}
