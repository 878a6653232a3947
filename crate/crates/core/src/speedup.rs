//! Wall-clock speedup model for two- and three-level MGRIT.
//!
//! Costs are in units of one fine step (`t_f = 1`), so a coarse step costs
//! `α = t_c / t_f`, and the coarsest level of the three-level cycle is
//! assumed to cost the same per step as the middle one.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedupInputs {
    /// Fine intervals `N_f`.
    pub fine_steps: f64,
    /// Coarsening factor `m`.
    pub coarsening: f64,
    /// MGRIT iterations `N_it`.
    pub iterations: f64,
    /// `α = t_c / t_f`.
    pub alpha: f64,
    /// Processors `N_p`.
    pub processors: f64,
}

impl SpeedupInputs {
    /// One processor per coarse interval, `N_p = N_f / m`.
    pub fn full_parallel(fine_steps: f64, coarsening: f64, iterations: f64, alpha: f64) -> Self {
        Self {
            fine_steps,
            coarsening,
            iterations,
            alpha,
            processors: fine_steps / coarsening,
        }
    }

    fn validate(&self) -> Result<()> {
        let fields = [
            ("fine_steps", self.fine_steps),
            ("coarsening", self.coarsening),
            ("iterations", self.iterations),
            ("alpha", self.alpha),
            ("processors", self.processors),
        ];
        for (name, value) in fields {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::param(name, "must be positive and finite"));
            }
        }
        Ok(())
    }

    fn coarse_points(&self) -> f64 {
        self.fine_steps / self.coarsening
    }
}

/// Two-level speedup `N_f / (N_it (N_c α + 2 N_f / N_p))`.
pub fn s2(inputs: &SpeedupInputs) -> Result<f64> {
    inputs.validate()?;
    let nf = inputs.fine_steps;
    let cost = inputs.coarse_points() * inputs.alpha + 2.0 * nf / inputs.processors;
    Ok(nf / (inputs.iterations * cost))
}

/// Two-level speedup with `N_p = N_f / m`: `1 / (N_it (α/m + 2m/N_f))`.
pub fn s2_full_parallel(fine_steps: f64, m: f64, iterations: f64, alpha: f64) -> Result<f64> {
    let inputs = SpeedupInputs::full_parallel(fine_steps, m, iterations, alpha);
    inputs.validate()?;
    Ok(1.0 / (iterations * (alpha / m + 2.0 * m / fine_steps)))
}

/// Two-level speedup at the real-valued optimum `m = √(N_f α / 2)`:
/// `√N_f / (2 N_it √(2α))`.
pub fn s2_optimal(fine_steps: f64, alpha: f64, iterations: f64) -> Result<f64> {
    positive("fine_steps", fine_steps)?;
    positive("alpha", alpha)?;
    positive("iterations", iterations)?;
    Ok(libm::sqrt(fine_steps) / (iterations * 2.0 * libm::sqrt(2.0 * alpha)))
}

/// Three-level speedup
/// `N_f / (N_it (N_cc α + 3 N_c α / min{N_p, N_c/m} + 2 N_f / N_p))`.
pub fn s3(inputs: &SpeedupInputs) -> Result<f64> {
    inputs.validate()?;
    let nf = inputs.fine_steps;
    let m = inputs.coarsening;
    let nc = inputs.coarse_points();
    let ncc = nc / m;
    let cost = ncc * inputs.alpha
        + 3.0 * nc * inputs.alpha / inputs.processors.min(nc / m)
        + 2.0 * nf / inputs.processors;
    Ok(nf / (inputs.iterations * cost))
}

/// Three-level speedup with `N_p = N_f / m`:
/// `1 / (N_it (α/m² + (2m/N_f)(1 + 3α/2)))`.
pub fn s3_full_parallel(fine_steps: f64, m: f64, iterations: f64, alpha: f64) -> Result<f64> {
    let inputs = SpeedupInputs::full_parallel(fine_steps, m, iterations, alpha);
    inputs.validate()?;
    let cost = alpha / (m * m) + 2.0 * m / fine_steps * (1.0 + 1.5 * alpha);
    Ok(1.0 / (iterations * cost))
}

/// `round(√(N_f α / 2))`.
pub fn optimal_m_2level(fine_steps: f64, alpha: f64) -> Result<usize> {
    positive("fine_steps", fine_steps)?;
    positive("alpha", alpha)?;
    Ok(libm::round(libm::sqrt(fine_steps * alpha / 2.0)) as usize)
}

/// `round(∛((N_f / 2) / (1/α + 3/2)))`.
pub fn optimal_m_3level(fine_steps: f64, alpha: f64) -> Result<usize> {
    positive("fine_steps", fine_steps)?;
    positive("alpha", alpha)?;
    Ok(libm::round(libm::cbrt(fine_steps / 2.0 / (1.0 / alpha + 1.5))) as usize)
}

/// Processor count for one processor per coarse interval, `⌈N_f / m⌉`.
pub fn processors(fine_steps: f64, m: usize) -> usize {
    libm::ceil(fine_steps / m as f64) as usize
}

/// One row of a speedup table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedupEstimate {
    pub levels: usize,
    pub coarsening: usize,
    pub iterations: usize,
    pub speedup: f64,
    pub processors: usize,
}

/// Optimal coarsening factor for a two- or three-level cycle.
pub fn optimal_m(levels: usize, fine_steps: f64, alpha: f64) -> Result<usize> {
    match levels {
        2 => optimal_m_2level(fine_steps, alpha),
        3 => optimal_m_3level(fine_steps, alpha),
        _ => Err(Error::Unsupported("speedup model covers 2 and 3 levels")),
    }
}

/// Full-parallel speedup estimate at coarsening `m` with `iterations`
/// MGRIT iterations.
pub fn estimate(
    levels: usize,
    fine_steps: f64,
    alpha: f64,
    m: usize,
    iterations: usize,
) -> Result<SpeedupEstimate> {
    let (mf, it) = (m as f64, iterations as f64);
    let speedup = match levels {
        2 => s2_full_parallel(fine_steps, mf, it, alpha)?,
        3 => s3_full_parallel(fine_steps, mf, it, alpha)?,
        _ => return Err(Error::Unsupported("speedup model covers 2 and 3 levels")),
    };
    Ok(SpeedupEstimate {
        levels,
        coarsening: m,
        iterations,
        speedup,
        processors: processors(fine_steps, m),
    })
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, "must be positive and finite"))
    }
}
