//! Empirical cost ratio `α = t_c / t_f` of one coarse step to one fine step.

use std::time::{Duration, Instant};

use mgritopt_core::Propagator;
use serde::Serialize;

/// Smallest batch duration considered above timer noise.
const MIN_BATCH: Duration = Duration::from_millis(2);
const GROUPS: usize = 5;
const ROUNDS_PER_GROUP: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaMeasurement {
    /// Median over groups of the per-group median ratio.
    pub alpha: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub fine_seconds: f64,
    pub coarse_seconds: f64,
    /// Steps per timed batch after widening for timer resolution.
    pub repetitions: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum TimingError {
    #[error("at least 100 repetitions are required, got {0}")]
    TooFewRepetitions(usize),
    #[error("propagators act on different problem sizes")]
    SizeMismatch,
}

fn time_batch(p: &Propagator<'_>, reps: usize, a: &mut Vec<f64>, b: &mut Vec<f64>) -> Duration {
    let start = Instant::now();
    for _ in 0..reps {
        p.apply(a, b);
        std::mem::swap(a, b);
    }
    std::hint::black_box(&a);
    start.elapsed()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// Times batches of `repetitions` fine and coarse steps from the problem's
/// initial condition. One warm-up round is discarded; the batch size doubles
/// until a batch takes at least a couple of milliseconds. Factorization cost
/// is excluded since both propagators are built before timing.
pub fn measure_alpha(
    fine: &Propagator<'_>,
    coarse: &Propagator<'_>,
    repetitions: usize,
) -> Result<AlphaMeasurement, TimingError> {
    if repetitions < 100 {
        return Err(TimingError::TooFewRepetitions(repetitions));
    }
    if fine.problem().len() != coarse.problem().len() {
        return Err(TimingError::SizeMismatch);
    }
    let u0 = fine.problem().initial_condition();
    let mut a = u0.clone();
    let mut b = vec![0.0; u0.len()];
    let mut reps = repetitions;
    while time_batch(fine, reps, &mut a, &mut b) < MIN_BATCH && reps < 1 << 26 {
        reps *= 2;
    }
    let _ = time_batch(coarse, reps, &mut a, &mut b);

    let mut ratios = Vec::with_capacity(GROUPS * ROUNDS_PER_GROUP);
    let mut fine_times = Vec::new();
    let mut coarse_times = Vec::new();
    let mut group_medians = Vec::with_capacity(GROUPS);
    for _ in 0..GROUPS {
        let mut group = Vec::with_capacity(ROUNDS_PER_GROUP);
        for _ in 0..ROUNDS_PER_GROUP {
            a.copy_from_slice(&u0);
            let tf = time_batch(fine, reps, &mut a, &mut b).as_secs_f64() / reps as f64;
            a.copy_from_slice(&u0);
            let tc = time_batch(coarse, reps, &mut a, &mut b).as_secs_f64() / reps as f64;
            fine_times.push(tf);
            coarse_times.push(tc);
            group.push(tc / tf);
        }
        ratios.extend_from_slice(&group);
        group_medians.push(median(&mut group));
    }
    let alpha = median(&mut group_medians);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(AlphaMeasurement {
        alpha,
        min,
        median: median(&mut ratios),
        max,
        fine_seconds: median(&mut fine_times),
        coarse_seconds: median(&mut coarse_times),
        repetitions: reps,
    })
}
