//! Performance curves of recorded runs.

use rayon::prelude::*;

use crate::algorithms::RunTrace;
use crate::domain::{performance, Objective};
use crate::error::Result;

/// Worst-case expected reward of the strategy the run would report after
/// each checkpoint `t`.
pub fn evaluate_run(trace: &RunTrace, oracle: &dyn Objective, checkpoints: &[usize]) -> Result<Vec<(usize, f64)>> {
    checkpoints
        .par_iter()
        .map(|&t| Ok((t, performance(&trace.strategy_at(t)?, oracle)?)))
        .collect()
}

/// Every checkpoint `1..=T`.
pub fn full_curve(trace: &RunTrace, oracle: &dyn Objective) -> Result<Vec<(usize, f64)>> {
    let checkpoints: Vec<usize> = (1..=trace.len()).collect();
    evaluate_run(trace, oracle, &checkpoints)
}
