//! Picking the decay factor from short warmup runs.
//!
//! For each candidate the sparse run's flip rate is compared with the flip
//! rate of a dense run pruned only for measurement. Their ratio `mu` is
//! averaged over a window at the end of warmup; a candidate is feasible when
//! `mu` lies in [`FEASIBLE_BAND`], and the largest feasible one wins.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};

/// Inclusive band of acceptable sparse/dense flip-rate ratios.
pub const FEASIBLE_BAND: (f64, f64) = (0.60, 0.95);

/// Default candidate grid.
pub const DEFAULT_CANDIDATES: [f64; 5] = [1e-6, 6e-6, 6e-5, 2e-4, 2e-3];

/// [`DEFAULT_CANDIDATES`] continued upward. Small models with short
/// schedules flip less than large ones and need stronger decay to land in
/// the band.
pub const EXTENDED_CANDIDATES: [f64; 8] = [1e-6, 6e-6, 6e-5, 2e-4, 2e-3, 6e-3, 1e-2, 2e-2];

/// Supplies flip-rate traces of warmup runs. Index `t` of a trace is the
/// flip rate between steps `t` and `t + 1`.
pub trait FlipProbe {
    fn dense_trace(&mut self, warmup_steps: usize) -> Result<Vec<f64>>;
    fn sparse_trace(&mut self, lambda: f64, warmup_steps: usize) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LambdaEntry {
    pub lambda: f64,
    pub mu: f64,
    pub feasible: bool,
    /// `mu >= 1`: the sparse run flips at least as often as dense training.
    pub accuracy_risk: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LambdaReport {
    pub entries: Vec<LambdaEntry>,
    pub window: (usize, usize),
    pub chosen: Option<f64>,
}

/// The last 10% of a trace of length `len`, at least one step.
pub fn sampling_window(len: usize) -> Range<usize> {
    let width = (len / 10).max(1).min(len);
    len - width..len
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Ratio of the mean sparse flip rate to the mean dense flip rate over
/// `window`. NaN when both means are zero.
pub fn flip_ratio(sparse: &[f64], dense: &[f64], window: Range<usize>) -> Result<f64> {
    for len in [sparse.len(), dense.len()] {
        if window.end > len || window.is_empty() {
            return Err(Error::LengthMismatch {
                op: "flip_ratio",
                expected: window.end,
                found: len,
            });
        }
    }
    Ok(mean(&sparse[window.clone()]) / mean(&dense[window]))
}

pub fn is_feasible(mu: f64) -> bool {
    (FEASIBLE_BAND.0..=FEASIBLE_BAND.1).contains(&mu)
}

/// Runs the dense warmup and one sparse warmup per candidate, returning the
/// largest feasible decay factor and the full report. When nothing is
/// feasible the error carries the report.
pub fn decay_factor_search<P: FlipProbe + ?Sized>(
    candidates: &[f64],
    warmup_steps: usize,
    probe: &mut P,
) -> Result<(f64, LambdaReport)> {
    if candidates.is_empty() {
        return Err(Error::InvalidConfig("empty decay factor candidate list".into()));
    }
    if warmup_steps < 2 {
        return Err(Error::InvalidConfig("warmup needs at least two steps".into()));
    }
    let dense = probe.dense_trace(warmup_steps)?;
    let window = sampling_window(dense.len());
    let mut entries = Vec::with_capacity(candidates.len());
    for &lambda in candidates {
        let sparse = probe.sparse_trace(lambda, warmup_steps)?;
        let mu = flip_ratio(&sparse, &dense, window.clone())?;
        entries.push(LambdaEntry {
            lambda,
            mu,
            feasible: is_feasible(mu),
            accuracy_risk: mu >= 1.0,
        });
    }
    let chosen = entries
        .iter()
        .filter(|e| e.feasible)
        .map(|e| e.lambda)
        .fold(None, |best: Option<f64>, l| Some(best.map_or(l, |b| b.max(l))));
    let report = LambdaReport {
        entries,
        window: (window.start, window.end),
        chosen,
    };
    match chosen {
        Some(l) => Ok((l, report)),
        None => Err(Error::NoFeasibleLambda(Box::new(report))),
    }
}
