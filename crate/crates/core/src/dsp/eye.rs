//! Eye-diagram openings from a folded real waveform.

use crate::error::{param, Result};

/// Smallest number of folded traces the estimator accepts.
pub const MIN_TRACES: usize = 200;

/// Opening below which a sampling phase counts as closed. Adjacent samples
/// of a continuum always leave some gap, so zero is not a usable limit.
pub const MIN_OPENING: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EyeMetrics {
    /// Largest inner-rail gap over outer-rail span across phases, in [0, 1].
    pub vertical: f64,
    /// Longest run of sampling phases whose opening exceeds `MIN_OPENING`,
    /// as a fraction of the symbol period.
    pub horizontal: f64,
    /// Sample offset whose two-cluster split labels the rails.
    pub best_phase: usize,
}

/// Splits sorted values into two clusters maximizing the between-class
/// variance. Returns `(lower_max, upper_min, lower_min, upper_max)`.
fn two_clusters(sorted: &[f64]) -> (f64, f64, f64, f64) {
    let n = sorted.len();
    let total: f64 = sorted.iter().sum();
    let mut left = 0.0;
    let mut best = (f64::MIN, 1);
    for k in 1..n {
        left += sorted[k - 1];
        let (nl, nr) = (k as f64, (n - k) as f64);
        let d = left / nl - (total - left) / nr;
        let score = nl * nr * d * d;
        if score > best.0 {
            best = (score, k);
        }
    }
    let k = best.1;
    (sorted[k - 1], sorted[k], sorted[0], sorted[n - 1])
}

/// Folds `waveform` at `sps` samples per symbol and measures the eye.
///
/// The phase with the widest two-cluster split fixes which rail each
/// symbol belongs to. Every phase is then measured with those labels, so a
/// transition region, where the rails cross, reads as closed.
pub fn eye_metrics(waveform: &[f64], sps: usize) -> Result<EyeMetrics> {
    if sps == 0 {
        return Err(param("samples per symbol must be positive"));
    }
    let traces = waveform.len() / sps;
    if traces < MIN_TRACES {
        return Err(param(format!("eye needs at least {MIN_TRACES} traces, got {traces}")));
    }
    let column = |phase: usize| (0..traces).map(move |k| waveform[k * sps + phase]);
    let split: Vec<(f64, f64)> = (0..sps)
        .map(|phase| {
            let mut v: Vec<f64> = column(phase).collect();
            v.sort_by(f64::total_cmp);
            let (lower_max, upper_min, lo, hi) = two_clusters(&v);
            let span = hi - lo;
            let open = if span > 0.0 { (upper_min - lower_max) / span } else { 0.0 };
            (open, 0.5 * (lower_max + upper_min))
        })
        .collect();
    // Among phases tied for the widest split, take the middle of the longest
    // run so that a flat-topped eye is labelled from its centre.
    let top = split.iter().map(|s| s.0).fold(f64::MIN, f64::max);
    let tied: Vec<bool> = split.iter().map(|s| s.0 >= top - 1e-12 * top.abs()).collect();
    let (mut run, mut best_run, mut best_end) = (0, 0, 0);
    for k in 0..2 * sps {
        run = if tied[k % sps] { run + 1 } else { 0 };
        if run > best_run {
            best_run = run;
            best_end = k;
        }
    }
    let best_run = best_run.min(sps);
    let best_phase = (best_end + sps * 2 - (best_run - 1) / 2) % sps;
    let threshold = split[best_phase].1;
    let upper: Vec<bool> = column(best_phase).map(|x| x > threshold).collect();

    let mut vertical = 0.0f64;
    let mut open_phases = Vec::with_capacity(sps);
    for phase in 0..sps {
        // Symbol whose centre is nearest to this phase of trace k.
        let d = phase as isize - best_phase as isize;
        let half = (sps / 2) as isize;
        let shift = if d > half { 1 } else if d < -half { -1 } else { 0 };
        let (mut lower_max, mut upper_min) = (f64::NEG_INFINITY, f64::INFINITY);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (k, x) in column(phase).enumerate() {
            let Some(&is_upper) = usize::try_from(k as isize + shift).ok().and_then(|j| upper.get(j)) else {
                continue;
            };
            if is_upper {
                upper_min = upper_min.min(x);
            } else {
                lower_max = lower_max.max(x);
            }
            lo = lo.min(x);
            hi = hi.max(x);
        }
        let span = hi - lo;
        let open = if span > 0.0 && upper_min.is_finite() && lower_max.is_finite() {
            ((upper_min - lower_max) / span).max(0.0)
        } else {
            0.0
        };
        vertical = vertical.max(open);
        open_phases.push(open > MIN_OPENING);
    }
    // Longest circular run of open phases.
    let horizontal = if open_phases.iter().all(|&g| g) {
        1.0
    } else {
        let mut best = 0;
        let mut run = 0;
        for &g in open_phases.iter().chain(open_phases.iter()) {
            run = if g { run + 1 } else { 0 };
            best = best.max(run);
        }
        best.min(sps) as f64 / sps as f64
    };
    Ok(EyeMetrics { vertical, horizontal, best_phase })
}
