//! Fractionally spaced LMS feed-forward equalizer.
//!
//! Taps are spaced half a symbol apart. The input is normalized to unit RMS
//! at the sampling instants so the step size is independent of signal
//! level; equalizer outputs are in constellation units.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::tx::{decide, Modulation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FfeConfig {
    pub n_taps: usize,
    pub step: f64,
    /// Symbols adapted against the known sequence before switching to
    /// decision-directed updates.
    pub n_train: usize,
}

impl Default for FfeConfig {
    fn default() -> Self {
        Self { n_taps: 11, step: 0.01, n_train: 4096 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FfeStatus {
    Converged,
    /// Error energy grew over three consecutive quarters of the record, or
    /// became non-finite. The result holds the partial output.
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FfeResult {
    pub symbols: Vec<Complex64>,
    pub taps: Vec<Complex64>,
    pub status: FfeStatus,
    /// Relative change between the mean tap vectors of the two halves of the
    /// final quarter. Averaging removes the gradient-noise jitter so the
    /// figure reflects systematic drift.
    pub tap_drift: f64,
    /// Mean squared error in each quarter of the record.
    pub quarter_error: [f64; 4],
    /// Factor applied to the input before filtering.
    pub input_scale: f64,
    /// Taps in use at each symbol, `n_taps` values per symbol.
    pub tap_history: Vec<Complex64>,
    pub sps: usize,
    pub offset: usize,
}

/// Growth factor between quarters that counts as divergence.
const DIVERGENCE_GROWTH: f64 = 1.2;

fn tap_at(waveform: &[Complex64], centre: isize, m: usize, half: usize, spacing: usize) -> Complex64 {
    let idx = centre + (m as isize - half as isize) * spacing as isize;
    if idx >= 0 && (idx as usize) < waveform.len() {
        waveform[idx as usize]
    } else {
        Complex64::new(0.0, 0.0)
    }
}

/// Equalizes symbols sampled at `offset + k·sps`, `k = 0..n_symbols`.
///
/// `training` holds the reference for the first symbols; updates use it for
/// `min(n_train, training.len())` symbols and hard decisions afterwards.
pub fn lms_ffe(
    waveform: &[Complex64],
    sps: usize,
    offset: usize,
    n_symbols: usize,
    cfg: &FfeConfig,
    training: &[Complex64],
    modulation: Modulation,
) -> Result<FfeResult> {
    if cfg.n_taps.is_multiple_of(2) {
        return Err(param(format!("tap count must be odd, got {}", cfg.n_taps)));
    }
    if !(cfg.step.is_finite() && cfg.step >= 0.0) {
        return Err(param(format!("step size must be non-negative, got {}", cfg.step)));
    }
    if sps < 2 || !sps.is_multiple_of(2) {
        return Err(param("half-symbol tap spacing needs an even number of samples per symbol"));
    }
    if n_symbols < 4 {
        return Err(param("equalizer needs at least four symbols"));
    }
    let spacing = sps / 2;
    let half = cfg.n_taps / 2;
    let centre_of = |k: usize| (offset + k * sps) as isize;
    let p: f64 = (0..n_symbols).map(|k| tap_at(waveform, centre_of(k), half, half, spacing).norm_sqr()).sum::<f64>()
        / n_symbols as f64;
    if !(p > 0.0) {
        return Err(param("equalizer input has zero power at the sampling instants"));
    }
    let scale = 1.0 / p.sqrt();
    let mut taps = vec![Complex64::new(0.0, 0.0); cfg.n_taps];
    taps[half] = Complex64::new(1.0, 0.0);
    let n_train = cfg.n_train.min(training.len());
    let quarter = n_symbols.div_ceil(4);
    let mut quarter_error = [0.0; 4];
    let mut quarter_count = [0usize; 4];
    let final_start = 3 * quarter;
    let final_mid = final_start + (n_symbols.saturating_sub(final_start)) / 2;
    let mut mean_early = vec![Complex64::new(0.0, 0.0); cfg.n_taps];
    let mut mean_late = vec![Complex64::new(0.0, 0.0); cfg.n_taps];
    let mut out = Vec::with_capacity(n_symbols);
    let mut tap_history = Vec::with_capacity(n_symbols * cfg.n_taps);
    let mut x = vec![Complex64::new(0.0, 0.0); cfg.n_taps];
    let mut diverged = false;
    for k in 0..n_symbols {
        let q = k / quarter;
        for (m, v) in x.iter_mut().enumerate() {
            *v = tap_at(waveform, centre_of(k), m, half, spacing) * scale;
        }
        let y: Complex64 = taps.iter().zip(&x).map(|(w, v)| w * v).sum();
        out.push(y);
        tap_history.extend_from_slice(&taps);
        let d = training.get(k).filter(|_| k < n_train).copied().unwrap_or_else(|| decide(y, modulation));
        let e = d - y;
        if !e.norm_sqr().is_finite() {
            diverged = true;
            break;
        }
        quarter_error[q] += e.norm_sqr();
        quarter_count[q] += 1;
        if cfg.step > 0.0 {
            for (w, v) in taps.iter_mut().zip(&x) {
                *w += v.conj() * e * cfg.step;
            }
        }
        if k >= final_start {
            let acc = if k < final_mid { &mut mean_early } else { &mut mean_late };
            acc.iter_mut().zip(&taps).for_each(|(a, w)| *a += w);
        }
    }
    for (e, &c) in quarter_error.iter_mut().zip(&quarter_count) {
        if c > 0 {
            *e /= c as f64;
        }
    }
    let growing = quarter_error.windows(2).all(|w| w[1] > DIVERGENCE_GROWTH * w[0]);
    if growing || quarter_error.iter().any(|e| !e.is_finite()) {
        diverged = true;
    }
    let (n_early, n_late) = ((final_mid - final_start).max(1) as f64, (n_symbols - final_mid).max(1) as f64);
    mean_early.iter_mut().for_each(|w| *w /= n_early);
    mean_late.iter_mut().for_each(|w| *w /= n_late);
    let norm: f64 = mean_late.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt();
    let delta: f64 = mean_late.iter().zip(&mean_early).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    Ok(FfeResult {
        symbols: out,
        taps,
        status: if diverged { FfeStatus::Diverged } else { FfeStatus::Converged },
        tap_drift: if norm > 0.0 { delta / norm } else { f64::INFINITY },
        quarter_error,
        input_scale: scale,
        tap_history,
        sps,
        offset,
    })
}

/// Runs the equalizer over every sample of `waveform`, producing the
/// equalized waveform for eye diagrams. Each sample is filtered with the taps
/// that were in use at the nearest symbol, so the waveform matches the
/// symbol outputs even while the taps track slow changes.
pub fn apply_ffe_waveform(waveform: &[Complex64], result: &FfeResult) -> Vec<Complex64> {
    let n_taps = result.taps.len();
    let spacing = result.sps / 2;
    let half = n_taps / 2;
    let n_hist = result.tap_history.len() / n_taps;
    (0..waveform.len())
        .map(|n| {
            let taps = if n_hist == 0 {
                &result.taps[..]
            } else {
                let k = ((n as f64 - result.offset as f64) / result.sps as f64).round().clamp(0.0, (n_hist - 1) as f64) as usize;
                &result.tap_history[k * n_taps..(k + 1) * n_taps]
            };
            taps.iter()
                .enumerate()
                .map(|(m, w)| w * tap_at(waveform, n as isize, m, half, spacing))
                .sum::<Complex64>()
                * result.input_scale
        })
        .collect()
}
