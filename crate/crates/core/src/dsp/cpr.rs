//! Fourth-power blind carrier-phase estimation for QPSK.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;

use crate::error::{param, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CprOutput {
    pub symbols: Vec<Complex64>,
    /// Unwrapped phase estimate removed from each symbol, rad.
    pub phases: Vec<f64>,
}

/// Wraps `x` into `[-π/4, π/4)`.
pub fn wrap_quarter(x: f64) -> f64 {
    (x + FRAC_PI_2 / 2.0).rem_euclid(FRAC_PI_2) - FRAC_PI_2 / 2.0
}

/// Removes the carrier phase estimated from `arg(−Σ s⁴)/4` over a centred
/// sliding window of `window` symbols. The estimate is unwrapped in steps of
/// π/2 so slow drifts are followed across the estimator's ambiguity.
pub fn offline_cpr(symbols: &[Complex64], window: usize) -> Result<CprOutput> {
    if window == 0 {
        return Err(param("CPR window must be at least one symbol"));
    }
    if window > symbols.len() {
        return Err(param(format!("CPR window {window} exceeds the record of {} symbols", symbols.len())));
    }
    let n = symbols.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(Complex64::new(0.0, 0.0));
    for &s in symbols {
        let last = *prefix.last().unwrap();
        prefix.push(last + s.powi(4));
    }
    let before = window / 2;
    let mut phases = Vec::with_capacity(n);
    let mut prev: Option<f64> = None;
    for k in 0..n {
        let lo = k.saturating_sub(before).min(n - window);
        let sum = prefix[lo + window] - prefix[lo];
        let raw = (-sum).arg() / 4.0;
        let theta = match prev {
            Some(p) => p + wrap_quarter(raw - p),
            None => raw,
        };
        phases.push(theta);
        prev = Some(theta);
    }
    let out = symbols.iter().zip(&phases).map(|(&s, &t)| s * Complex64::from_polar(1.0, -t)).collect();
    Ok(CprOutput { symbols: out, phases })
}
