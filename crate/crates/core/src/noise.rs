//! Additive white Gaussian noise and Wiener laser phase noise.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{param, Result};
use crate::rng::RngStream;
use crate::signal::{ComplexEnvelope, TimeGrid};

/// Circular complex Gaussian source with total variance `variance`
/// (`variance / 2` per quadrature).
#[derive(Debug, Clone)]
pub struct ComplexNoise {
    sigma: f64,
    rng: RngStream,
}

impl ComplexNoise {
    pub fn new(variance: f64, rng: RngStream) -> Self {
        Self { sigma: (variance.max(0.0) / 2.0).sqrt(), rng }
    }

    /// Noise sized for `snr_db` against a signal of mean power `signal_power`.
    pub fn for_snr(signal_power: f64, snr_db: f64, rng: RngStream) -> Self {
        Self::new(signal_power / 10f64.powf(snr_db / 10.0), rng)
    }

    pub fn variance(&self) -> f64 {
        2.0 * self.sigma * self.sigma
    }

    #[inline]
    pub fn sample(&mut self) -> Complex64 {
        if self.sigma == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let re = self.rng.standard_normal();
        let im = self.rng.standard_normal();
        Complex64::new(re, im) * self.sigma
    }
}

/// Adds circular complex AWGN so the record SNR is `snr_db`.
///
/// `f64::INFINITY` disables noise and returns the input unchanged.
pub fn add_awgn(x: &ComplexEnvelope, snr_db: f64, rng: &RngStream) -> Result<ComplexEnvelope> {
    if snr_db == f64::INFINITY {
        return Ok(x.clone());
    }
    if snr_db.is_nan() {
        return Err(param("SNR is NaN"));
    }
    let p = x.mean_power();
    if !(p > 0.0) {
        return Err(param("cannot reference SNR to a zero-power record"));
    }
    let mut noise = ComplexNoise::for_snr(p, snr_db, rng.clone());
    Ok(x.map(|s| s + noise.sample()))
}

/// Wiener phase process for a laser of the given Lorentzian linewidth:
/// `φ[0] = 0` and independent increments of variance `2π·linewidth·dt`.
pub fn wiener_phase(grid: TimeGrid, linewidth: f64, rng: &RngStream) -> Result<Vec<f64>> {
    if !(linewidth.is_finite() && linewidth >= 0.0) {
        return Err(param(format!("linewidth must be non-negative, got {linewidth}")));
    }
    let n = grid.n_samples();
    if linewidth == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let sigma = (2.0 * PI * linewidth * grid.dt()).sqrt();
    let mut rng = rng.clone();
    let mut phi = Vec::with_capacity(n);
    let mut acc = 0.0;
    phi.push(acc);
    for _ in 1..n {
        acc += sigma * rng.standard_normal();
        phi.push(acc);
    }
    Ok(phi)
}
