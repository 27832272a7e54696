//! Laser sources, the 3 dB splitter and the short homodyne fibre channel.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::noise::wiener_phase;
use crate::rng::RngStream;
use crate::signal::{ComplexEnvelope, TimeGrid, Unit};

/// Longest fibre the dispersion-free channel model accepts.
pub const MAX_FIBER_LENGTH_M: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaserSpec {
    /// Frequency offset of the signal path relative to the LO, Hz.
    pub offset: f64,
    /// Optical power, W.
    pub power: f64,
    /// Lorentzian linewidth, Hz.
    pub linewidth: f64,
}

impl Default for LaserSpec {
    fn default() -> Self {
        Self { offset: 0.0, power: 2e-3, linewidth: 100e3 }
    }
}

impl LaserSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.power.is_finite() && self.power > 0.0) {
            return Err(param(format!("laser power must be positive, got {}", self.power)));
        }
        if !(self.linewidth.is_finite() && self.linewidth >= 0.0) {
            return Err(param(format!("linewidth must be non-negative, got {}", self.linewidth)));
        }
        if !self.offset.is_finite() {
            return Err(param("frequency offset must be finite"));
        }
        Ok(())
    }
}

/// `√P · exp{j[2π·offset·t + φ(t)]}` with φ a Wiener process.
pub fn laser_field(spec: &LaserSpec, grid: TimeGrid, rng: &RngStream) -> Result<ComplexEnvelope> {
    spec.validate()?;
    let phi = wiener_phase(grid, spec.linewidth, rng)?;
    let amp = spec.power.sqrt();
    let w = 2.0 * PI * spec.offset;
    let samples = phi.iter().enumerate().map(|(n, &p)| Complex64::from_polar(amp, w * grid.time(n) + p)).collect();
    Ok(ComplexEnvelope::from_parts(grid, samples, Unit::SqrtWatt))
}

/// Ideal lossless 3 dB power splitter.
pub fn split_3db(x: &ComplexEnvelope) -> Result<(ComplexEnvelope, ComplexEnvelope)> {
    x.require_unit(Unit::SqrtWatt, "split_3db")?;
    let half = x.scaled(FRAC_1_SQRT_2);
    Ok((half.clone(), half))
}

/// Slow phase drift imposed by the fibre path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DriftModel {
    #[default]
    None,
    /// Brownian phase with diffusion `rate` in rad²/s.
    RandomWalk { rate: f64 },
    /// `amplitude · sin(2π·freq·t + phase)`.
    Sinusoid {
        freq: f64,
        amplitude: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Phase step of `size` rad at time `at` s.
    Step { at: f64, size: f64 },
    /// Sum of several drift terms.
    Sum { terms: Vec<DriftModel> },
}

impl DriftModel {
    /// Random walk that drifts by about π rad RMS per millisecond.
    pub fn default_random_walk() -> Self {
        DriftModel::RandomWalk { rate: PI * PI / 1e-3 }
    }

    fn validate(&self) -> Result<()> {
        match self {
            DriftModel::None => Ok(()),
            DriftModel::RandomWalk { rate } if rate.is_finite() && *rate >= 0.0 => Ok(()),
            DriftModel::RandomWalk { rate } => Err(param(format!("random-walk rate must be non-negative, got {rate}"))),
            DriftModel::Sinusoid { freq, amplitude, phase } => {
                if [*freq, *amplitude, *phase].iter().all(|v| v.is_finite()) && *freq >= 0.0 {
                    Ok(())
                } else {
                    Err(param("sinusoidal drift needs finite, non-negative frequency"))
                }
            }
            DriftModel::Step { at, size } if at.is_finite() && size.is_finite() => Ok(()),
            DriftModel::Step { .. } => Err(param("phase step needs finite time and size")),
            DriftModel::Sum { terms } => terms.iter().try_for_each(|t| t.validate()),
        }
    }

    /// Drift phase sampled on `grid`, starting from zero (random walk) or the
    /// sinusoid's own starting value.
    pub fn phase(&self, grid: TimeGrid, rng: &RngStream) -> Result<Vec<f64>> {
        self.validate()?;
        let n = grid.n_samples();
        Ok(match self {
            DriftModel::None => vec![0.0; n],
            DriftModel::RandomWalk { rate } => {
                let sigma = (rate * grid.dt()).sqrt();
                let mut rng = rng.clone();
                let mut acc = 0.0;
                (0..n)
                    .map(|i| {
                        if i > 0 && sigma > 0.0 {
                            acc += sigma * rng.standard_normal();
                        }
                        acc
                    })
                    .collect()
            }
            DriftModel::Sinusoid { freq, amplitude, phase } => {
                (0..n).map(|i| amplitude * (2.0 * PI * freq * grid.time(i) + phase).sin()).collect()
            }
            DriftModel::Step { at, size } => (0..n).map(|i| if grid.time(i) >= *at { *size } else { 0.0 }).collect(),
            DriftModel::Sum { terms } => {
                let mut total = vec![0.0; n];
                for (k, t) in terms.iter().enumerate() {
                    let p = t.phase(grid, &rng.derive(&k.to_string()))?;
                    total.iter_mut().zip(p).for_each(|(a, b)| *a += b);
                }
                total
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSpec {
    /// Fibre length, m.
    pub length: f64,
    /// Attenuation, dB/km.
    pub loss: f64,
    pub drift: DriftModel,
    /// Static optical phase of the path at t = 0, rad. `None` draws it
    /// uniformly from the scenario seed.
    pub static_phase: Option<f64>,
    /// Extra optical path of the signal arm relative to the LO arm, m.
    /// Non-zero values decorrelate the laser phase noise seen by S and LO.
    pub path_mismatch: f64,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self { length: 10.0, loss: 0.2, drift: DriftModel::None, static_phase: Some(0.0), path_mismatch: 0.0 }
    }
}

/// Group index of standard single-mode fibre.
pub const FIBER_GROUP_INDEX: f64 = 1.468;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

impl ChannelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.length.is_finite() && self.length >= 0.0) {
            return Err(param(format!("fibre length must be non-negative, got {}", self.length)));
        }
        if self.length > MAX_FIBER_LENGTH_M {
            return Err(Error::Config(format!(
                "fibre length {} m exceeds {MAX_FIBER_LENGTH_M} m: chromatic dispersion is not modelled, \
                 the channel is restricted to short-reach links",
                self.length
            )));
        }
        if !(self.loss.is_finite() && self.loss >= 0.0) {
            return Err(param(format!("fibre loss must be non-negative, got {}", self.loss)));
        }
        if !(self.path_mismatch.is_finite() && self.path_mismatch >= 0.0) {
            return Err(param("path mismatch must be non-negative"));
        }
        self.drift.validate()
    }

    /// Field amplitude transmission.
    pub fn amplitude_scale(&self) -> f64 {
        10f64.powf(-self.loss * self.length / 20.0 / 1000.0)
    }

    /// Differential delay between the S and LO arms, s.
    pub fn mismatch_delay(&self) -> f64 {
        self.path_mismatch * FIBER_GROUP_INDEX / SPEED_OF_LIGHT
    }
}

/// Fibre channel: attenuation plus the drift phase.
pub fn fiber(x: &ComplexEnvelope, spec: &ChannelSpec, rng: &RngStream) -> Result<ComplexEnvelope> {
    x.require_unit(Unit::SqrtWatt, "fiber")?;
    spec.validate()?;
    let theta = spec.drift.phase(x.grid(), rng)?;
    let a = spec.amplitude_scale();
    let samples = x.samples().iter().zip(&theta).map(|(&s, &t)| s * Complex64::from_polar(a, t)).collect();
    Ok(ComplexEnvelope::from_parts(x.grid(), samples, Unit::SqrtWatt))
}
