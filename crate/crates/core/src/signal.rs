//! Time grid and sampled complex-envelope containers.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param, structural, Result};

/// Uniform sampling grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    sample_rate: f64,
    n_samples: usize,
}

impl TimeGrid {
    pub fn new(sample_rate: f64, n_samples: usize) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(param(format!("sample rate must be positive, got {sample_rate}")));
        }
        if n_samples == 0 {
            return Err(param("time grid needs at least one sample"));
        }
        Ok(Self { sample_rate, n_samples })
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Sample period in seconds.
    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    /// Time of sample `n` in seconds.
    pub fn time(&self, n: usize) -> f64 {
        n as f64 / self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.n_samples as f64 / self.sample_rate
    }
}

/// Physical unit carried by a [`ComplexEnvelope`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Unit {
    /// Optical field, |x|² in watts.
    SqrtWatt,
    Ampere,
    Volt,
}

/// A uniformly sampled complex baseband record.
///
/// Electrical quantities such as photocurrents or single-rail voltages are
/// stored with a zero imaginary part ("real payload").
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexEnvelope {
    grid: TimeGrid,
    samples: Vec<Complex64>,
    unit: Unit,
}

impl ComplexEnvelope {
    pub fn new(grid: TimeGrid, samples: Vec<Complex64>, unit: Unit) -> Result<Self> {
        if samples.len() != grid.n_samples() {
            return Err(structural(format!(
                "record has {} samples but grid expects {}",
                samples.len(),
                grid.n_samples()
            )));
        }
        if let Some(i) = samples.iter().position(|s| !(s.re.is_finite() && s.im.is_finite())) {
            return Err(param(format!("non-finite sample at index {i}")));
        }
        Ok(Self { grid, samples, unit })
    }

    /// Builds a real-payload record.
    pub fn from_real(grid: TimeGrid, values: &[f64], unit: Unit) -> Result<Self> {
        Self::new(grid, values.iter().map(|&v| Complex64::new(v, 0.0)).collect(), unit)
    }

    pub fn constant(grid: TimeGrid, value: Complex64, unit: Unit) -> Result<Self> {
        Self::new(grid, vec![value; grid.n_samples()], unit)
    }

    /// Internal constructor for records produced by already-validated arithmetic.
    pub(crate) fn from_parts(grid: TimeGrid, samples: Vec<Complex64>, unit: Unit) -> Self {
        debug_assert_eq!(samples.len(), grid.n_samples());
        Self { grid, samples, unit }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    /// Real parts of the samples.
    pub fn real(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.re).collect()
    }

    /// Mean of |x|².
    pub fn mean_power(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    pub fn map(&self, mut f: impl FnMut(Complex64) -> Complex64) -> Self {
        Self::from_parts(self.grid, self.samples.iter().map(|&s| f(s)).collect(), self.unit)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map(|s| s * factor)
    }

    pub(crate) fn require_unit(&self, unit: Unit, what: &str) -> Result<()> {
        if self.unit != unit {
            return Err(structural(format!("{what} expects {unit:?} input, got {:?}", self.unit)));
        }
        Ok(())
    }

    pub(crate) fn require_same_grid(&self, other: &Self, what: &str) -> Result<()> {
        if self.grid != other.grid {
            return Err(structural(format!("{what}: time grids differ")));
        }
        Ok(())
    }
}
