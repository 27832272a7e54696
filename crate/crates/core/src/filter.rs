//! Single-pole low-pass and fractional-delay primitives.
//!
//! Every "BW = ..." entry of the device tables is modelled as one real pole.
//! The streaming types here are shared by the record-level operations and by
//! the sample-stepped loop engine, so both paths run the same arithmetic.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::ops::{Add, Mul};

use num_complex::Complex64;

use crate::error::{param, Result};
use crate::signal::ComplexEnvelope;

/// Discrete first-order low-pass `y[n] = a·y[n-1] + (1-a)·x[n]` with
/// `a = exp(-2π·f3db·dt)`.
///
/// The state is primed with the first input sample, i.e. the record is
/// assumed to have been in steady state before it started.
#[derive(Debug, Clone)]
pub struct SinglePole<T> {
    a: f64,
    state: Option<T>,
}

impl<T> SinglePole<T>
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T>,
{
    pub fn new(f3db: f64, dt: f64) -> Result<Self> {
        if !(f3db.is_finite() && f3db > 0.0) {
            return Err(param(format!("3 dB frequency must be positive, got {f3db}")));
        }
        Ok(Self { a: (-2.0 * PI * f3db * dt).exp(), state: None })
    }

    /// Pole with an explicit initial state.
    pub fn with_state(f3db: f64, dt: f64, state: T) -> Result<Self> {
        let mut p = Self::new(f3db, dt)?;
        p.state = Some(state);
        Ok(p)
    }

    pub fn coefficient(&self) -> f64 {
        self.a
    }

    pub fn state(&self) -> Option<T> {
        self.state
    }

    #[inline]
    pub fn step(&mut self, x: T) -> T {
        let y = match self.state {
            Some(s) => s * self.a + x * (1.0 - self.a),
            None => x,
        };
        self.state = Some(y);
        y
    }
}

/// Optional pole: `None` bandwidth means an ideal wire.
#[derive(Debug, Clone)]
pub struct MaybePole<T>(Option<SinglePole<T>>);

impl<T> MaybePole<T>
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T>,
{
    pub fn new(f3db: Option<f64>, dt: f64) -> Result<Self> {
        Ok(Self(f3db.map(|f| SinglePole::new(f, dt)).transpose()?))
    }

    pub fn wire() -> Self {
        Self(None)
    }

    #[inline]
    pub fn step(&mut self, x: T) -> T {
        match &mut self.0 {
            Some(p) => p.step(x),
            None => x,
        }
    }
}

/// Record-level single-pole low-pass with unity DC gain.
pub fn single_pole_lowpass(x: &ComplexEnvelope, f3db: f64) -> Result<ComplexEnvelope> {
    if x.is_empty() {
        return Err(param("empty record"));
    }
    let mut pole = SinglePole::<Complex64>::new(f3db, x.grid().dt())?;
    Ok(ComplexEnvelope::from_parts(
        x.grid(),
        x.samples().iter().map(|&s| pole.step(s)).collect(),
        x.unit(),
    ))
}

/// Causal band-limited fractional delay (Hann-windowed sinc).
///
/// A causal interpolator needs `half_len - 1` samples of look-ahead, so when
/// the requested delay is shorter than that the line adds a bulk latency,
/// reported by [`FractionalDelay::extra_latency`]. Delays that are an exact
/// number of samples use a single tap.
#[derive(Debug, Clone)]
pub struct FractionalDelay<T> {
    taps: Vec<f64>,
    history: VecDeque<T>,
    extra: usize,
}

impl<T> FractionalDelay<T>
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T>,
{
    pub fn new(delay_samples: f64, half_len: usize) -> Result<Self> {
        if !(delay_samples.is_finite() && delay_samples >= 0.0) {
            return Err(param(format!("delay must be non-negative, got {delay_samples}")));
        }
        let whole = delay_samples.floor();
        let frac = delay_samples - whole;
        let whole = whole as usize;
        if frac < 1e-12 {
            let mut taps = vec![0.0; whole + 1];
            taps[whole] = 1.0;
            return Ok(Self { taps, history: VecDeque::new(), extra: 0 });
        }
        let half_len = half_len.max(1);
        // Taps cover m in [whole+1-half_len, whole+half_len]; shift so the
        // first index is non-negative.
        let extra = (half_len - 1).saturating_sub(whole);
        let total = delay_samples + extra as f64;
        let first = whole + extra + 1 - half_len;
        let last = whole + extra + half_len;
        let mut taps = vec![0.0; last + 1];
        for (m, tap) in taps.iter_mut().enumerate().skip(first) {
            let u = m as f64 - total;
            let sinc = if u.abs() < 1e-15 { 1.0 } else { (PI * u).sin() / (PI * u) };
            let w = 0.5 * (1.0 + (PI * u / half_len as f64).cos());
            *tap = sinc * w;
        }
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= sum);
        Ok(Self { taps, history: VecDeque::new(), extra })
    }

    /// Samples of latency added on top of the requested delay.
    pub fn extra_latency(&self) -> usize {
        self.extra
    }

    #[inline]
    pub fn step(&mut self, x: T) -> T {
        if self.history.is_empty() {
            self.history.extend(std::iter::repeat_n(x, self.taps.len()));
        }
        self.history.pop_back();
        self.history.push_front(x);
        let mut acc = x * 0.0;
        for (h, &t) in self.history.iter().zip(&self.taps) {
            if t != 0.0 {
                acc = acc + *h * t;
            }
        }
        acc
    }
}

/// Delays a whole record by `delay` seconds, compensating any bulk latency
/// of the causal interpolator so the net delay is exact.
pub(crate) fn delay_record(samples: &[Complex64], delay_samples: f64) -> Result<Vec<Complex64>> {
    let mut line = FractionalDelay::<Complex64>::new(delay_samples, 16)?;
    let extra = line.extra_latency();
    let n = samples.len();
    let last = *samples.last().ok_or_else(|| param("empty record"))?;
    let out: Vec<Complex64> = samples
        .iter()
        .copied()
        .chain(std::iter::repeat_n(last, extra))
        .map(|s| line.step(s))
        .skip(extra)
        .take(n)
        .collect();
    Ok(out)
}
