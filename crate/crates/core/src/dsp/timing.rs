//! Symbol timing from the per-phase signal power and alignment of received symbols to
//! the transmitted sequence.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;

use crate::error::{param, Result};

/// Sampling offset within the symbol slot, in samples.
///
/// Uses the mean power at each phase of the slot: the offset is the circular
/// mean of the phases weighted by the squared excess power over the weakest
/// phase. Symmetric pulses give the slot centre; band-limited NRZ, whose
/// levels settle late in the slot, gives a later instant.
pub fn symbol_timing(waveform: &[Complex64], sps: usize) -> Result<f64> {
    if sps == 0 {
        return Err(param("samples per symbol must be positive"));
    }
    let traces = waveform.len() / sps;
    if traces == 0 {
        return Err(param("waveform is shorter than one symbol"));
    }
    let mut power = vec![0.0; sps];
    for (k, x) in waveform[..traces * sps].iter().enumerate() {
        power[k % sps] += x.norm_sqr();
    }
    let floor = power.iter().copied().fold(f64::INFINITY, f64::min);
    let acc: Complex64 = power
        .iter()
        .enumerate()
        .map(|(k, p)| Complex64::from_polar((p - floor).powi(2), 2.0 * PI * k as f64 / sps as f64))
        .sum();
    if acc.norm() == 0.0 {
        return Ok(sps as f64 / 2.0);
    }
    Ok((acc.arg().rem_euclid(2.0 * PI) / (2.0 * PI) * sps as f64).rem_euclid(sps as f64))
}

/// Samples one value per symbol at `offset + k·sps`, linearly interpolated.
pub fn sample_symbols(waveform: &[Complex64], sps: usize, offset: f64) -> Vec<Complex64> {
    let mut out = Vec::new();
    let mut t = offset;
    while t + 1.0 < waveform.len() as f64 {
        let i = t.floor() as usize;
        let f = t - i as f64;
        out.push(waveform[i] * (1.0 - f) + waveform[i + 1] * f);
        t += sps as f64;
    }
    out
}

/// Lag and quarter-turn rotation mapping received onto transmitted symbols:
/// `rx[k] ≈ j^rotation · tx[k + lag]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alignment {
    pub lag: isize,
    pub rotation: u8,
}

impl Alignment {
    /// Reference sequence for `rx`, with `None` where `tx` has no partner.
    pub fn reference(&self, tx: &[Complex64], n_rx: usize) -> Vec<Option<Complex64>> {
        let rot = Complex64::i().powi(self.rotation as i32);
        (0..n_rx)
            .map(|k| {
                let j = k as isize + self.lag;
                (j >= 0 && (j as usize) < tx.len()).then(|| tx[j as usize] * rot)
            })
            .collect()
    }
}

/// Best lag within `±max_lag` by correlation magnitude; rotation from the
/// correlation phase.
pub fn align(rx: &[Complex64], tx: &[Complex64], max_lag: usize) -> Result<Alignment> {
    if rx.is_empty() || tx.is_empty() {
        return Err(param("cannot align empty sequences"));
    }
    let mut best: Option<(f64, Alignment)> = None;
    for lag in -(max_lag as isize)..=max_lag as isize {
        let mut c = Complex64::new(0.0, 0.0);
        let mut count = 0usize;
        for (k, &r) in rx.iter().enumerate() {
            let j = k as isize + lag;
            if j >= 0 && (j as usize) < tx.len() {
                c += r * tx[j as usize].conj();
                count += 1;
            }
        }
        if count == 0 {
            continue;
        }
        let score = c.norm() / count as f64;
        let rotation = ((c.arg() / FRAC_PI_2).round() as i64).rem_euclid(4) as u8;
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, Alignment { lag, rotation }));
        }
    }
    best.map(|(_, a)| a).ok_or_else(|| param("sequences do not overlap at any lag"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tx::{map_symbols, prbs7, pulse_shape, Modulation, PulseShape};

    #[test]
    fn timing_finds_eye_centre_of_nrz() {
        let s = map_symbols(&prbs7(0x11, 400).unwrap(), Modulation::Qpsk).unwrap();
        let sps = 16;
        let x = pulse_shape(&s, sps, PulseShape::RaisedCosine { rolloff: 0.5 }, 1e9).unwrap();
        let off = symbol_timing(x.samples(), sps).unwrap();
        let d = (off - 8.0 + 8.0).rem_euclid(16.0) - 8.0;
        assert!(d.abs() < 0.5, "{off}");
        // Delayed copy shifts the estimate.
        let delayed: Vec<Complex64> = std::iter::repeat_n(x.samples()[0], 5).chain(x.samples().iter().copied()).collect();
        let off2 = symbol_timing(&delayed, sps).unwrap();
        assert!(((off2 - off - 5.0 + 8.0).rem_euclid(16.0) - 8.0).abs() < 0.5, "{off2}");
    }

    #[test]
    fn band_limited_nrz_samples_late() {
        let s = map_symbols(&prbs7(0x11, 2000).unwrap(), Modulation::Qpsk).unwrap();
        let x = pulse_shape(&s, 16, PulseShape::Nrz, 2e9).unwrap();
        let y = crate::filter::single_pole_lowpass(&x, 1.4e9).unwrap();
        let off = symbol_timing(y.samples(), 16).unwrap();
        assert!(off > 10.0 && off < 16.0, "{off}");
    }

    #[test]
    fn alignment_recovers_lag_and_rotation() {
        let tx = map_symbols(&prbs7(0x2a, 1000).unwrap(), Modulation::Qpsk).unwrap().symbols;
        let j = Complex64::i();
        let rx: Vec<Complex64> = (0..490).map(|k| tx[k + 2] * j * j * j).collect();
        let a = align(&rx, &tx, 3).unwrap();
        assert_eq!(a, Alignment { lag: 2, rotation: 3 });
        let r = a.reference(&tx, rx.len());
        assert!(r.iter().zip(&rx).all(|(a, b)| (a.unwrap() - b).norm() < 1e-12));
    }

    #[test]
    fn sampling_interpolates() {
        let w: Vec<Complex64> = (0..10).map(|k| Complex64::new(k as f64, 0.0)).collect();
        let s = sample_symbols(&w, 4, 1.5);
        assert_eq!(s.iter().map(|c| c.re).collect::<Vec<_>>(), vec![1.5, 5.5]);
    }
}
