//! Transmitter baseband: PRBS data, Gray symbol mapping, pulse shaping and
//! optical IQ modulation.
//!
//! # Bit to symbol tables
//!
//! Bits are consumed in (I-bits, Q-bits) order. Each axis uses a Gray code in
//! which a leading `0` bit means a positive amplitude.
//!
//! | QPSK bits | symbol          |
//! |-----------|-----------------|
//! | 00        | ( 1 + 1j) / √2  |
//! | 01        | ( 1 − 1j) / √2  |
//! | 10        | (−1 + 1j) / √2  |
//! | 11        | (−1 − 1j) / √2  |
//!
//! 16-QAM uses `b0 b1` for I and `b2 b3` for Q, with per-axis levels
//! `00 → +3, 01 → +1, 11 → −1, 10 → −3`, all divided by √10.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::signal::{ComplexEnvelope, TimeGrid, Unit};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitStream {
    pub bits: Vec<u8>,
    pub generator_tag: String,
}

/// PRBS-7 (x⁷ + x⁶ + 1) Fibonacci LFSR starting from `init_state`.
pub fn prbs7(init_state: u8, n: usize) -> Result<BitStream> {
    let mut state = init_state & 0x7f;
    if state == 0 {
        return Err(param("PRBS-7 seed must be a non-zero 7-bit value"));
    }
    let mut bits = Vec::with_capacity(n);
    for _ in 0..n {
        let fb = ((state >> 6) ^ (state >> 5)) & 1;
        state = ((state << 1) | fb) & 0x7f;
        bits.push(fb);
    }
    Ok(BitStream { bits, generator_tag: format!("prbs7:{init_state:#04x}") })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    #[default]
    Qpsk,
    #[serde(rename = "16qam")]
    Qam16,
}

impl Modulation {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Qpsk => 2,
            Modulation::Qam16 => 4,
        }
    }

    /// Full alphabet indexed by the bit label read MSB-first.
    pub fn alphabet(self) -> Vec<Complex64> {
        let k = self.bits_per_symbol();
        (0..1usize << k)
            .map(|label| {
                let bits: Vec<u8> = (0..k).rev().map(|b| ((label >> b) & 1) as u8).collect();
                self.map_one(&bits)
            })
            .collect()
    }

    /// Whether the modulation has a constant envelope.
    pub fn constant_envelope(self) -> bool {
        matches!(self, Modulation::Qpsk)
    }

    fn map_one(self, bits: &[u8]) -> Complex64 {
        match self {
            Modulation::Qpsk => Complex64::new(sign(bits[0]), sign(bits[1])) * FRAC_1_SQRT_2,
            Modulation::Qam16 => {
                let s = 1.0 / 10f64.sqrt();
                Complex64::new(level4(bits[0], bits[1]), level4(bits[2], bits[3])) * s
            }
        }
    }

    fn demap_one(self, s: Complex64, out: &mut Vec<u8>) {
        match self {
            Modulation::Qpsk => {
                out.push(u8::from(s.re < 0.0));
                out.push(u8::from(s.im < 0.0));
            }
            Modulation::Qam16 => {
                let scale = 10f64.sqrt();
                for v in [s.re * scale, s.im * scale] {
                    out.push(u8::from(v < 0.0));
                    out.push(u8::from(v.abs() < 2.0));
                }
            }
        }
    }
}

fn sign(bit: u8) -> f64 {
    if bit == 0 {
        1.0
    } else {
        -1.0
    }
}

fn level4(b0: u8, b1: u8) -> f64 {
    sign(b0) * if b1 == 0 { 3.0 } else { 1.0 }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolStream {
    pub symbols: Vec<Complex64>,
    pub modulation: Modulation,
}

pub fn map_symbols(bits: &BitStream, modulation: Modulation) -> Result<SymbolStream> {
    let k = modulation.bits_per_symbol();
    if !bits.bits.len().is_multiple_of(k) {
        return Err(param(format!("{} bits is not a multiple of {k}", bits.bits.len())));
    }
    if bits.bits.iter().any(|&b| b > 1) {
        return Err(param("bit stream contains values other than 0/1"));
    }
    Ok(SymbolStream {
        symbols: bits.bits.chunks(k).map(|c| modulation.map_one(c)).collect(),
        modulation,
    })
}

/// Nearest-neighbour hard decisions back to bits.
pub fn demap_symbols(symbols: &[Complex64], modulation: Modulation) -> Vec<u8> {
    let mut out = Vec::with_capacity(symbols.len() * modulation.bits_per_symbol());
    for &s in symbols {
        modulation.demap_one(s, &mut out);
    }
    out
}

/// Nearest constellation point.
pub fn decide(s: Complex64, modulation: Modulation) -> Complex64 {
    let mut bits = Vec::with_capacity(4);
    modulation.demap_one(s, &mut bits);
    modulation.map_one(&bits)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PulseShape {
    /// Sample-and-hold over each symbol slot.
    #[default]
    Nrz,
    /// Nyquist raised-cosine pulse (ISI-free at symbol centres).
    RaisedCosine { rolloff: f64 },
    /// Root-raised-cosine pulse, Nyquist only after a matched receive filter.
    Rrc { rolloff: f64 },
}

/// Span of the raised-cosine family filters, in symbols on each side.
const SHAPE_SPAN: usize = 12;

/// Shapes symbols onto a sample grid of `baud·sps`.
///
/// Pulses are aligned so that symbol `k` peaks at sample `k·sps + sps/2`,
/// the middle of its NRZ slot.
pub fn pulse_shape(
    syms: &SymbolStream,
    sps: usize,
    shape: PulseShape,
    baud: f64,
) -> Result<ComplexEnvelope> {
    if sps < 8 {
        return Err(param(format!("need at least 8 samples per symbol, got {sps}")));
    }
    if syms.symbols.is_empty() {
        return Err(param("no symbols to shape"));
    }
    let grid = TimeGrid::new(baud * sps as f64, syms.symbols.len() * sps)?;
    let samples = match shape {
        PulseShape::Nrz => syms.symbols.iter().flat_map(|&s| std::iter::repeat_n(s, sps)).collect(),
        PulseShape::RaisedCosine { rolloff } => {
            check_rolloff(rolloff)?;
            let taps = raised_cosine_taps(rolloff, sps, SHAPE_SPAN);
            interpolate(&syms.symbols, sps, &taps)
        }
        PulseShape::Rrc { rolloff } => {
            check_rolloff(rolloff)?;
            let mut taps = rrc_taps(rolloff, sps, SHAPE_SPAN);
            // Unit DC gain for a constant symbol stream.
            let sum: f64 = taps.iter().sum();
            taps.iter_mut().for_each(|t| *t *= sps as f64 / sum);
            interpolate(&syms.symbols, sps, &taps)
        }
    };
    ComplexEnvelope::new(grid, samples, Unit::Volt)
}

fn check_rolloff(rolloff: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rolloff) {
        return Err(param(format!("roll-off must lie in [0, 1], got {rolloff}")));
    }
    Ok(())
}

/// Raised-cosine impulse response sampled at `sps` per symbol, peak 1 at the
/// centre tap.
pub fn raised_cosine_taps(rolloff: f64, sps: usize, span: usize) -> Vec<f64> {
    let half = (span * sps) as isize;
    (-half..=half)
        .map(|k| {
            let t = k as f64 / sps as f64;
            let sinc = if t == 0.0 { 1.0 } else { (PI * t).sin() / (PI * t) };
            let denom = 1.0 - (2.0 * rolloff * t).powi(2);
            if denom.abs() < 1e-10 {
                // Limit at t = ±1/(2β).
                PI / 4.0 * sinc_raw(1.0 / (2.0 * rolloff))
            } else {
                sinc * (PI * rolloff * t).cos() / denom
            }
        })
        .collect()
}

fn sinc_raw(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Root-raised-cosine impulse response (unnormalised), `sps` per symbol.
pub fn rrc_taps(rolloff: f64, sps: usize, span: usize) -> Vec<f64> {
    let half = (span * sps) as isize;
    let b = rolloff;
    (-half..=half)
        .map(|k| {
            let t = k as f64 / sps as f64;
            if t == 0.0 {
                1.0 - b + 4.0 * b / PI
            } else if b > 0.0 && (t.abs() - 1.0 / (4.0 * b)).abs() < 1e-10 {
                b / 2f64.sqrt()
                    * ((1.0 + 2.0 / PI) * (PI / (4.0 * b)).sin() + (1.0 - 2.0 / PI) * (PI / (4.0 * b)).cos())
            } else {
                let num = (PI * t * (1.0 - b)).sin() + 4.0 * b * t * (PI * t * (1.0 + b)).cos();
                let den = PI * t * (1.0 - (4.0 * b * t).powi(2));
                num / den
            }
        })
        .collect()
}

/// Upsample-and-filter with group-delay compensation so the pulse centre
/// lands at `k·sps + sps/2`.
fn interpolate(symbols: &[Complex64], sps: usize, taps: &[f64]) -> Vec<Complex64> {
    let n = symbols.len() * sps;
    let centre = (taps.len() / 2) as isize;
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (k, &s) in symbols.iter().enumerate() {
        let peak = (k * sps + sps / 2) as isize;
        for (j, &h) in taps.iter().enumerate() {
            let idx = peak + j as isize - centre;
            if idx >= 0 && (idx as usize) < n {
                out[idx as usize] += s * h;
            }
        }
    }
    out
}

/// Optical IQ modulation of `carrier` by `baseband`.
///
/// Constant-envelope formats drive a pure phase modulator
/// (`carrier·bb/|bb|`); amplitude formats preserve `|bb|`.
pub fn iq_modulate(
    carrier: &ComplexEnvelope,
    baseband: &ComplexEnvelope,
    modulation: Modulation,
) -> Result<ComplexEnvelope> {
    carrier.require_unit(Unit::SqrtWatt, "iq_modulate carrier")?;
    carrier.require_same_grid(baseband, "iq_modulate")?;
    let samples = carrier
        .samples()
        .iter()
        .zip(baseband.samples())
        .map(|(&c, &b)| {
            if modulation.constant_envelope() {
                let m = b.norm();
                if m > 0.0 {
                    c * (b / m)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            } else {
                c * b
            }
        })
        .collect();
    ComplexEnvelope::new(carrier.grid(), samples, Unit::SqrtWatt)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent shift-register oracle: explicit array of 7 stages,
    /// feedback from stages 7 and 6.
    fn lfsr_oracle(init: u8, n: usize) -> Vec<u8> {
        let mut reg: Vec<u8> = (0..7).map(|i| (init >> i) & 1).collect(); // reg[i] = stage i+1
        let mut out = Vec::new();
        for _ in 0..n {
            let fb = reg[6] ^ reg[5];
            for i in (1..7).rev() {
                reg[i] = reg[i - 1];
            }
            reg[0] = fb;
            out.push(fb);
        }
        out
    }

    #[test]
    fn prbs7_rejects_zero_state() {
        assert!(prbs7(0, 10).is_err());
        assert!(prbs7(0x80, 10).is_err());
    }

    #[test]
    fn prbs7_period_is_127() {
        for init in [1u8, 0x7f, 0x35, 0x40] {
            let s = prbs7(init, 254).unwrap().bits;
            assert!((0..127).all(|i| s[i] == s[i + 127]));
            for p in 1..127 {
                assert!((0..127).any(|i| s[i] != s[i + p]), "period {p} for {init}");
            }
        }
    }

    #[test]
    fn prbs7_balance() {
        let s = prbs7(0x7f, 127).unwrap().bits;
        assert_eq!(s.iter().filter(|&&b| b == 1).count(), 64);
        assert_eq!(s.iter().filter(|&&b| b == 0).count(), 63);
    }

    #[test]
    fn prbs7_matches_oracle() {
        let s = prbs7(0x7f, 7).unwrap().bits;
        assert_eq!(s, lfsr_oracle(0x7f, 7));
        let s = prbs7(0x2a, 500).unwrap().bits;
        assert_eq!(s, lfsr_oracle(0x2a, 500));
    }

    #[test]
    fn prbs7_autocorrelation() {
        let s = prbs7(0x11, 254).unwrap().bits;
        let pm: Vec<f64> = s.iter().map(|&b| sign(b)).collect();
        for lag in 1..127 {
            let r: f64 = (0..127).map(|i| pm[i] * pm[i + lag]).sum::<f64>() / 127.0;
            assert!((r + 1.0 / 127.0).abs() < 1e-12, "lag {lag}: {r}");
        }
    }

    #[test]
    fn qpsk_table() {
        let b = BitStream { bits: vec![0, 0, 0, 1, 1, 0, 1, 1], generator_tag: "t".into() };
        let s = map_symbols(&b, Modulation::Qpsk).unwrap().symbols;
        let r = FRAC_1_SQRT_2;
        assert_eq!(s[0], Complex64::new(r, r));
        assert_eq!(s[1], Complex64::new(r, -r));
        assert_eq!(s[2], Complex64::new(-r, r));
        assert_eq!(s[3], Complex64::new(-r, -r));
        assert!(s.iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn qam16_unit_energy() {
        let a = Modulation::Qam16.alphabet();
        assert_eq!(a.len(), 16);
        let e = a.iter().map(|s| s.norm_sqr()).sum::<f64>() / 16.0;
        assert!((e - 1.0).abs() < 1e-12);
        let q = Modulation::Qpsk.alphabet();
        assert!((q.iter().map(|s| s.norm_sqr()).sum::<f64>() / 4.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gray_neighbours_differ_by_one_bit() {
        for m in [Modulation::Qpsk, Modulation::Qam16] {
            let a = m.alphabet();
            let dmin = a
                .iter()
                .enumerate()
                .flat_map(|(i, x)| a.iter().skip(i + 1).map(move |y| (x - y).norm()))
                .fold(f64::MAX, f64::min);
            for (i, x) in a.iter().enumerate() {
                for (j, y) in a.iter().enumerate() {
                    if i != j && ((x - y).norm() - dmin).abs() < 1e-9 {
                        assert_eq!((i ^ j).count_ones(), 1, "{m:?} {i} {j}");
                    }
                }
            }
        }
    }

    #[test]
    fn indivisible_bits_rejected() {
        let b = BitStream { bits: vec![0, 1, 1], generator_tag: "t".into() };
        assert!(map_symbols(&b, Modulation::Qpsk).is_err());
        assert!(map_symbols(&b, Modulation::Qam16).is_err());
    }

    #[test]
    fn nrz_single_symbol() {
        let s = SymbolStream { symbols: vec![Complex64::new(0.3, -0.2)], modulation: Modulation::Qpsk };
        let x = pulse_shape(&s, 16, PulseShape::Nrz, 1e9).unwrap();
        assert_eq!(x.len(), 16);
        assert!(x.samples().iter().all(|&v| v == Complex64::new(0.3, -0.2)));
        assert!(pulse_shape(&s, 7, PulseShape::Nrz, 1e9).is_err());
    }

    #[test]
    fn nrz_square_wave() {
        let syms: Vec<Complex64> = (0..10).map(|k| Complex64::new(sign((k % 2) as u8), 0.0)).collect();
        let s = SymbolStream { symbols: syms, modulation: Modulation::Qpsk };
        let x = pulse_shape(&s, 8, PulseShape::Nrz, 1e9).unwrap();
        let v = x.real();
        for i in 0..v.len() - 16 {
            assert_eq!(v[i], v[i + 16]);
            assert_eq!(v[i], -v[i + 8]);
        }
    }

    #[test]
    fn raised_cosine_is_isi_free_at_centres() {
        let bits = prbs7(0x5a, 2 * 400).unwrap();
        let s = map_symbols(&bits, Modulation::Qpsk).unwrap();
        let sps = 16;
        let x = pulse_shape(&s, sps, PulseShape::RaisedCosine { rolloff: 0.2 }, 2e9).unwrap();
        for k in SHAPE_SPAN..s.symbols.len() - SHAPE_SPAN {
            let v = x.samples()[k * sps + sps / 2];
            assert!((v - s.symbols[k]).norm() < 1e-3, "symbol {k}");
        }
    }

    #[test]
    fn rrc_with_matched_filter_is_nyquist() {
        let bits = prbs7(0x33, 2 * 300).unwrap();
        let s = map_symbols(&bits, Modulation::Qpsk).unwrap();
        let sps = 8;
        let x = pulse_shape(&s, sps, PulseShape::Rrc { rolloff: 0.5 }, 1e9).unwrap();
        let h = rrc_taps(0.5, sps, SHAPE_SPAN);
        // Matched filter, centred.
        let c = h.len() / 2;
        let y = |n: usize| -> Complex64 {
            (0..h.len())
                .filter_map(|j| (n + c).checked_sub(j).filter(|&i| i < x.len()).map(|i| x.samples()[i] * h[j]))
                .sum()
        };
        let g = y(150 * sps + sps / 2) / s.symbols[150];
        for k in 2 * SHAPE_SPAN..s.symbols.len() - 2 * SHAPE_SPAN {
            let v = y(k * sps + sps / 2) / g;
            // Residual ISI comes from truncating both filters to the shaping span.
            assert!((v - s.symbols[k]).norm() < 5e-3, "symbol {k}: {v}");
        }
    }

    #[test]
    fn nrz_preserves_symbol_energy() {
        let bits = prbs7(0x01, 2 * 50).unwrap();
        let s = map_symbols(&bits, Modulation::Qpsk).unwrap();
        let sps = 12;
        let x = pulse_shape(&s, sps, PulseShape::Nrz, 1e9).unwrap();
        let e_sym: f64 = s.symbols.iter().map(|z| z.norm_sqr()).sum();
        let e_wave: f64 = x.samples().iter().map(|z| z.norm_sqr()).sum::<f64>() / sps as f64;
        assert_eq!(e_sym, e_wave);
    }

    #[test]
    fn iq_modulate_identity_and_phase_sum() {
        let g = TimeGrid::new(1e9, 200).unwrap();
        let w = 2.0 * PI * 3e6;
        let carrier = ComplexEnvelope::new(
            g,
            (0..200).map(|i| Complex64::from_polar(0.7, w * g.time(i))).collect(),
            Unit::SqrtWatt,
        )
        .unwrap();
        let one = ComplexEnvelope::constant(g, Complex64::new(1.0, 0.0), Unit::Volt).unwrap();
        assert_eq!(iq_modulate(&carrier, &one, Modulation::Qpsk).unwrap(), carrier);

        let phim: Vec<f64> = (0..200).map(|i| ((i / 10) % 4) as f64 * PI / 2.0 + PI / 4.0).collect();
        let bb = ComplexEnvelope::new(
            g,
            phim.iter().map(|&p| Complex64::from_polar(1.0, p)).collect(),
            Unit::Volt,
        )
        .unwrap();
        let s = iq_modulate(&carrier, &bb, Modulation::Qpsk).unwrap();
        for (i, z) in s.samples().iter().enumerate() {
            let expect = w * g.time(i) + phim[i];
            let d = (z.arg() - expect + PI).rem_euclid(2.0 * PI) - PI;
            assert!(d.abs() < 1e-9);
            assert!((z.norm() - 0.7).abs() < 1e-12);
        }
        let bad = ComplexEnvelope::constant(TimeGrid::new(1e9, 10).unwrap(), Complex64::new(1.0, 0.0), Unit::Volt)
            .unwrap();
        assert!(iq_modulate(&carrier, &bad, Modulation::Qpsk).is_err());
    }
}
