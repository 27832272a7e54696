//! EVM, BER and constellation-spread metrics.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param, structural, Result};
use crate::tx::{decide, demap_symbols, Modulation};

/// Summary metrics of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricsRecord {
    /// Percent.
    pub evm_rms: f64,
    pub ber: f64,
    pub eye_vertical: f64,
    pub eye_horizontal: f64,
    pub n_symbols: usize,
    /// Quarter turns applied to resolve the four-fold ambiguity.
    pub ambiguity_rotation: u8,
}

/// Data-aided RMS EVM in percent against a per-symbol reference.
///
/// The received set is scaled by one complex factor: its magnitude equalizes
/// RMS power with the reference and its phase is that of the
/// received-to-reference correlation. The result is therefore invariant to
/// any global complex scaling, quarter turns included.
pub fn evm_rms(rx: &[Complex64], reference: &[Complex64]) -> Result<f64> {
    if rx.is_empty() {
        return Err(param("EVM of an empty symbol set"));
    }
    if rx.len() != reference.len() {
        return Err(structural(format!("{} symbols against {} references", rx.len(), reference.len())));
    }
    let p_rx: f64 = rx.iter().map(|s| s.norm_sqr()).sum();
    let p_ref: f64 = reference.iter().map(|s| s.norm_sqr()).sum();
    if !(p_ref > 0.0) {
        return Err(param("reference has zero power"));
    }
    if !(p_rx > 0.0) {
        return Ok(100.0);
    }
    let corr: Complex64 = rx.iter().zip(reference).map(|(r, t)| r * t.conj()).sum();
    let rot = if corr.norm() > 0.0 { corr / corr.norm() } else { Complex64::new(1.0, 0.0) };
    let scale = rot * (p_rx / p_ref).sqrt();
    let err: f64 = rx.iter().zip(reference).map(|(r, t)| (r / scale - t).norm_sqr()).sum();
    Ok(100.0 * (err / p_ref).sqrt())
}

/// Decision-directed RMS EVM in percent: the received set is RMS-normalized
/// to the constellation and each symbol is compared with its nearest point,
/// taking the best of the four quarter-turn rotations.
pub fn evm_decision_directed(rx: &[Complex64], modulation: Modulation) -> Result<f64> {
    if rx.is_empty() {
        return Err(param("EVM of an empty symbol set"));
    }
    let p_rx = rx.iter().map(|s| s.norm_sqr()).sum::<f64>() / rx.len() as f64;
    if !(p_rx > 0.0) {
        return Ok(100.0);
    }
    let g = p_rx.sqrt();
    let mut best = f64::INFINITY;
    for k in 0..4 {
        let rot = Complex64::i().powi(k);
        let (mut err, mut pref) = (0.0, 0.0);
        for &r in rx {
            let x = r * rot / g;
            let d = decide(x, modulation);
            err += (x - d).norm_sqr();
            pref += d.norm_sqr();
        }
        best = best.min(100.0 * (err / pref).sqrt());
    }
    Ok(best)
}

/// Spread of symbol angles modulo π/2: `1 − |mean exp(j4θ)|`. Zero for a
/// settled QPSK constellation and close to one for a rotating one.
pub fn circular_variance_quarter(symbols: &[Complex64]) -> Result<f64> {
    if symbols.is_empty() {
        return Err(param("circular variance of an empty set"));
    }
    let m: Complex64 =
        symbols.iter().filter(|s| s.norm() > 0.0).map(|s| Complex64::from_polar(1.0, 4.0 * s.arg())).sum();
    Ok(1.0 - m.norm() / symbols.len() as f64)
}

/// Outcome of the BER alignment search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerResult {
    pub ber: f64,
    /// Quarter turns applied to the received symbols.
    pub rotation: u8,
    /// Symbol lag of the received stream against the transmitted one.
    pub lag: isize,
    /// False when no alignment reached a BER below 0.4.
    pub aligned: bool,
    pub compared_bits: usize,
}

/// Largest BER accepted as a valid alignment.
pub const BER_ALIGNMENT_LIMIT: f64 = 0.4;

/// Bit error ratio under the best of the alignment group: symbol lags of
/// ±1 and the four quarter-turn rotations, applied through the Gray map.
pub fn ber(rx_bits: &[u8], tx_bits: &[u8], modulation: Modulation) -> Result<BerResult> {
    let k = modulation.bits_per_symbol();
    if !rx_bits.len().is_multiple_of(k) || !tx_bits.len().is_multiple_of(k) {
        return Err(param(format!("bit streams must hold whole {k}-bit symbols")));
    }
    if rx_bits.is_empty() || tx_bits.is_empty() {
        return Err(param("BER of an empty bit stream"));
    }
    let alphabet = modulation.alphabet();
    let to_symbols = |bits: &[u8]| -> Vec<Complex64> {
        bits.chunks(k).map(|c| alphabet[c.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize)]).collect()
    };
    let rx = to_symbols(rx_bits);
    let mut best: Option<BerResult> = None;
    for rotation in 0..4u8 {
        let rot = Complex64::i().powi(rotation as i32);
        let rotated: Vec<Complex64> = rx.iter().map(|s| s * rot).collect();
        let bits = demap_symbols(&rotated, modulation);
        for lag in -1isize..=1 {
            let mut errors = 0usize;
            let mut compared = 0usize;
            for (s, chunk) in bits.chunks(k).enumerate() {
                let j = s as isize + lag;
                if j < 0 || (j as usize) * k >= tx_bits.len() {
                    continue;
                }
                let t = &tx_bits[j as usize * k..j as usize * k + k];
                errors += chunk.iter().zip(t).filter(|(a, b)| a != b).count();
                compared += k;
            }
            if compared == 0 {
                continue;
            }
            let r = errors as f64 / compared as f64;
            if best.is_none_or(|b| r < b.ber) {
                best = Some(BerResult { ber: r, rotation, lag, aligned: r < BER_ALIGNMENT_LIMIT, compared_bits: compared });
            }
        }
    }
    best.ok_or_else(|| param("bit streams do not overlap"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::ComplexNoise;
    use crate::rng::RngStream;
    use crate::tx::{map_symbols, prbs7};

    fn qpsk(n: usize) -> Vec<Complex64> {
        map_symbols(&prbs7(0x3c, 2 * n).unwrap(), Modulation::Qpsk).unwrap().symbols
    }

    #[test]
    fn exact_symbols_have_zero_evm() {
        let s = qpsk(500);
        assert!(evm_rms(&s, &s).unwrap() < 1e-12);
        assert!(evm_decision_directed(&s, Modulation::Qpsk).unwrap() < 1e-12);
        let rot: Vec<Complex64> = s.iter().map(|x| x * Complex64::i()).collect();
        assert!(evm_rms(&rot, &s).unwrap() < 1e-12);
        assert!(evm_decision_directed(&rot, Modulation::Qpsk).unwrap() < 1e-12);
    }

    #[test]
    fn evm_at_20db_snr() {
        let s = qpsk(100_000);
        let mut n = ComplexNoise::for_snr(1.0, 20.0, RngStream::new(9, "evm"));
        let rx: Vec<Complex64> = s.iter().map(|x| x + n.sample()).collect();
        let e = evm_rms(&rx, &s).unwrap();
        assert!((e - 10.0).abs() < 1.0, "{e}");
        let d = evm_decision_directed(&rx, Modulation::Qpsk).unwrap();
        assert!((d - 10.0).abs() < 1.0, "{d}");
    }

    #[test]
    fn evm_rejects_empty() {
        assert!(evm_rms(&[], &[]).is_err());
        assert!(evm_decision_directed(&[], Modulation::Qpsk).is_err());
    }

    #[test]
    fn circular_variance_extremes() {
        let s = qpsk(1000);
        assert!(circular_variance_quarter(&s).unwrap() < 1e-12);
        let spin: Vec<Complex64> = (0..1000).map(|k| Complex64::from_polar(1.0, k as f64 * 0.0123)).collect();
        assert!(circular_variance_quarter(&spin).unwrap() > 0.9);
    }

    #[test]
    fn ber_identical_and_single_flip() {
        let bits = prbs7(0x7f, 10_000).unwrap().bits;
        let r = ber(&bits, &bits, Modulation::Qpsk).unwrap();
        assert_eq!((r.ber, r.rotation, r.lag, r.aligned), (0.0, 0, 0, true));
        let mut flipped = bits.clone();
        flipped[1234] ^= 1;
        assert_eq!(ber(&flipped, &bits, Modulation::Qpsk).unwrap().ber, 1e-4);
    }

    #[test]
    fn ber_resolves_quarter_turn() {
        let bits = prbs7(0x19, 4000).unwrap().bits;
        let s = map_symbols(&crate::tx::BitStream { bits: bits.clone(), generator_tag: "t".into() }, Modulation::Qpsk)
            .unwrap()
            .symbols;
        let rx: Vec<Complex64> = s.iter().map(|x| x * Complex64::i()).collect();
        let rx_bits = demap_symbols(&rx, Modulation::Qpsk);
        assert!(ber(&rx_bits, &bits, Modulation::Qpsk).unwrap().ber == 0.0);
    }

    #[test]
    fn ber_flags_alignment_failure() {
        let a = prbs7(0x01, 2000).unwrap().bits;
        let mut rng = RngStream::new(4, "ber");
        let b: Vec<u8> = (0..2000).map(|_| (rng.next_u64() & 1) as u8).collect();
        let r = ber(&b, &a, Modulation::Qpsk).unwrap();
        assert!(!r.aligned);
    }
}
