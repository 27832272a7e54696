//! Device characterization sweeps: the phase-shifter interferometer and the
//! phase-detector transfer curve.

use std::f64::consts::{FRAC_PI_4, PI};

use cohrx_core::eic::phase_detector;
use cohrx_core::link::LinkConfig;
use cohrx_core::pic::{PhaseShifter, PicParams};
use cohrx_core::tx::{map_symbols, prbs7};
use cohrx_core::{ComplexEnvelope, Mode, Result, TimeGrid, Unit};
use num_complex::Complex64;
use serde::Serialize;

/// Heater sweep range and step, V.
pub const PS_SWEEP_MAX: f64 = 12.0;
pub const PS_SWEEP_STEP: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsReport {
    pub voltage: Vec<f64>,
    /// Interferometer output power relative to the 0 V value.
    pub power: Vec<f64>,
    pub argmin_voltage: f64,
    pub min_power: f64,
    pub power_at_3v: f64,
    /// First voltage at which the power falls to one half.
    pub half_power_voltage: f64,
}

/// Mach-Zehnder interferometer with the phase shifter in one arm, swept over
/// settled heater voltages.
pub fn characterize_ps(pic: &PicParams) -> Result<PsReport> {
    pic.validate()?;
    // Field ratio of the two arms from the splitter imbalance.
    let b = if pic.mode == Mode::Ideal { 1.0 } else { 10f64.powf(-pic.mmi_imbalance / 20.0) };
    let raw = |v: f64| -> Result<f64> {
        let phi = PhaseShifter::settled(pic, 1e-9, v)?.phase();
        Ok((Complex64::new(1.0, 0.0) + Complex64::from_polar(b, phi)).norm_sqr())
    };
    let p0 = raw(0.0)?;
    let n = (PS_SWEEP_MAX / PS_SWEEP_STEP).round() as usize;
    let voltage: Vec<f64> = (0..=n).map(|k| k as f64 * PS_SWEEP_STEP).collect();
    let power = voltage.iter().map(|&v| raw(v).map(|p| p / p0)).collect::<Result<Vec<f64>>>()?;
    let (imin, &min_power) =
        power.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("sweep is not empty");
    let half_power_voltage = voltage
        .windows(2)
        .zip(power.windows(2))
        .find(|(_, p)| p[0] >= 0.5 && p[1] < 0.5)
        .map_or(f64::NAN, |(v, p)| v[0] + (p[0] - 0.5) / (p[0] - p[1]) * (v[1] - v[0]));
    Ok(PsReport {
        argmin_voltage: voltage[imin],
        min_power,
        power_at_3v: raw(3.0)? / p0,
        half_power_voltage,
        voltage,
        power,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdReport {
    /// Phase error wrapped to [−π/4, π/4), rad.
    pub phi_err: Vec<f64>,
    pub v_pd: Vec<f64>,
    /// Small-signal slope from a fit over |φ| < `SLOPE_FIT_RANGE`, V/rad.
    pub slope: f64,
    pub intercept: f64,
    /// Period of the characteristic, rad.
    pub period: f64,
    /// RMS of v(φ) + v(−φ) away from the wrap points, V.
    pub odd_residual: f64,
    /// RMS of the detector output, V.
    pub v_pd_rms: f64,
}

pub const SLOPE_FIT_RANGE: f64 = 0.2;
/// Candidate periods searched by the period fit, rad.
pub const PERIOD_SEARCH: (f64, f64) = (1.0, 2.2);
const PERIOD_BINS: usize = 1024;
/// Distance from the sawtooth discontinuities excluded from the symmetry
/// check, rad.
const ODD_MARGIN: f64 = 0.05;

fn wrap_quarter(x: f64) -> f64 {
    (x + FRAC_PI_4).rem_euclid(PI / 2.0) - FRAC_PI_4
}

/// Drives the detector with unit-amplitude QPSK rotating at the configured
/// frequency offset and samples its output late in each symbol, once the
/// detector has settled.
pub fn characterize_pd(cfg: &LinkConfig) -> Result<PdReport> {
    cfg.validate()?;
    let n_sym = cfg.duration_symbols;
    let sps = cfg.sps;
    let grid = TimeGrid::new(cfg.sample_rate(), n_sym * sps)?;
    let bits = prbs7(cfg.prbs_init, 2 * n_sym)?;
    let symbols = map_symbols(&bits, cohrx_core::tx::Modulation::Qpsk)?.symbols;
    let w = 2.0 * PI * cfg.laser.offset;
    let field: Vec<Complex64> = (0..n_sym * sps)
        .map(|n| {
            let s = symbols[n / sps];
            Complex64::from_polar(1.0, s.arg() + w * grid.time(n))
        })
        .collect();
    let i = ComplexEnvelope::from_real(grid, &field.iter().map(|z| z.re).collect::<Vec<_>>(), Unit::Volt)?;
    let q = ComplexEnvelope::from_real(grid, &field.iter().map(|z| z.im).collect::<Vec<_>>(), Unit::Volt)?;
    let v = phase_detector(&i, &q, &cfg.eic)?.v_pd.real();

    let at = 3 * sps / 4;
    // Input angle relative to the detector's zero at π/4, unwrapped.
    let alpha: Vec<f64> = (0..n_sym).map(|k| symbols[k].arg() - FRAC_PI_4 + w * grid.time(k * sps + at)).collect();
    let v_pd: Vec<f64> = (0..n_sym).map(|k| v[k * sps + at]).collect();
    let phi_err: Vec<f64> = alpha.iter().map(|&a| wrap_quarter(a)).collect();

    let (slope, intercept) = fit_line(&phi_err, &v_pd, SLOPE_FIT_RANGE);
    let period = fit_period(&alpha, &v_pd);
    let odd_residual = odd_residual(&phi_err, &v_pd);
    let v_pd_rms = (v_pd.iter().map(|x| x * x).sum::<f64>() / v_pd.len() as f64).sqrt();
    Ok(PdReport { phi_err, v_pd, slope, intercept, period, odd_residual, v_pd_rms })
}

/// Least-squares line through the points with |x| < range.
fn fit_line(x: &[f64], y: &[f64], range: f64) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(a, _)| a.abs() < range).map(|(&a, &b)| (a, b)).collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Shift minimizing the mismatch between the curve binned over one turn and
/// its shifted copy, searched over `PERIOD_SEARCH` and refined by a parabola
/// through the best three shifts.
fn fit_period(alpha: &[f64], v: &[f64]) -> f64 {
    let width = 2.0 * PI / PERIOD_BINS as f64;
    let mut sum = vec![0.0; PERIOD_BINS];
    let mut count = vec![0usize; PERIOD_BINS];
    for (&a, &y) in alpha.iter().zip(v) {
        let b = ((a.rem_euclid(2.0 * PI) / width) as usize).min(PERIOD_BINS - 1);
        sum[b] += y;
        count[b] += 1;
    }
    let curve: Vec<Option<f64>> = sum.iter().zip(&count).map(|(s, &c)| (c > 0).then(|| s / c as f64)).collect();
    let mse = |m: usize| -> f64 {
        let (mut e, mut n) = (0.0, 0usize);
        for b in 0..PERIOD_BINS {
            if let (Some(x), Some(y)) = (curve[b], curve[(b + m) % PERIOD_BINS]) {
                e += (x - y).powi(2);
                n += 1;
            }
        }
        if n == 0 {
            f64::INFINITY
        } else {
            e / n as f64
        }
    };
    let lo = (PERIOD_SEARCH.0 / width).ceil() as usize;
    let hi = (PERIOD_SEARCH.1 / width).floor() as usize;
    let errs: Vec<f64> = (lo..=hi).map(mse).collect();
    let (k, _) = errs.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("search range is not empty");
    let mut m = (lo + k) as f64;
    if k > 0 && k + 1 < errs.len() {
        let (a, b, c) = (errs[k - 1], errs[k], errs[k + 1]);
        let den = a - 2.0 * b + c;
        if den > 0.0 {
            m += 0.5 * (a - c) / den;
        }
    }
    m * width
}

/// RMS of `v(φ) + v(−φ)`, with the mirrored value interpolated from the
/// sorted scatter.
fn odd_residual(phi: &[f64], v: &[f64]) -> f64 {
    let mut pts: Vec<(f64, f64)> = phi.iter().copied().zip(v.iter().copied()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let interp = |x: f64| -> Option<f64> {
        let j = pts.partition_point(|p| p.0 < x);
        if j == 0 || j == pts.len() {
            return None;
        }
        let (a, b) = (pts[j - 1], pts[j]);
        let f = if b.0 > a.0 { (x - a.0) / (b.0 - a.0) } else { 0.0 };
        Some(a.1 + f * (b.1 - a.1))
    };
    let (mut e, mut n) = (0.0, 0usize);
    for &(x, y) in &pts {
        if x.abs() < FRAC_PI_4 - ODD_MARGIN {
            if let Some(m) = interp(-x) {
                e += (y + m).powi(2);
                n += 1;
            }
        }
    }
    if n == 0 {
        f64::NAN
    } else {
        (e / n as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cohrx_core::eic::EicParams;

    #[test]
    fn ideal_interferometer_follows_cos_squared() {
        let r = characterize_ps(&PicParams::ideal()).unwrap();
        assert_eq!(r.power[0], 1.0);
        for (v, p) in r.voltage.iter().zip(&r.power) {
            let want = (PI * v / 12.0).cos().powi(2);
            assert!((p - want).abs() < 1e-12, "{v}: {p} vs {want}");
        }
        assert!((r.argmin_voltage - 6.0).abs() < 0.05);
        assert!((r.power_at_3v - 0.5).abs() < 1e-6);
        assert!((r.half_power_voltage - 3.0).abs() < 1e-3);
    }

    #[test]
    fn imbalance_leaves_a_finite_null() {
        let r = characterize_ps(&PicParams::default()).unwrap();
        assert!(r.min_power > 0.0 && r.min_power < 1e-5, "{}", r.min_power);
        assert!((r.argmin_voltage - 6.0).abs() < 0.05);
    }

    fn pd_config(offset: f64, eic: EicParams) -> LinkConfig {
        let mut c = LinkConfig { baud: 1e9, sps: 32, duration_symbols: 4000, eic, ..LinkConfig::default() };
        c.laser.offset = offset;
        c.loop_.closed = false;
        c
    }

    #[test]
    fn ideal_detector_is_a_quarter_period_sawtooth() {
        let r = characterize_pd(&pd_config(1e6, EicParams::ideal())).unwrap();
        // Within the fit range the characteristic bends as sin φ, so the
        // regression slope sits just under the slope at lock.
        let bent = 0.16 * (1.0 - SLOPE_FIT_RANGE.powi(2) / 10.0);
        assert!((r.slope - bent).abs() < 2e-4, "{}", r.slope);
        assert!((r.period - PI / 2.0).abs() < 0.01, "{}", r.period);
        assert!(r.odd_residual < 1e-6, "{}", r.odd_residual);
    }

    #[test]
    fn zero_offset_gives_no_output() {
        let r = characterize_pd(&pd_config(0.0, EicParams::default())).unwrap();
        assert!(r.v_pd_rms < 5e-3, "{}", r.v_pd_rms);
    }

    #[test]
    fn period_fit_on_a_synthetic_curve() {
        let alpha: Vec<f64> = (0..20_000).map(|k| k as f64 * 0.00123).collect();
        let v: Vec<f64> = alpha.iter().map(|a| (3.0 * a).sin()).collect();
        assert!((fit_period(&alpha, &v) - 2.0 * PI / 3.0).abs() < 0.01);
    }
}
