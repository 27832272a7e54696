//! Property tests for the invariants the models promise.

use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64;
use proptest::prelude::*;

use cohrx_core::dsp::cpr::offline_cpr;
use cohrx_core::dsp::metrics::{ber, evm_rms};
use cohrx_core::eic::{limiting_amp, phase_detector, EicParams, PhaseDetector};
use cohrx_core::filter::single_pole_lowpass;
use cohrx_core::noise::wiener_phase;
use cohrx_core::optics::{fiber, ChannelSpec, DriftModel};
use cohrx_core::pic::{hybrid90, icr_receive, PicParams, PsLaw};
use cohrx_core::tx::{demap_symbols, map_symbols, prbs7, Modulation};
use cohrx_core::{ComplexEnvelope, RngStream, TimeGrid, Unit};

fn envelope(values: Vec<Complex64>, unit: Unit) -> ComplexEnvelope {
    ComplexEnvelope::new(TimeGrid::new(32e9, values.len()).unwrap(), values, unit).unwrap()
}

fn complex() -> impl Strategy<Value = Complex64> {
    (-3.0..3.0f64, -3.0..3.0f64).prop_map(|(re, im)| Complex64::new(re, im))
}

fn qpsk(seed: u8, n: usize) -> Vec<Complex64> {
    map_symbols(&prbs7(seed.max(1) & 0x7f | 1, 2 * n).unwrap(), Modulation::Qpsk).unwrap().symbols
}

/// Uniform sweep of the S phase over one turn with a fixed LO.
fn phase_sweep(n: usize, s_amp: f64, lo_amp: f64) -> (ComplexEnvelope, ComplexEnvelope) {
    let s = (0..n).map(|k| Complex64::from_polar(s_amp, 2.0 * PI * k as f64 / n as f64)).collect();
    (envelope(s, Unit::SqrtWatt), envelope(vec![Complex64::new(lo_amp, 0.0); n], Unit::SqrtWatt))
}

proptest! {
    #[test]
    fn ideal_hybrid_conserves_power(pairs in prop::collection::vec((complex(), complex()), 1..64)) {
        let (s, lo): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let out = hybrid90(&envelope(s.clone(), Unit::SqrtWatt), &envelope(lo.clone(), Unit::SqrtWatt), &PicParams::ideal()).unwrap();
        for k in 0..s.len() {
            let p_in = s[k].norm_sqr() + lo[k].norm_sqr();
            let p_out: f64 = [&out.e6, &out.e7, &out.e8, &out.e9].iter().map(|e| e.samples()[k].norm_sqr()).sum();
            prop_assert!((p_out - p_in).abs() <= 1e-12 * p_in.max(1e-300));
        }
    }

    #[test]
    fn balanced_outputs_have_no_dc(s_amp in 0.01..3.0f64, lo_amp in 0.01..3.0f64) {
        let (s, lo) = phase_sweep(1024, s_amp, lo_amp);
        let v = ComplexEnvelope::constant(s.grid(), Complex64::new(0.0, 0.0), Unit::Volt).unwrap();
        let out = icr_receive(&s, &lo, &v, &PicParams::ideal(), &RngStream::new(1, "icr")).unwrap();
        let mean = |e: &ComplexEnvelope| e.samples().iter().map(|c| c.re).sum::<f64>() / e.len() as f64;
        prop_assert!(mean(&out.i_i).abs() < 1e-9);
        prop_assert!(mean(&out.q_i).abs() < 1e-9);
    }

    #[test]
    fn quadrature_outputs_are_uncorrelated(s_amp in 0.01..3.0f64, lo_amp in 0.01..3.0f64) {
        let (s, lo) = phase_sweep(1024, s_amp, lo_amp);
        let v = ComplexEnvelope::constant(s.grid(), Complex64::new(0.0, 0.0), Unit::Volt).unwrap();
        let out = icr_receive(&s, &lo, &v, &PicParams::ideal(), &RngStream::new(1, "icr")).unwrap();
        let corr: f64 = out.i_i.samples().iter().zip(out.q_i.samples()).map(|(a, b)| a.re * b.re).sum::<f64>() / 1024.0;
        prop_assert!(corr.abs() < 1e-9);
    }

    #[test]
    fn linear_shifter_is_linear_in_voltage(v in 0.0..12.0f64, alpha in 0.0..2.0f64) {
        let p = PicParams { ps_law: PsLaw::Linear, ..PicParams::default() };
        prop_assert!((p.ps_phase(alpha * v) - alpha * p.ps_phase(v)).abs() < 1e-12);
    }

    #[test]
    fn detector_is_odd_and_quarter_periodic(phi in -PI..PI) {
        let pd = PhaseDetector::new(&EicParams::ideal(), 1.0 / 32e9).unwrap();
        let at = |x: f64| pd.static_response((FRAC_PI_4 + x).cos(), (FRAC_PI_4 + x).sin());
        prop_assert!((at(phi + PI / 2.0) - at(phi)).abs() < 1e-6);
        prop_assert!((at(-phi) + at(phi)).abs() < 1e-6);
    }

    #[test]
    fn detector_slope_scales_with_amplitude(a in 0.05..5.0f64) {
        let pd = PhaseDetector::new(&EicParams::ideal(), 1.0 / 32e9).unwrap();
        let h = 1e-6;
        let at = |amp: f64, x: f64| pd.static_response(amp * (FRAC_PI_4 + x).cos(), amp * (FRAC_PI_4 + x).sin());
        let slope = |amp: f64| (at(amp, h) - at(amp, -h)) / (2.0 * h);
        prop_assert!((slope(a) - a * slope(1.0)).abs() < 1e-6 * a.max(1.0));
        // Zero crossings do not move with amplitude: the lock points at
        // even multiples of π/4 are zeros, the odd ones are sign flips.
        for k in -4..4 {
            let x = k as f64 * FRAC_PI_4;
            if k % 2 == 0 {
                prop_assert!(at(a, x).abs() < 1e-9);
            } else {
                prop_assert!(at(a, x - 1e-3) > 0.0 && at(a, x + 1e-3) < 0.0);
            }
        }
    }

    #[test]
    fn evm_ignores_quarter_turns_and_complex_scale(
        seed in 1u8..128,
        k in 0i32..4,
        gain in 0.1..10.0f64,
        angle in -PI..PI,
        noise in prop::collection::vec(complex(), 256),
    ) {
        let tx = qpsk(seed, 256);
        let rx: Vec<Complex64> = tx.iter().zip(&noise).map(|(t, n)| t + n * 0.05).collect();
        let base = evm_rms(&rx, &tx).unwrap();
        let turn = Complex64::i().powi(k);
        let turned: Vec<Complex64> = rx.iter().map(|s| s * turn).collect();
        let turned_ref: Vec<Complex64> = tx.iter().map(|s| s * turn).collect();
        prop_assert!((evm_rms(&turned, &turned_ref).unwrap() - base).abs() < 1e-9);
        let scale = Complex64::from_polar(gain, angle);
        let scaled: Vec<Complex64> = rx.iter().map(|s| s * scale).collect();
        prop_assert!((evm_rms(&scaled, &tx).unwrap() - base).abs() < 1e-9);
    }

    #[test]
    fn ber_is_symmetric(a in prop::collection::vec(0u8..2, 2..400), flips in prop::collection::vec(any::<bool>(), 400)) {
        let n = a.len() / 2 * 2;
        let a = &a[..n];
        let b: Vec<u8> = a.iter().zip(&flips).map(|(&x, &f)| x ^ u8::from(f)).collect();
        let ab = ber(a, &b, Modulation::Qpsk).unwrap();
        let ba = ber(&b, a, Modulation::Qpsk).unwrap();
        prop_assert_eq!(ab.ber, ba.ber);
    }

    #[test]
    fn ber_is_invariant_under_rotation(seed in 1u8..128, k in 0i32..4) {
        let bits = prbs7(seed, 512).unwrap();
        let s = map_symbols(&bits, Modulation::Qpsk).unwrap().symbols;
        let turn = Complex64::i().powi(k);
        let rotated: Vec<Complex64> = s.iter().map(|x| x * turn).collect();
        let r = ber(&demap_symbols(&rotated, Modulation::Qpsk), &bits.bits, Modulation::Qpsk).unwrap();
        prop_assert_eq!(r.ber, 0.0);
    }

    #[test]
    fn map_then_demap_round_trips(seed in 1u8..128, n in 1usize..200, qam in any::<bool>()) {
        let m = if qam { Modulation::Qam16 } else { Modulation::Qpsk };
        let bits = prbs7(seed, n * m.bits_per_symbol()).unwrap();
        let s = map_symbols(&bits, m).unwrap();
        prop_assert_eq!(demap_symbols(&s.symbols, m), bits.bits);
    }

    #[test]
    fn lowpass_is_linear(
        x in prop::collection::vec(complex(), 1..64),
        y in prop::collection::vec(complex(), 64),
        a in -2.0..2.0f64,
        b in -2.0..2.0f64,
        f in 1e8..1e10f64,
    ) {
        let y = &y[..x.len()];
        let combo: Vec<Complex64> = x.iter().zip(y).map(|(p, q)| p * a + q * b).collect();
        let fx = single_pole_lowpass(&envelope(x.clone(), Unit::Volt), f).unwrap();
        let fy = single_pole_lowpass(&envelope(y.to_vec(), Unit::Volt), f).unwrap();
        let fc = single_pole_lowpass(&envelope(combo, Unit::Volt), f).unwrap();
        for k in 0..x.len() {
            let expect = fx.samples()[k] * a + fy.samples()[k] * b;
            prop_assert!((fc.samples()[k] - expect).norm() <= 1e-12 * (1.0 + expect.norm()));
        }
    }

    #[test]
    fn drifting_fiber_is_a_pure_phase_channel(x in prop::collection::vec(complex(), 1..64), seed in any::<u64>()) {
        let spec = ChannelSpec { drift: DriftModel::default_random_walk(), loss: 0.0, ..ChannelSpec::default() };
        let y = fiber(&envelope(x.clone(), Unit::SqrtWatt), &spec, &RngStream::new(seed, "fiber")).unwrap();
        for (a, b) in x.iter().zip(y.samples()) {
            prop_assert!((a.norm() - b.norm()).abs() <= 1e-12 * a.norm().max(1e-300));
        }
    }

    #[test]
    fn cpr_removes_any_constant_rotation(seed in 1u8..128, theta in -PI..PI) {
        let tx = qpsk(seed, 512);
        let rx: Vec<Complex64> = tx.iter().map(|s| s * Complex64::from_polar(1.0, theta)).collect();
        let out = offline_cpr(&rx, 64).unwrap();
        prop_assert!(evm_rms(&out.symbols, &tx).unwrap() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn wiener_increments_are_uncorrelated(seed in any::<u64>()) {
        let n = 100_000;
        let phi = wiener_phase(TimeGrid::new(32e9, n + 1).unwrap(), 100e3, &RngStream::new(seed, "laser")).unwrap();
        let d: Vec<f64> = phi.windows(2).map(|w| w[1] - w[0]).collect();
        let var = d.iter().map(|x| x * x).sum::<f64>() / n as f64;
        let lag1 = d.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (n - 1) as f64 / var;
        prop_assert!(lag1.abs() < 3.0 / (n as f64).sqrt(), "{lag1}");
    }
}

/// Physical blocks with unbounded bandwidth, unit stage gains and a very
/// steep limiter behave like their ideal counterparts.
fn nearly_ideal() -> EicParams {
    let wide = 1e18;
    EicParams {
        la_gain: 400.0,
        la_delay: 0.0,
        delay: 0.0,
        delay_gain: 0.0,
        mult_gain: 0.0,
        adder_gain: 0.0,
        input_bw: wide,
        la_bw: wide,
        delay_bw: wide,
        mult_bw: wide,
        adder_bw: wide,
        output_bw: wide,
        ..EicParams::default()
    }
}

#[test]
fn physical_blocks_converge_to_ideal() {
    let n = 2048;
    let x: Vec<Complex64> = (0..n).map(|k| Complex64::new((k as f64 * 0.37).sin() * 0.3 + 1e-3, 0.0)).collect();
    let x = envelope(x, Unit::Volt);
    let ideal = limiting_amp(&x, &EicParams::ideal()).unwrap();
    let phys = limiting_amp(&x, &nearly_ideal()).unwrap();
    for (a, b) in ideal.samples().iter().zip(phys.samples()) {
        assert!((a - b).norm() < 1e-3, "{a} vs {b}");
    }

    let phases: Vec<f64> = (0..n).map(|k| 2.0 * PI * k as f64 / n as f64 + 0.01).collect();
    let i = envelope(phases.iter().map(|p| Complex64::new(p.cos(), 0.0)).collect(), Unit::Volt);
    let q = envelope(phases.iter().map(|p| Complex64::new(p.sin(), 0.0)).collect(), Unit::Volt);
    let ideal = phase_detector(&i, &q, &EicParams::ideal()).unwrap();
    let phys = phase_detector(&i, &q, &nearly_ideal()).unwrap();
    for (a, b) in ideal.v_pd.samples().iter().zip(phys.v_pd.samples()) {
        assert!((a - b).norm() < 1e-3, "{a} vs {b}");
    }
}
