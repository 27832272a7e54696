//! Behavioural model of the SiGe carrier-phase-recovery chip: input
//! amplifier chain, limiting amplifiers, delay cells, the cross-correlator
//! phase detector and the I/Q output buffers.
//!
//! The detector computes `κ·[D(I)·LA(Q) − D(Q)·LA(I)]` where `LA` is the
//! limiter and `D` the delay cell that matches its group delay. For inputs
//! `(cos(π/4+φ), sin(π/4+φ))` this is a rising saw-tooth in `φ` of period π/2
//! once κ is negative; κ is calibrated numerically against the static
//! characteristic so the slope at `φ = 0` equals `pd_gain`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::filter::{delay_record, FractionalDelay, MaybePole};
use crate::noise::ComplexNoise;
use crate::rng::RngStream;
use crate::signal::{ComplexEnvelope, TimeGrid, Unit};
use crate::Mode;

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Reference noise temperature, K.
pub const T0: f64 = 290.0;

/// Half-length of the streaming fractional-delay interpolators.
const STREAM_DELAY_HALF_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EicParams {
    /// External RF amplifier gain, dB.
    pub frontend_gain: f64,
    /// Balun insertion loss, dB.
    pub balun_loss: f64,
    /// Bandwidth of the amplifier and balun chain, Hz. `None` is flat.
    pub frontend_bw: Option<f64>,
    /// Noise figure of the external amplifier, dB.
    pub noise_figure: f64,
    /// Overrides the thermal noise with a per-sample I/Q SNR at the
    /// front-end input, dB.
    pub snr_db: Option<f64>,
    pub input_bw: f64,
    pub la_gain: f64,
    pub la_bw: f64,
    /// Limiter group delay, s.
    pub la_delay: f64,
    /// Single-ended saturation level, V (±0.2 V is 400 mVpp differential).
    pub la_sat: f64,
    /// Delay-cell group delay, s.
    pub delay: f64,
    pub delay_bw: f64,
    pub delay_gain: f64,
    pub mult_bw: f64,
    pub mult_gain: f64,
    pub adder_bw: f64,
    pub adder_gain: f64,
    pub output_bw: f64,
    /// Input amplitude that drives the output buffers to full scale
    /// (`la_sat`), V.
    pub output_full_scale: f64,
    /// Phase-detector slope at lock for unit-amplitude inputs, V/rad.
    pub pd_gain: f64,
    /// Smallest peak-to-peak input the detector handles, V.
    pub min_input_swing: f64,
    /// Window over which the input swing is measured, s.
    pub swing_window: f64,
    pub mode: Mode,
}

impl Default for EicParams {
    fn default() -> Self {
        Self {
            frontend_gain: 25.0,
            balun_loss: 3.0,
            frontend_bw: None,
            noise_figure: 6.0,
            snr_db: None,
            input_bw: 38e9,
            la_gain: 41.0,
            la_bw: 27.5e9,
            la_delay: 28e-12,
            la_sat: 0.2,
            delay: 28.1e-12,
            delay_bw: 19.2e9,
            delay_gain: 1.8,
            mult_bw: 20.89e9,
            mult_gain: 2.75,
            adder_bw: 24e9,
            adder_gain: 5.2,
            output_bw: 36e9,
            output_full_scale: 0.1,
            pd_gain: 0.16,
            min_input_swing: 0.05,
            swing_window: 4e-9,
            mode: Mode::Physical,
        }
    }
}

fn db20(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

impl EicParams {
    pub fn ideal() -> Self {
        Self { mode: Mode::Ideal, ..Self::default() }
    }

    fn is_ideal(&self) -> bool {
        self.mode == Mode::Ideal
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("frontend_gain", self.frontend_gain),
            ("balun_loss", self.balun_loss),
            ("la_gain", self.la_gain),
            ("delay_gain", self.delay_gain),
            ("mult_gain", self.mult_gain),
            ("adder_gain", self.adder_gain),
            ("noise_figure", self.noise_figure),
        ] {
            if !v.is_finite() {
                return Err(param(format!("{name} must be finite")));
            }
        }
        for (name, v) in [
            ("input_bw", self.input_bw),
            ("la_bw", self.la_bw),
            ("la_sat", self.la_sat),
            ("delay_bw", self.delay_bw),
            ("mult_bw", self.mult_bw),
            ("adder_bw", self.adder_bw),
            ("output_bw", self.output_bw),
            ("output_full_scale", self.output_full_scale),
            ("pd_gain", self.pd_gain),
            ("swing_window", self.swing_window),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(param(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("la_delay", self.la_delay), ("delay", self.delay), ("min_input_swing", self.min_input_swing)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(param(format!("{name} must be non-negative, got {v}")));
            }
        }
        if let Some(bw) = self.frontend_bw {
            if !(bw.is_finite() && bw > 0.0) {
                return Err(param(format!("frontend_bw must be positive, got {bw}")));
            }
        }
        if let Some(snr) = self.snr_db {
            if snr.is_nan() {
                return Err(param("snr_db is NaN"));
            }
        }
        Ok(())
    }

    /// Net linear voltage gain of amplifier and balun.
    pub fn frontend_linear_gain(&self) -> f64 {
        db20(self.frontend_gain - self.balun_loss)
    }

    /// Thermal noise variance per quadrature across `load` over the
    /// simulation bandwidth `fs/2`, referred to the amplifier input, V².
    pub fn thermal_noise_variance(&self, load: f64, sample_rate: f64) -> f64 {
        let f = 10f64.powf(self.noise_figure / 10.0);
        4.0 * BOLTZMANN * T0 * load * sample_rate / 2.0 * f
    }

    fn bw(&self, f: f64) -> Option<f64> {
        (!self.is_ideal()).then_some(f)
    }

    fn gain(&self, db: f64) -> f64 {
        if self.is_ideal() {
            1.0
        } else {
            db20(db)
        }
    }

    fn output_gain(&self) -> f64 {
        self.la_sat / self.output_full_scale
    }
}

/// Peak-to-peak tracker over consecutive fixed-length blocks.
#[derive(Debug, Clone)]
pub struct SwingGate {
    len: usize,
    count: usize,
    min: [f64; 2],
    max: [f64; 2],
    threshold: f64,
}

impl SwingGate {
    pub fn new(p: &EicParams, dt: f64) -> Self {
        let len = ((p.swing_window / dt).round() as usize).max(1);
        Self { len, count: 0, min: [f64::MAX; 2], max: [f64::MIN; 2], threshold: p.min_input_swing }
    }

    pub fn window_len(&self) -> usize {
        self.len
    }

    /// Returns the block verdict when a block completes.
    #[inline]
    pub fn push(&mut self, i: f64, q: f64) -> Option<bool> {
        for (k, v) in [i, q].into_iter().enumerate() {
            self.min[k] = self.min[k].min(v);
            self.max[k] = self.max[k].max(v);
        }
        self.count += 1;
        if self.count < self.len {
            return None;
        }
        let pp = (self.max[0] - self.min[0]).max(self.max[1] - self.min[1]);
        self.count = 0;
        self.min = [f64::MAX; 2];
        self.max = [f64::MIN; 2];
        Some(pp > 0.0 && pp >= self.threshold)
    }
}

/// Amplified I/Q with the input-swing validity flag.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontendOutput {
    pub i: ComplexEnvelope,
    pub q: ComplexEnvelope,
    pub valid: Vec<bool>,
}

fn require_volt_pair(i: &ComplexEnvelope, q: &ComplexEnvelope, what: &str) -> Result<()> {
    i.require_unit(Unit::Volt, what)?;
    q.require_unit(Unit::Volt, what)?;
    i.require_same_grid(q, what)
}

fn real_env(grid: TimeGrid, v: impl IntoIterator<Item = f64>) -> ComplexEnvelope {
    ComplexEnvelope::from_parts(grid, v.into_iter().map(|x| Complex64::new(x, 0.0)).collect(), Unit::Volt)
}

/// Per-block validity applied to every sample of the block.
fn block_validity(i: &[f64], q: &[f64], gate: &mut SwingGate) -> Vec<bool> {
    let mut valid = Vec::with_capacity(i.len());
    let mut pending = 0;
    for (&a, &b) in i.iter().zip(q) {
        pending += 1;
        if let Some(ok) = gate.push(a, b) {
            valid.extend(std::iter::repeat_n(ok, pending));
            pending = 0;
        }
    }
    if pending > 0 {
        // Short tail block: judge it on its own samples.
        let n = i.len();
        let tail = |x: &[f64]| {
            let s = &x[n - pending..];
            s.iter().cloned().fold(f64::MIN, f64::max) - s.iter().cloned().fold(f64::MAX, f64::min)
        };
        let pp = tail(i).max(tail(q));
        valid.extend(std::iter::repeat_n(pp > 0.0 && pp >= gate.threshold, pending));
    }
    valid
}

/// External amplifier and balun: linear gain, optional bandwidth limit, and
/// the minimum-swing flag evaluated on the amplified signal.
pub fn frontend(i: &ComplexEnvelope, q: &ComplexEnvelope, p: &EicParams) -> Result<FrontendOutput> {
    require_volt_pair(i, q, "frontend")?;
    p.validate()?;
    let dt = i.grid().dt();
    let g = p.frontend_linear_gain();
    let mut pi = MaybePole::<f64>::new(p.frontend_bw, dt)?;
    let mut pq = MaybePole::<f64>::new(p.frontend_bw, dt)?;
    let oi: Vec<f64> = i.samples().iter().map(|x| pi.step(g * x.re)).collect();
    let oq: Vec<f64> = q.samples().iter().map(|x| pq.step(g * x.re)).collect();
    let valid = block_validity(&oi, &oq, &mut SwingGate::new(p, dt));
    Ok(FrontendOutput { i: real_env(i.grid(), oi), q: real_env(q.grid(), oq), valid })
}

/// Streaming limiting amplifier.
#[derive(Debug, Clone)]
pub struct Limiter {
    ideal: bool,
    sat: f64,
    gain: f64,
    pole: MaybePole<f64>,
    delay: Option<FractionalDelay<f64>>,
}

impl Limiter {
    pub fn new(p: &EicParams, dt: f64) -> Result<Self> {
        let ideal = p.is_ideal();
        let delay = if ideal { None } else { Some(FractionalDelay::new(p.la_delay / dt, STREAM_DELAY_HALF_LEN)?) };
        Ok(Self { ideal, sat: p.la_sat, gain: db20(p.la_gain), pole: MaybePole::new(p.bw(p.la_bw), dt)?, delay })
    }

    /// Memoryless transfer.
    #[inline]
    pub fn static_out(&self, x: f64) -> f64 {
        if self.ideal {
            if x > 0.0 {
                self.sat
            } else if x < 0.0 {
                -self.sat
            } else {
                0.0
            }
        } else {
            self.sat * (self.gain * x / self.sat).tanh()
        }
    }

    #[inline]
    pub fn step(&mut self, x: f64) -> f64 {
        let y = self.pole.step(self.static_out(x));
        match &mut self.delay {
            Some(d) => d.step(y),
            None => y,
        }
    }

    fn bulk_latency(&self) -> usize {
        self.delay.as_ref().map_or(0, |d| d.extra_latency())
    }
}

/// Limiting amplifier on a record. The physical model includes the
/// limiter's group delay.
pub fn limiting_amp(x: &ComplexEnvelope, p: &EicParams) -> Result<ComplexEnvelope> {
    x.require_unit(Unit::Volt, "limiting_amp")?;
    p.validate()?;
    let dt = x.grid().dt();
    let mut la = Limiter::new(p, dt)?;
    la.delay = None;
    let y: Vec<Complex64> = x.samples().iter().map(|s| Complex64::new(la.step(s.re), 0.0)).collect();
    let y = if p.is_ideal() { y } else { delay_record(&y, p.la_delay / dt)? };
    Ok(ComplexEnvelope::from_parts(x.grid(), y, Unit::Volt))
}

/// Streaming delay cell.
#[derive(Debug, Clone)]
pub struct DelayCell {
    gain: f64,
    pole: MaybePole<f64>,
    delay: Option<FractionalDelay<f64>>,
}

impl DelayCell {
    pub fn new(p: &EicParams, dt: f64) -> Result<Self> {
        let delay = if p.is_ideal() { None } else { Some(FractionalDelay::new(p.delay / dt, STREAM_DELAY_HALF_LEN)?) };
        Ok(Self { gain: p.gain(p.delay_gain), pole: MaybePole::new(p.bw(p.delay_bw), dt)?, delay })
    }

    #[inline]
    pub fn static_out(&self, x: f64) -> f64 {
        self.gain * x
    }

    #[inline]
    pub fn step(&mut self, x: f64) -> f64 {
        let y = match &mut self.delay {
            Some(d) => d.step(x),
            None => x,
        };
        self.pole.step(self.gain * y)
    }

    fn bulk_latency(&self) -> usize {
        self.delay.as_ref().map_or(0, |d| d.extra_latency())
    }
}

/// Delay cell on a record. In ideal mode it is a wire; the physical model
/// delays by `delay`, applies its pole and its gain.
pub fn delay_cell(x: &ComplexEnvelope, p: &EicParams) -> Result<ComplexEnvelope> {
    x.require_unit(Unit::Volt, "delay_cell")?;
    p.validate()?;
    if p.is_ideal() {
        return Ok(x.clone());
    }
    let dt = x.grid().dt();
    let delayed = delay_record(x.samples(), p.delay / dt)?;
    let mut cell = DelayCell::new(p, dt)?;
    cell.delay = None;
    Ok(ComplexEnvelope::from_parts(
        x.grid(),
        delayed.iter().map(|s| Complex64::new(cell.step(s.re), 0.0)).collect(),
        Unit::Volt,
    ))
}

/// Streaming cross-correlator phase detector, from the chip input pins to
/// the adder output.
#[derive(Debug, Clone)]
pub struct PhaseDetector {
    input: [MaybePole<f64>; 2],
    la: [Limiter; 2],
    dc: [DelayCell; 2],
    mult: [MaybePole<f64>; 2],
    adder: MaybePole<f64>,
    mult_gain: f64,
    adder_gain: f64,
    kappa: f64,
}

impl PhaseDetector {
    pub fn new(p: &EicParams, dt: f64) -> Result<Self> {
        p.validate()?;
        let mut pd = Self {
            input: [MaybePole::new(p.bw(p.input_bw), dt)?, MaybePole::new(p.bw(p.input_bw), dt)?],
            la: [Limiter::new(p, dt)?, Limiter::new(p, dt)?],
            dc: [DelayCell::new(p, dt)?, DelayCell::new(p, dt)?],
            mult: [MaybePole::new(p.bw(p.mult_bw), dt)?, MaybePole::new(p.bw(p.mult_bw), dt)?],
            adder: MaybePole::new(p.bw(p.adder_bw), dt)?,
            mult_gain: p.gain(p.mult_gain),
            adder_gain: p.gain(p.adder_gain),
            kappa: 1.0,
        };
        pd.kappa = p.pd_gain / pd.static_slope();
        Ok(pd)
    }

    /// Calibration constant.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// DC characteristic of the uncalibrated detector.
    fn static_raw(&self, i: f64, q: f64) -> f64 {
        let a = self.dc[0].static_out(i) * self.la[1].static_out(q);
        let b = self.dc[1].static_out(q) * self.la[0].static_out(i);
        self.adder_gain * self.mult_gain * (a - b)
    }

    fn static_slope(&self) -> f64 {
        let h = 1e-6;
        let at = |phi: f64| {
            let x = std::f64::consts::FRAC_PI_4 + phi;
            self.static_raw(x.cos(), x.sin())
        };
        (at(h) - at(-h)) / (2.0 * h)
    }

    /// Calibrated DC output for a static input pair.
    pub fn static_response(&self, i: f64, q: f64) -> f64 {
        self.kappa * self.static_raw(i, q)
    }

    /// Whole samples of interpolator latency beyond the modelled group
    /// delays.
    pub fn bulk_latency(&self) -> usize {
        self.la[0].bulk_latency().max(self.dc[0].bulk_latency())
    }

    #[inline]
    pub fn step(&mut self, i: f64, q: f64) -> f64 {
        let i = self.input[0].step(i);
        let q = self.input[1].step(q);
        let a = self.mult[0].step(self.mult_gain * self.dc[0].step(i) * self.la[1].step(q));
        let b = self.mult[1].step(self.mult_gain * self.dc[1].step(q) * self.la[0].step(i));
        self.kappa * self.adder.step(self.adder_gain * (a - b))
    }
}

/// Phase-detector output with the input validity flag.
#[derive(Debug, Clone, PartialEq)]
pub struct PdOutput {
    pub v_pd: ComplexEnvelope,
    pub valid: Vec<bool>,
}

/// Phase detector on a record of chip inputs. The interpolators' bulk
/// latency is removed so only the modelled group delays remain.
pub fn phase_detector(i: &ComplexEnvelope, q: &ComplexEnvelope, p: &EicParams) -> Result<PdOutput> {
    require_volt_pair(i, q, "phase_detector")?;
    let dt = i.grid().dt();
    let mut pd = PhaseDetector::new(p, dt)?;
    let lat = pd.bulk_latency();
    let n = i.len();
    let (li, lq) = (i.samples()[n - 1].re, q.samples()[n - 1].re);
    let ext_i = i.samples().iter().map(|s| s.re).chain(std::iter::repeat_n(li, lat));
    let ext_q = q.samples().iter().map(|s| s.re).chain(std::iter::repeat_n(lq, lat));
    let v: Vec<f64> = ext_i.zip(ext_q).map(|(a, b)| pd.step(a, b)).skip(lat).collect();
    let valid = block_validity(&i.real(), &q.real(), &mut SwingGate::new(p, dt));
    Ok(PdOutput { v_pd: real_env(i.grid(), v), valid })
}

/// Output buffers producing I_O and Q_O.
pub fn cpr_buffer(i: &ComplexEnvelope, q: &ComplexEnvelope, p: &EicParams) -> Result<(ComplexEnvelope, ComplexEnvelope)> {
    require_volt_pair(i, q, "cpr_buffer")?;
    p.validate()?;
    let dt = i.grid().dt();
    let g = p.output_gain();
    let run = |x: &ComplexEnvelope| -> Result<ComplexEnvelope> {
        let mut pole = MaybePole::<f64>::new(p.bw(p.output_bw), dt)?;
        Ok(real_env(x.grid(), x.samples().iter().map(|s| pole.step(g * s.re))))
    };
    Ok((run(i)?, run(q)?))
}

/// One sample of chip outputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChipSample {
    /// Chip input after amplification, before the input stage.
    pub i_in: f64,
    pub q_in: f64,
    pub v_pd: f64,
    pub i_o: f64,
    pub q_o: f64,
    /// Verdict of the most recent completed swing window.
    pub valid: bool,
}

/// Sample-stepped chip including the external amplifier chain and its
/// input-referred noise.
#[derive(Debug, Clone)]
pub struct CprChip {
    gain: f64,
    frontend: [MaybePole<f64>; 2],
    noise: Option<ComplexNoise>,
    gate: SwingGate,
    valid: bool,
    pd: PhaseDetector,
    buffer_in: [MaybePole<f64>; 2],
    buffer_out: [MaybePole<f64>; 2],
    buffer_gain: f64,
}

impl CprChip {
    /// `noise_variance` is the per-quadrature input-referred noise
    /// variance in V²; zero disables noise.
    pub fn new(p: &EicParams, dt: f64, noise_variance: f64, rng: &RngStream) -> Result<Self> {
        p.validate()?;
        if !(noise_variance.is_finite() && noise_variance >= 0.0) {
            return Err(param(format!("noise variance must be non-negative, got {noise_variance}")));
        }
        Ok(Self {
            gain: p.frontend_linear_gain(),
            frontend: [MaybePole::new(p.frontend_bw, dt)?, MaybePole::new(p.frontend_bw, dt)?],
            noise: (noise_variance > 0.0).then(|| ComplexNoise::new(2.0 * noise_variance, rng.clone())),
            gate: SwingGate::new(p, dt),
            valid: false,
            pd: PhaseDetector::new(p, dt)?,
            buffer_in: [MaybePole::new(p.bw(p.input_bw), dt)?, MaybePole::new(p.bw(p.input_bw), dt)?],
            buffer_out: [MaybePole::new(p.bw(p.output_bw), dt)?, MaybePole::new(p.bw(p.output_bw), dt)?],
            buffer_gain: p.output_gain(),
        })
    }

    pub fn phase_detector(&self) -> &PhaseDetector {
        &self.pd
    }

    #[inline]
    pub fn step(&mut self, i: f64, q: f64) -> ChipSample {
        let n = self.noise.as_mut().map_or(Complex64::new(0.0, 0.0), |n| n.sample());
        let i_in = self.frontend[0].step(self.gain * (i + n.re));
        let q_in = self.frontend[1].step(self.gain * (q + n.im));
        if let Some(ok) = self.gate.push(i_in, q_in) {
            self.valid = ok;
        }
        let v_pd = self.pd.step(i_in, q_in);
        let i_o = self.buffer_out[0].step(self.buffer_gain * self.buffer_in[0].step(i_in));
        let q_o = self.buffer_out[1].step(self.buffer_gain * self.buffer_in[1].step(q_in));
        ChipSample { i_in, q_in, v_pd, i_o, q_o, valid: self.valid }
    }
}
