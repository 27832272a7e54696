//! Silicon-photonic coherent receiver: grating couplers, thermo-optic phase
//! shifter on the LO arm, 90° hybrid, germanium photodiodes and the 50 Ω
//! loads of the balanced pairs.
//!
//! Ideal mode is normalized so that with `|S| = |LO| = 1` the single-ended
//! photocurrents are `1 ± cos Δφ`, `1 ± sin Δφ` and the balanced outputs are
//! exactly `cos Δφ` and `sin Δφ`, where `Δφ = arg S − arg LO'` and `LO'` is the
//! LO after the phase shifter.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::filter::{MaybePole, SinglePole};
use crate::rng::RngStream;
use crate::signal::{ComplexEnvelope, Unit};
use crate::Mode;

/// Elementary charge, C.
pub const ELECTRON_CHARGE: f64 = 1.602_176_634e-19;

/// Phase-versus-voltage law of the heater.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsLaw {
    /// `φ = π·v/Vπ`.
    #[default]
    Linear,
    /// `φ = π·(v/Vπ)²`, dissipated heater power proportional to `v²`.
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PicParams {
    /// Grating coupler insertion loss, dB.
    pub vgc_insertion_loss: f64,
    /// Excess loss per 1×2 MMI stage, dB. The hybrid has two stages.
    pub mmi_excess_loss: f64,
    /// Power imbalance between the outputs of each balanced pair, dB.
    pub mmi_imbalance: f64,
    pub ps_vpi: f64,
    /// Thermal bandwidth of the phase shifter, Hz.
    pub ps_speed: f64,
    pub ps_law: PsLaw,
    /// A/W.
    pub pd_responsivity: f64,
    pub pd_bandwidth: f64,
    /// A.
    pub pd_dark: f64,
    pub shot_noise: bool,
    /// Ω.
    pub load: f64,
    /// Deviation of the hybrid's internal quarter-wave rotation, rad.
    pub quadrature_error: f64,
    pub mode: Mode,
}

impl Default for PicParams {
    fn default() -> Self {
        Self {
            vgc_insertion_loss: 4.0,
            mmi_excess_loss: 0.04,
            mmi_imbalance: 0.02,
            ps_vpi: 6.0,
            ps_speed: 50e3,
            ps_law: PsLaw::Linear,
            pd_responsivity: 0.45,
            pd_bandwidth: 50e9,
            pd_dark: 15e-9,
            shot_noise: false,
            load: 50.0,
            quadrature_error: 0.0,
            mode: Mode::Physical,
        }
    }
}

impl PicParams {
    pub fn ideal() -> Self {
        Self { mode: Mode::Ideal, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ps_vpi.is_finite() && self.ps_vpi > 0.0) {
            return Err(param(format!("Vπ must be positive, got {}", self.ps_vpi)));
        }
        if !(self.pd_responsivity > 0.0 && self.pd_responsivity <= 1.2) {
            return Err(param(format!("responsivity must lie in (0, 1.2] A/W, got {}", self.pd_responsivity)));
        }
        for (name, v) in [
            ("vgc_insertion_loss", self.vgc_insertion_loss),
            ("mmi_excess_loss", self.mmi_excess_loss),
            ("mmi_imbalance", self.mmi_imbalance),
            ("pd_dark", self.pd_dark),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(param(format!("{name} must be non-negative, got {v}")));
            }
        }
        for (name, v) in [("ps_speed", self.ps_speed), ("pd_bandwidth", self.pd_bandwidth), ("load", self.load)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(param(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.quadrature_error.is_finite() {
            return Err(param("quadrature error must be finite"));
        }
        Ok(())
    }

    fn is_ideal(&self) -> bool {
        self.mode == Mode::Ideal
    }

    /// Field transmission of one grating coupler.
    pub fn vgc_amplitude(&self) -> f64 {
        if self.is_ideal() {
            1.0
        } else {
            10f64.powf(-self.vgc_insertion_loss / 20.0)
        }
    }

    /// Phase of the shifter for a settled heater voltage.
    pub fn ps_phase(&self, v: f64) -> f64 {
        let r = v / self.ps_vpi;
        match self.ps_law {
            PsLaw::Linear => PI * r,
            PsLaw::Quadratic => PI * r * r,
        }
    }

    /// Volts of heater drive per radian at the bias point `v`.
    pub fn ps_sensitivity(&self, v: f64) -> f64 {
        match self.ps_law {
            PsLaw::Linear => PI / self.ps_vpi,
            PsLaw::Quadratic => 2.0 * PI * v / (self.ps_vpi * self.ps_vpi),
        }
    }

    /// Volts across the load per ampere of balanced current.
    pub fn transimpedance(&self) -> f64 {
        if self.is_ideal() {
            0.5
        } else {
            self.load
        }
    }
}

/// Peak balanced output voltage for signal and LO field amplitudes at the
/// chip facets, ignoring bandwidth limits, dark current and noise.
pub fn balanced_amplitude(p: &PicParams, s_amp: f64, lo_amp: f64) -> f64 {
    let c = HybridCoeffs::new(p);
    let r = if p.is_ideal() { 2.0 } else { p.pd_responsivity };
    let g = p.vgc_amplitude();
    let out = |phase: f64| {
        let e = c.apply(Complex64::new(s_amp * g, 0.0), Complex64::from_polar(lo_amp * g, -phase));
        r * (e[0].norm_sqr() - e[1].norm_sqr()) * p.transimpedance()
    };
    (out(0.0) - out(PI)) / 2.0
}

/// Grating-coupler insertion loss.
pub fn vgc_couple(x: &ComplexEnvelope, p: &PicParams) -> Result<ComplexEnvelope> {
    x.require_unit(Unit::SqrtWatt, "vgc_couple")?;
    p.validate()?;
    Ok(x.scaled(p.vgc_amplitude()))
}

/// Streaming thermo-optic phase shifter.
#[derive(Debug, Clone)]
pub struct PhaseShifter {
    pole: SinglePole<f64>,
    params: PicParams,
}

impl PhaseShifter {
    pub fn new(p: &PicParams, dt: f64) -> Result<Self> {
        p.validate()?;
        Ok(Self { pole: SinglePole::new(p.ps_speed, dt)?, params: *p })
    }

    /// Starts from a heater already settled at `v`.
    pub fn settled(p: &PicParams, dt: f64, v: f64) -> Result<Self> {
        p.validate()?;
        Ok(Self { pole: SinglePole::with_state(p.ps_speed, dt, v)?, params: *p })
    }

    /// Advances the heater by one sample and returns the optical phase.
    #[inline]
    pub fn step(&mut self, v_ctrl: f64) -> f64 {
        self.params.ps_phase(self.pole.step(v_ctrl))
    }

    /// Current optical phase without advancing.
    pub fn phase(&self) -> f64 {
        self.pole.state().map_or(0.0, |v| self.params.ps_phase(v))
    }
}

/// Applies `exp{jφ_d(t)}` with `φ_d` driven by the low-passed heater voltage.
pub fn thermo_ps(x: &ComplexEnvelope, v_ctrl: &ComplexEnvelope, p: &PicParams) -> Result<ComplexEnvelope> {
    x.require_unit(Unit::SqrtWatt, "thermo_ps")?;
    v_ctrl.require_unit(Unit::Volt, "thermo_ps control")?;
    x.require_same_grid(v_ctrl, "thermo_ps")?;
    let mut ps = PhaseShifter::new(p, x.grid().dt())?;
    let samples =
        x.samples().iter().zip(v_ctrl.samples()).map(|(&s, v)| s * Complex64::from_polar(1.0, ps.step(v.re))).collect();
    Ok(ComplexEnvelope::from_parts(x.grid(), samples, Unit::SqrtWatt))
}

/// The four hybrid output fields.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridOutputs {
    pub e6: ComplexEnvelope,
    pub e7: ComplexEnvelope,
    pub e8: ComplexEnvelope,
    pub e9: ComplexEnvelope,
}

/// Per-sample hybrid transfer `E_k = a_k·S + b_k·LO`.
#[derive(Debug, Clone, Copy)]
pub struct HybridCoeffs {
    s: [f64; 4],
    lo: [Complex64; 4],
}

impl HybridCoeffs {
    pub fn new(p: &PicParams) -> Self {
        let j = Complex64::i();
        if p.is_ideal() {
            let h = 0.5;
            return Self { s: [h; 4], lo: [Complex64::new(h, 0.0), Complex64::new(-h, 0.0), j * h, -j * h] };
        }
        let loss = 10f64.powf(-2.0 * p.mmi_excess_loss / 20.0);
        let hi = 10f64.powf(p.mmi_imbalance / 40.0);
        let lo_amp = 1.0 / hi;
        let amp = [hi, lo_amp, hi, lo_amp].map(|a| 0.5 * loss * a);
        let quad = j * Complex64::from_polar(1.0, p.quadrature_error);
        Self { s: amp, lo: [amp[0].into(), (-amp[1]).into(), quad * amp[2], -quad * amp[3]] }
    }

    #[inline]
    pub fn apply(&self, s: Complex64, lo: Complex64) -> [Complex64; 4] {
        std::array::from_fn(|k| s * self.s[k] + lo * self.lo[k])
    }
}

/// 90° optical hybrid.
pub fn hybrid90(s: &ComplexEnvelope, lo: &ComplexEnvelope, p: &PicParams) -> Result<HybridOutputs> {
    s.require_unit(Unit::SqrtWatt, "hybrid90 signal")?;
    lo.require_unit(Unit::SqrtWatt, "hybrid90 LO")?;
    s.require_same_grid(lo, "hybrid90")?;
    p.validate()?;
    let c = HybridCoeffs::new(p);
    let mut out: [Vec<Complex64>; 4] = std::array::from_fn(|_| Vec::with_capacity(s.len()));
    for (&a, &b) in s.samples().iter().zip(lo.samples()) {
        for (o, e) in out.iter_mut().zip(c.apply(a, b)) {
            o.push(e);
        }
    }
    let [e6, e7, e8, e9] = out.map(|v| ComplexEnvelope::from_parts(s.grid(), v, Unit::SqrtWatt));
    Ok(HybridOutputs { e6, e7, e8, e9 })
}

/// Streaming germanium photodiode.
#[derive(Debug, Clone)]
pub struct Photodiode {
    ideal: bool,
    responsivity: f64,
    dark: f64,
    pole: MaybePole<f64>,
    shot: Option<(RngStream, f64)>,
}

impl Photodiode {
    pub fn new(p: &PicParams, dt: f64, rng: &RngStream) -> Result<Self> {
        p.validate()?;
        if p.is_ideal() {
            return Ok(Self { ideal: true, responsivity: 2.0, dark: 0.0, pole: MaybePole::wire(), shot: None });
        }
        // Two-sided shot noise 2qIB over the simulation bandwidth fs/2.
        let shot = p.shot_noise.then(|| (rng.clone(), ELECTRON_CHARGE / dt));
        Ok(Self {
            ideal: false,
            responsivity: p.pd_responsivity,
            dark: p.pd_dark,
            pole: MaybePole::new(Some(p.pd_bandwidth), dt)?,
            shot,
        })
    }

    #[inline]
    pub fn step(&mut self, e: Complex64) -> f64 {
        let mut i = self.pole.step(self.responsivity * e.norm_sqr()) + self.dark;
        if let Some((rng, q_fs)) = &mut self.shot {
            i += (*q_fs * i.max(0.0)).sqrt() * rng.standard_normal();
        }
        if self.ideal {
            debug_assert_eq!(self.dark, 0.0);
        }
        i
    }
}

/// Photocurrent of one diode.
pub fn photodetect(e: &ComplexEnvelope, p: &PicParams, rng: &RngStream) -> Result<ComplexEnvelope> {
    e.require_unit(Unit::SqrtWatt, "photodetect")?;
    let mut pd = Photodiode::new(p, e.grid().dt(), rng)?;
    let samples = e.samples().iter().map(|&x| Complex64::new(pd.step(x), 0.0)).collect();
    Ok(ComplexEnvelope::from_parts(e.grid(), samples, Unit::Ampere))
}

/// Outputs of the balanced pairs plus the single-ended currents.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancedOutputs {
    pub i_i: ComplexEnvelope,
    pub q_i: ComplexEnvelope,
    pub raw_currents: [ComplexEnvelope; 4],
    /// Phase applied by the shifter, rad.
    pub phi_d: Vec<f64>,
}

/// One sample of the receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcrSample {
    pub i_i: f64,
    pub q_i: f64,
    pub currents: [f64; 4],
    pub phi_d: f64,
}

/// Sample-stepped receiver front end used inside the feedback loop.
#[derive(Debug, Clone)]
pub struct IcrModel {
    coupler: f64,
    shifter: PhaseShifter,
    hybrid: HybridCoeffs,
    diodes: [Photodiode; 4],
    zt: f64,
}

impl IcrModel {
    pub fn new(p: &PicParams, dt: f64, rng: &RngStream) -> Result<Self> {
        Self::build(p, dt, rng, PhaseShifter::new(p, dt)?)
    }

    /// Receiver whose heater is already settled at `v_ctrl`.
    pub fn settled(p: &PicParams, dt: f64, rng: &RngStream, v_ctrl: f64) -> Result<Self> {
        Self::build(p, dt, rng, PhaseShifter::settled(p, dt, v_ctrl)?)
    }

    fn build(p: &PicParams, dt: f64, rng: &RngStream, shifter: PhaseShifter) -> Result<Self> {
        let mut diodes = Vec::with_capacity(4);
        for k in 1..=4 {
            diodes.push(Photodiode::new(p, dt, &rng.derive(&format!("pd{k}")))?);
        }
        Ok(Self {
            coupler: p.vgc_amplitude(),
            shifter,
            hybrid: HybridCoeffs::new(p),
            diodes: diodes.try_into().expect("four diodes"),
            zt: p.transimpedance(),
        })
    }

    #[inline]
    pub fn step(&mut self, s: Complex64, lo: Complex64, v_ctrl: f64) -> IcrSample {
        let phi_d = self.shifter.step(v_ctrl);
        let lo = lo * self.coupler * Complex64::from_polar(1.0, phi_d);
        let fields = self.hybrid.apply(s * self.coupler, lo);
        let mut currents = [0.0; 4];
        for ((c, d), e) in currents.iter_mut().zip(&mut self.diodes).zip(fields) {
            *c = d.step(e);
        }
        IcrSample {
            i_i: (currents[0] - currents[1]) * self.zt,
            q_i: (currents[2] - currents[3]) * self.zt,
            currents,
            phi_d,
        }
    }
}

/// Full receiver: couplers, phase shifter on the LO, hybrid and balanced
/// detection.
pub fn icr_receive(
    s: &ComplexEnvelope,
    lo: &ComplexEnvelope,
    v_ctrl: &ComplexEnvelope,
    p: &PicParams,
    rng: &RngStream,
) -> Result<BalancedOutputs> {
    s.require_unit(Unit::SqrtWatt, "icr_receive signal")?;
    lo.require_unit(Unit::SqrtWatt, "icr_receive LO")?;
    v_ctrl.require_unit(Unit::Volt, "icr_receive control")?;
    s.require_same_grid(lo, "icr_receive")?;
    s.require_same_grid(v_ctrl, "icr_receive")?;
    let grid = s.grid();
    let mut icr = IcrModel::new(p, grid.dt(), rng)?;
    let n = s.len();
    let (mut i_i, mut q_i, mut phi_d) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let mut raw: [Vec<Complex64>; 4] = std::array::from_fn(|_| Vec::with_capacity(n));
    for ((&a, &b), v) in s.samples().iter().zip(lo.samples()).zip(v_ctrl.samples()) {
        let o = icr.step(a, b, v.re);
        i_i.push(Complex64::new(o.i_i, 0.0));
        q_i.push(Complex64::new(o.q_i, 0.0));
        phi_d.push(o.phi_d);
        for (r, c) in raw.iter_mut().zip(o.currents) {
            r.push(Complex64::new(c, 0.0));
        }
    }
    Ok(BalancedOutputs {
        i_i: ComplexEnvelope::from_parts(grid, i_i, Unit::Volt),
        q_i: ComplexEnvelope::from_parts(grid, q_i, Unit::Volt),
        raw_currents: raw.map(|r| ComplexEnvelope::from_parts(grid, r, Unit::Ampere)),
        phi_d,
    })
}
