//! Loop filter, lock detection and loop-gain design for the Costas loop.
//!
//! The open-loop transfer from residual phase to actuator phase is
//!
//! ```text
//! L(s) = K·(kp·s + ki) / (s·(1 + s/ωp)),   K = slope_pd · dφ/dV
//! ```
//!
//! with `ωp` the phase-shifter thermal pole. Closing the loop gives
//! `s² + ωp(1 + K·kp)·s + ωp·K·ki = 0`, which [`LoopConfig::design`] matches
//! to a target natural frequency and damping.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    /// Feeds the detector output back to the phase shifter when true;
    /// otherwise the heater is held at the bias voltage.
    pub closed: bool,
    /// Proportional gain, V/V.
    pub kp: f64,
    /// Integral gain, V/(V·s).
    pub ki: f64,
    /// +1 or −1.
    pub polarity: f64,
    pub v_ctrl_range: [f64; 2],
    pub v_ctrl_bias: f64,
    /// Pole averaging the detector output ahead of the PI stage, Hz.
    /// `None` feeds the raw detector output.
    pub avg_bw: Option<f64>,
    /// Extra feedback latency on top of the one-sample loop delay, s.
    pub feedback_delay: f64,
    /// Retry once with flipped polarity if the first attempt fails to lock.
    pub auto_polarity: bool,
    /// Lock-detector window, samples.
    pub lock_window: usize,
    /// Lock threshold expressed as an equivalent RMS phase error, rad. The
    /// engine converts it to volts with the detector slope at the operating
    /// amplitude.
    pub lock_threshold_rad: f64,
    /// Consecutive quiet windows needed to declare lock.
    pub lock_hold: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            closed: true,
            kp: 0.0,
            ki: 0.0,
            polarity: 1.0,
            v_ctrl_range: [0.0, 12.0],
            v_ctrl_bias: 6.0,
            avg_bw: Some(20e6),
            feedback_delay: 0.0,
            auto_polarity: true,
            lock_window: 4096,
            lock_threshold_rad: 0.1,
            lock_hold: 8,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.v_ctrl_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(param(format!("v_ctrl range must satisfy min < max, got [{lo}, {hi}]")));
        }
        if !(lo..=hi).contains(&self.v_ctrl_bias) {
            return Err(param(format!("v_ctrl bias {} lies outside [{lo}, {hi}]", self.v_ctrl_bias)));
        }
        if !(self.ki.is_finite() && self.ki >= 0.0) {
            return Err(param(format!("ki must be non-negative, got {}", self.ki)));
        }
        if !self.kp.is_finite() {
            return Err(param("kp must be finite"));
        }
        if self.polarity != 1.0 && self.polarity != -1.0 {
            return Err(param(format!("polarity must be +1 or -1, got {}", self.polarity)));
        }
        if let Some(bw) = self.avg_bw {
            if !(bw.is_finite() && bw > 0.0) {
                return Err(param(format!("avg_bw must be positive, got {bw}")));
            }
        }
        if !(self.feedback_delay.is_finite() && self.feedback_delay >= 0.0) {
            return Err(param("feedback delay must be non-negative"));
        }
        self.lock_config(1.0)?;
        Ok(())
    }

    /// Lock-detector settings for a detector slope of `pd_slope` V/rad.
    pub fn lock_config(&self, pd_slope: f64) -> Result<LockConfig> {
        let cfg = LockConfig { window: self.lock_window, threshold: self.lock_threshold_rad * pd_slope, hold: self.lock_hold };
        cfg.validate()?;
        Ok(cfg)
    }

    /// PI gains placing the closed-loop poles at natural frequency `fn_hz`
    /// and damping `zeta`, given the detector slope at lock (V/rad), the
    /// actuator sensitivity (rad/V) and the actuator pole (Hz).
    ///
    /// Fails when the requested bandwidth is too low for the actuator pole
    /// (it would need a negative proportional gain).
    pub fn design(fn_hz: f64, zeta: f64, pd_slope: f64, ps_sensitivity: f64, ps_pole: f64) -> Result<(f64, f64)> {
        for (name, v) in [("natural frequency", fn_hz), ("damping", zeta), ("actuator pole", ps_pole)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(param(format!("{name} must be positive, got {v}")));
            }
        }
        let k = pd_slope * ps_sensitivity;
        if !(k.is_finite() && k > 0.0) {
            return Err(param(format!("loop gain constant must be positive, got {k}")));
        }
        let (wn, wp) = (2.0 * PI * fn_hz, 2.0 * PI * ps_pole);
        let kp = (2.0 * zeta * wn / wp - 1.0) / k;
        if kp < 0.0 {
            return Err(param(format!(
                "natural frequency {fn_hz} Hz with damping {zeta} needs 2ζωn > ωp ({:.0} Hz minimum)",
                ps_pole / (2.0 * zeta)
            )));
        }
        Ok((kp, wn * wn / (wp * k)))
    }

    /// Largest phase the actuator can apply either side of the bias, rad,
    /// for a linear law with sensitivity `ps_sensitivity` rad/V.
    pub fn actuator_half_range(&self, ps_sensitivity: f64) -> f64 {
        let [lo, hi] = self.v_ctrl_range;
        ps_sensitivity * (hi - self.v_ctrl_bias).min(self.v_ctrl_bias - lo)
    }
}

/// Instantaneous loop record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopState {
    /// Detector sample fed to the filter, V.
    pub v_pd: f64,
    pub integrator: f64,
    pub v_ctrl: f64,
    pub phi_d: f64,
    pub locked: bool,
    /// Ground-truth residual phase, wrapped to (−π/4, π/4], rad.
    pub phi_err_residual: f64,
}

impl LoopState {
    /// Rest state at the bias point.
    pub fn at_bias(cfg: &LoopConfig) -> Self {
        Self { v_pd: 0.0, integrator: 0.0, v_ctrl: cfg.v_ctrl_bias, phi_d: 0.0, locked: false, phi_err_residual: 0.0 }
    }
}

/// One step of the PI filter with level shift and clamp.
///
/// The integrator is frozen while the output sits on a rail and the update
/// would push it further in.
pub fn loop_filter_step(state: &LoopState, v_pd: f64, dt: f64, cfg: &LoopConfig) -> LoopState {
    let [lo, hi] = cfg.v_ctrl_range;
    let e = cfg.polarity * v_pd;
    let delta = cfg.ki * e * dt;
    let prop = cfg.kp * e;
    let winding_up = (state.v_ctrl >= hi && delta > 0.0) || (state.v_ctrl <= lo && delta < 0.0);
    let integrator = if winding_up { state.integrator } else { state.integrator + delta };
    let v_ctrl = (cfg.v_ctrl_bias + prop + integrator).clamp(lo, hi);
    LoopState { v_pd, integrator, v_ctrl, ..*state }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LockConfig {
    /// Samples per detector window.
    pub window: usize,
    /// RMS detector level below which a window counts as locked, V.
    pub threshold: f64,
    /// Consecutive quiet windows needed to declare lock.
    pub hold: usize,
}

impl LockConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 100 {
            return Err(param(format!("lock window must be at least 100 samples, got {}", self.window)));
        }
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(param("lock threshold must be positive"));
        }
        if self.hold == 0 {
            return Err(param("lock hold count must be at least one"));
        }
        Ok(())
    }
}

/// Streaming lock detector over consecutive windows.
#[derive(Debug, Clone)]
pub struct LockDetector {
    cfg: LockConfig,
    acc: f64,
    count: usize,
    quiet: usize,
    locked: bool,
}

impl LockDetector {
    pub fn new(cfg: LockConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, acc: 0.0, count: 0, quiet: 0, locked: false })
    }

    /// Lock verdict after consuming `v`; updates at window boundaries.
    #[inline]
    pub fn push(&mut self, v: f64) -> bool {
        self.acc += v * v;
        self.count += 1;
        if self.count == self.cfg.window {
            let rms = (self.acc / self.count as f64).sqrt();
            if rms < self.cfg.threshold {
                self.quiet += 1;
            } else {
                self.quiet = 0;
            }
            self.locked = self.quiet >= self.cfg.hold;
            self.acc = 0.0;
            self.count = 0;
        }
        self.locked
    }
}

/// Per-sample lock flags for a detector record.
pub fn lock_detector(v_pd: &[f64], cfg: LockConfig) -> Result<Vec<bool>> {
    let mut det = LockDetector::new(cfg)?;
    Ok(v_pd.iter().map(|&v| det.push(v)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> LoopConfig {
        LoopConfig { kp: 2.0, ki: 1e5, ..LoopConfig::default() }
    }

    #[test]
    fn zero_detector_keeps_bias() {
        let c = cfg();
        let mut s = LoopState::at_bias(&c);
        for _ in 0..1000 {
            s = loop_filter_step(&s, 0.0, 1e-9, &c);
        }
        assert_eq!(s.v_ctrl, c.v_ctrl_bias);
    }

    #[test]
    fn integrator_ramps_then_clamps() {
        let c = LoopConfig { kp: 0.0, ki: 1e4, ..LoopConfig::default() };
        let dt = 1e-6;
        let mut s = LoopState::at_bias(&c);
        let mut trace = Vec::new();
        for _ in 0..100_000 {
            s = loop_filter_step(&s, 0.01, dt, &c);
            trace.push(s.v_ctrl);
        }
        // Ramp of ki·0.01 = 100 V/s: 1e-4 V per step.
        for (k, v) in trace.iter().take(1000).enumerate() {
            let want = 6.0 + 100.0 * dt * (k + 1) as f64;
            assert!((v - want).abs() < 1e-9, "step {k}");
        }
        assert_eq!(*trace.last().unwrap(), 12.0);
    }

    #[test]
    fn anti_windup_freezes_integrator() {
        let c = LoopConfig { kp: 0.0, ki: 1e4, ..LoopConfig::default() };
        let s = LoopState { integrator: 6.0, v_ctrl: 12.0, ..LoopState::at_bias(&c) };
        let next = loop_filter_step(&s, 0.05, 1e-6, &c);
        assert_eq!(next.integrator, 6.0);
        assert_eq!(next.v_ctrl, 12.0);
        // Pulling back out of the rail is allowed.
        let back = loop_filter_step(&s, -0.05, 1e-6, &c);
        assert!(back.integrator < 6.0);
    }

    #[test]
    fn design_places_poles() {
        let (slope, sens, fp) = (0.02, PI / 6.0, 50e3);
        let (kp, ki) = LoopConfig::design(250e3, 0.9, slope, sens, fp).unwrap();
        let k = slope * sens;
        let wp = 2.0 * PI * fp;
        let wn2 = wp * k * ki;
        let two_zeta_wn = wp * (1.0 + k * kp);
        assert!((wn2.sqrt() / (2.0 * PI * 250e3) - 1.0).abs() < 1e-12);
        assert!((two_zeta_wn / (2.0 * wn2.sqrt()) - 0.9).abs() < 1e-12);
        assert!(LoopConfig::design(10e3, 0.9, slope, sens, fp).is_err());
    }

    #[test]
    fn lock_detector_cases() {
        let lc = LockConfig { window: 100, threshold: 1e-3, hold: 3 };
        let flags = lock_detector(&[0.0; 1000], lc).unwrap();
        assert!(!flags[298]);
        assert!(flags[299]);
        let saw: Vec<f64> = (0..10_000).map(|k| 0.1 * ((k as f64 * 0.01) % 1.0 - 0.5)).collect();
        assert!(lock_detector(&saw, lc).unwrap().iter().all(|&f| !f));
        assert!(lock_detector(&[0.0; 10], LockConfig { window: 50, ..lc }).is_err());
    }

    #[test]
    fn validation() {
        assert!(LoopConfig { v_ctrl_range: [5.0, 5.0], ..cfg() }.validate().is_err());
        assert!(LoopConfig { ki: -1.0, ..cfg() }.validate().is_err());
        assert!(LoopConfig { polarity: 0.5, ..cfg() }.validate().is_err());
        assert!(cfg().validate().is_ok());
    }
}
