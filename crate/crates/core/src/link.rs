//! Sample-stepped link engine: transmitter, homodyne channel, receiver PIC,
//! CPR chip and loop filter closed through the phase shifter, followed by
//! symbol recovery and metrics.
//!
//! The signal path and the LO come from one laser. The ground-truth phase
//! of the signal carrier relative to the LO is `θ(t)`; the shifter applies
//! `φ_d(t)` to the LO, so the detectors see `φ_m(t) + ψ(t)` with residual
//! `ψ = θ − φ_d`. The loop drives `ψ` to a multiple of π/2.

use std::collections::VecDeque;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::costas::{loop_filter_step, LockDetector, LoopConfig, LoopState};
use crate::dsp::cpr::{offline_cpr, wrap_quarter};
use crate::dsp::eye::eye_metrics;
use crate::dsp::ffe::{apply_ffe_waveform, lms_ffe, FfeConfig, FfeStatus};
use crate::dsp::metrics::{ber, circular_variance_quarter, evm_decision_directed, evm_rms, MetricsRecord};
use crate::dsp::timing::{align, sample_symbols, symbol_timing};
use crate::eic::{CprChip, EicParams};
use crate::error::{param, Error, Result};
use crate::filter::{delay_record, MaybePole};
use crate::optics::{fiber, laser_field, split_3db, ChannelSpec, DriftModel, LaserSpec};
use crate::pic::{balanced_amplitude, IcrModel, PicParams};
use crate::rng::RngStream;
use crate::signal::{ComplexEnvelope, TimeGrid, Unit};
use crate::tx::{demap_symbols, iq_modulate, map_symbols, prbs7, pulse_shape, Modulation, PulseShape, SymbolStream};
use crate::Mode;

/// Automatic PI design from a target closed-loop response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopDesign {
    /// When true, `kp` and `ki` are computed here and the values in the
    /// loop section are ignored.
    pub auto: bool,
    pub natural_frequency: f64,
    pub damping: f64,
}

impl Default for LoopDesign {
    fn default() -> Self {
        Self { auto: true, natural_frequency: 1e6, damping: 0.9 }
    }
}

/// Which waveform the constellation is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CapturePoint {
    /// The chip's buffered I_O / Q_O outputs.
    #[default]
    Chip,
    /// The amplified receiver outputs at the chip input pins.
    Icr,
}

/// Offline processing applied to the captured waveform.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostConfig {
    /// Fourth-power carrier recovery window, symbols.
    pub cpr_window: Option<usize>,
    pub ffe: Option<FfeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub modulation: Modulation,
    pub baud: f64,
    pub sps: usize,
    pub pulse: PulseShape,
    pub duration_symbols: usize,
    /// Initial state of the PRBS-7 register.
    pub prbs_init: u8,
    pub seed: u64,
    pub laser: LaserSpec,
    pub channel: ChannelSpec,
    pub pic: PicParams,
    pub eic: EicParams,
    #[serde(rename = "loop")]
    pub loop_: LoopConfig,
    pub design: LoopDesign,
    pub capture: CapturePoint,
    pub post: PostConfig,
    /// Samples between stored points of the monitoring traces.
    pub decimation: usize,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            modulation: Modulation::Qpsk,
            baud: 2e9,
            sps: 16,
            pulse: PulseShape::Nrz,
            duration_symbols: 100_000,
            prbs_init: 0x7f,
            seed: 1,
            laser: LaserSpec::default(),
            channel: ChannelSpec { drift: DriftModel::default_random_walk(), ..ChannelSpec::default() },
            pic: PicParams::default(),
            eic: EicParams::default(),
            loop_: LoopConfig::default(),
            design: LoopDesign::default(),
            capture: CapturePoint::Chip,
            post: PostConfig::default(),
            decimation: 16,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.baud.is_finite() && self.baud > 0.0) {
            return Err(param(format!("baud must be positive, got {}", self.baud)));
        }
        if self.sps < 8 || !self.sps.is_multiple_of(2) {
            return Err(param(format!("sps must be even and at least 8, got {}", self.sps)));
        }
        if self.duration_symbols < 256 {
            return Err(param(format!("need at least 256 symbols, got {}", self.duration_symbols)));
        }
        if self.decimation == 0 {
            return Err(param("decimation must be at least 1"));
        }
        self.laser.validate()?;
        self.channel.validate()?;
        self.pic.validate()?;
        self.eic.validate()?;
        self.loop_.validate()?;
        if self.post.cpr_window == Some(0) {
            return Err(param("CPR window must be at least one symbol"));
        }
        self.check_frequency_offset()
    }

    pub fn sample_rate(&self) -> f64 {
        self.baud * self.sps as f64
    }

    pub fn duration(&self) -> f64 {
        self.duration_symbols as f64 / self.baud
    }

    /// A static frequency offset in closed loop is only accepted if the
    /// phase ramp over the run fits within the actuator range.
    fn check_frequency_offset(&self) -> Result<()> {
        if !self.loop_.closed || self.laser.offset == 0.0 {
            return Ok(());
        }
        let ramp = 2.0 * PI * self.laser.offset.abs() * self.duration();
        let [lo, hi] = self.loop_.v_ctrl_range;
        let bias = self.pic.ps_phase(self.loop_.v_ctrl_bias);
        let reach = (self.pic.ps_phase(hi) - bias).abs().min((bias - self.pic.ps_phase(lo)).abs());
        if ramp > reach {
            return Err(Error::Config(format!(
                "frequency offset of {} Hz ramps the phase by {ramp:.1} rad over the run, beyond the \
                 {reach:.1} rad the phase shifter can follow; frequency acquisition through the chip's \
                 SSB-mixer path is not modelled",
                self.laser.offset
            )));
        }
        Ok(())
    }
}

/// Outcome of the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoopStatus {
    OpenLoop,
    Locked,
    NotLocked,
    /// The loop oscillates: the residual grew steadily or the control
    /// voltage swings between its rails. The gain is beyond the stability
    /// limit.
    Unstable,
}

/// Decimated monitoring traces. Point `k` is sample `k·decimation`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Waveforms {
    pub decimation: usize,
    pub time: Vec<f64>,
    pub i_o: Vec<f64>,
    pub q_o: Vec<f64>,
    pub v_pd: Vec<f64>,
    pub v_ctrl: Vec<f64>,
    pub phi_d: Vec<f64>,
    /// Ground-truth residual `θ − φ_d`, unwrapped, rad.
    pub phi_err: Vec<f64>,
    pub locked: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    #[serde(flatten)]
    pub record: MetricsRecord,
    pub status: LoopStatus,
    pub locked: bool,
    /// Start of the final locked stretch, symbols.
    pub lock_time_symbols: Option<f64>,
    /// Decision-directed EVM of the final symbols, percent.
    pub evm_decision_directed: f64,
    pub ber_aligned: bool,
    /// `1 − |mean exp(j4θ)|` of the raw symbol angles.
    pub circular_variance: f64,
    /// Blind fourth-power estimate of the raw constellation rotation away
    /// from the QPSK decision points, rad in (−π/4, π/4].
    pub constellation_phase: f64,
    /// RMS of the residual phase modulo π/2 over the analysed segment, rad.
    pub residual_phase_rms: f64,
    /// Correlation of the sampled in-phase output with `cos φ_m`.
    pub corr_io: f64,
    /// Fraction of samples with adequate chip input swing.
    pub valid_fraction: f64,
    pub timing_offset: usize,
    pub ffe_status: Option<FfeStatus>,
    pub ffe_tap_drift: Option<f64>,
    /// Detector slope at the operating amplitude, V/rad.
    pub pd_slope: f64,
    pub polarity: f64,
    pub polarity_flipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    /// Configuration as run, with designed loop gains filled in.
    pub config: LinkConfig,
    pub seed: u64,
    pub waveforms: Waveforms,
    /// Final symbols after all processing, in constellation units.
    pub constellation: Vec<Complex64>,
    /// Final full-rate waveform over the analysed segment, for eye plots.
    pub eye_waveform: Vec<Complex64>,
    pub metrics: LinkMetrics,
}

/// Link quantities computed once and shared by polarity retries.
struct Prepared {
    grid: TimeGrid,
    bits: Vec<u8>,
    symbols: Vec<Complex64>,
    s: Vec<Complex64>,
    lo: Vec<Complex64>,
    theta: Vec<f64>,
    icr_amplitude: f64,
    noise_variance: f64,
}

fn prepare(cfg: &LinkConfig) -> Result<Prepared> {
    let grid = TimeGrid::new(cfg.sample_rate(), cfg.duration_symbols * cfg.sps)?;
    let root = RngStream::new(cfg.seed, "link");
    let bits = prbs7(cfg.prbs_init, cfg.duration_symbols * cfg.modulation.bits_per_symbol())?;
    let stream: SymbolStream = map_symbols(&bits, cfg.modulation)?;
    let baseband = pulse_shape(&stream, cfg.sps, cfg.pulse, cfg.baud)?;

    let laser = LaserSpec { offset: 0.0, ..cfg.laser };
    let field = laser_field(&laser, grid, &root.derive("laser"))?;
    let (carrier, lo) = split_3db(&field)?;
    let delayed = delay_record(carrier.samples(), cfg.channel.mismatch_delay() / grid.dt())?;
    let static_phase = match cfg.channel.static_phase {
        Some(p) => p,
        None => 2.0 * PI * root.derive("static-phase").uniform(),
    };
    let w = 2.0 * PI * cfg.laser.offset;
    let shifted: Vec<Complex64> = delayed
        .iter()
        .enumerate()
        .map(|(n, &c)| c * Complex64::from_polar(1.0, w * grid.time(n) + static_phase))
        .collect();
    let carrier = fiber(&ComplexEnvelope::new(grid, shifted, Unit::SqrtWatt)?, &cfg.channel, &root.derive("channel"))?;

    let mut theta = Vec::with_capacity(grid.n_samples());
    let mut prev: Option<f64> = None;
    for (c, l) in carrier.samples().iter().zip(lo.samples()) {
        let raw = (c * l.conj()).arg();
        let t = match prev {
            Some(p) => p + (raw - p + PI).rem_euclid(2.0 * PI) - PI,
            None => raw,
        };
        theta.push(t);
        prev = Some(t);
    }
    let s = iq_modulate(&carrier, &baseband, cfg.modulation)?;

    let s_amp = (cfg.laser.power / 2.0).sqrt() * cfg.channel.amplitude_scale();
    let lo_amp = (cfg.laser.power / 2.0).sqrt();
    let icr_amplitude = balanced_amplitude(&cfg.pic, s_amp, lo_amp);
    let noise_variance = match cfg.eic.snr_db {
        Some(snr) if snr == f64::INFINITY => 0.0,
        Some(snr) => icr_amplitude * icr_amplitude / (2.0 * 10f64.powf(snr / 10.0)),
        None if cfg.eic.mode == Mode::Physical => cfg.eic.thermal_noise_variance(cfg.pic.load, grid.sample_rate()),
        None => 0.0,
    };
    Ok(Prepared {
        grid,
        bits: bits.bits,
        symbols: stream.symbols,
        s: s.into_samples(),
        lo: lo.into_samples(),
        theta,
        icr_amplitude,
        noise_variance,
    })
}

/// Full-rate results of one pass through the engine.
struct Trace {
    capture: Vec<Complex64>,
    residual: Vec<f64>,
    locked: Vec<bool>,
    valid_count: usize,
    /// Rail-to-rail excursions of the control voltage in the second half.
    rail_swings: usize,
    waveforms: Waveforms,
}

fn simulate(cfg: &LinkConfig, prep: &Prepared, loop_cfg: &LoopConfig, pd_slope: f64) -> Result<Trace> {
    let dt = prep.grid.dt();
    let n = prep.grid.n_samples();
    let root = RngStream::new(cfg.seed, "link");
    let mut icr = IcrModel::settled(&cfg.pic, dt, &root.derive("icr"), loop_cfg.v_ctrl_bias)?;
    let mut chip = CprChip::new(&cfg.eic, dt, prep.noise_variance, &root.derive("eic-noise"))?;
    let mut avg = MaybePole::<f64>::new(loop_cfg.avg_bw, dt)?;
    let mut lock = LockDetector::new(loop_cfg.lock_config(pd_slope)?)?;
    let latency = 1 + (loop_cfg.feedback_delay / dt).round() as usize;
    let mut pending: VecDeque<f64> = std::iter::repeat_n(loop_cfg.v_ctrl_bias, latency).collect();
    let mut state = LoopState::at_bias(loop_cfg);

    let mut capture = Vec::with_capacity(n);
    let mut residual = Vec::with_capacity(n);
    let mut locked = Vec::with_capacity(n);
    let mut valid_count = 0usize;
    let [rail_lo, rail_hi] = loop_cfg.v_ctrl_range;
    let mut last_rail: Option<bool> = None;
    let mut rail_swings = 0usize;
    let mut wf = Waveforms { decimation: cfg.decimation, ..Waveforms::default() };
    for k in 0..n {
        let v_apply = pending.pop_front().expect("latency line is never empty");
        let o = icr.step(prep.s[k], prep.lo[k], v_apply);
        let c = chip.step(o.i_i, o.q_i);
        let v_avg = avg.step(c.v_pd);
        if loop_cfg.closed {
            state = loop_filter_step(&state, v_avg, dt, loop_cfg);
        }
        pending.push_back(state.v_ctrl);
        if k >= n / 2 {
            let rail = if state.v_ctrl <= rail_lo { Some(false) } else if state.v_ctrl >= rail_hi { Some(true) } else { None };
            if let Some(r) = rail {
                if last_rail.is_some_and(|l| l != r) {
                    rail_swings += 1;
                }
                last_rail = Some(r);
            }
        }
        let psi = prep.theta[k] - o.phi_d;
        state.phi_d = o.phi_d;
        state.phi_err_residual = wrap_quarter(psi);
        state.locked = lock.push(v_avg);
        valid_count += usize::from(c.valid);
        capture.push(match cfg.capture {
            CapturePoint::Chip => Complex64::new(c.i_o, c.q_o),
            CapturePoint::Icr => Complex64::new(c.i_in, c.q_in),
        });
        residual.push(state.phi_err_residual);
        locked.push(state.locked);
        if k % cfg.decimation == 0 {
            wf.time.push(prep.grid.time(k));
            wf.i_o.push(c.i_o);
            wf.q_o.push(c.q_o);
            wf.v_pd.push(c.v_pd);
            wf.v_ctrl.push(v_apply);
            wf.phi_d.push(o.phi_d);
            wf.phi_err.push(psi);
            wf.locked.push(state.locked);
        }
    }
    Ok(Trace { capture, residual, locked, valid_count, rail_swings, waveforms: wf })
}

/// Index from which the lock flag stays set to the end of the record. A
/// stretch covering less than the final quarter does not count as lock.
fn final_lock_start(flags: &[bool]) -> Option<usize> {
    let start = flags.iter().rposition(|&f| !f).map_or(0, |i| i + 1);
    (flags.len() - start >= flags.len() / 4).then_some(start).filter(|_| !flags.is_empty())
}

fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Constellation rotation beyond which a detector lock is taken to be on
/// an odd crossing of the saw-tooth.
const FALSE_LOCK_PHASE: f64 = PI / 8.0;

/// Rail-to-rail swings in the second half that mark a saturated oscillation.
const UNSTABLE_RAIL_SWINGS: usize = 4;

/// Steady growth of the residual after acquisition, or an oscillation that
/// has grown until the control voltage swings between its rails.
fn is_unstable(trace: &Trace, floor: f64) -> bool {
    let residual = &trace.residual;
    if trace.rail_swings >= UNSTABLE_RAIL_SWINGS || residual.iter().any(|v| !v.is_finite()) {
        return true;
    }
    let start = residual.len() / 10;
    let body = &residual[start..];
    let q = body.len() / 4;
    if q == 0 {
        return false;
    }
    let r: Vec<f64> = (0..4).map(|i| rms(&body[i * q..(i + 1) * q])).collect();
    r.windows(2).all(|w| w[1] > 1.5 * w[0]) && r[3] > floor
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Aligned references for `rx`, whose first symbol is near transmitted
/// symbol `base`.
fn aligned_reference(rx: &[Complex64], tx: &[Complex64], base: usize) -> Result<(Vec<Complex64>, usize, u8)> {
    const SEARCH: usize = 2;
    let start = base.saturating_sub(SEARCH);
    let a = align(rx, &tx[start..], 2 * SEARCH)?;
    let first = (start as isize + a.lag).max(0) as usize;
    let refs: Vec<Complex64> = a.reference(&tx[start..], rx.len()).into_iter().map_while(|r| r).collect();
    Ok((refs, first, a.rotation))
}

fn analyze(cfg: &LinkConfig, prep: &Prepared, trace: &Trace, status: LoopStatus) -> Result<(LinkMetrics, Vec<Complex64>, Vec<Complex64>)> {
    let sps = cfg.sps;
    let n = trace.capture.len();
    let lock_start = final_lock_start(&trace.locked);
    let seg_start = match (cfg.loop_.closed, lock_start) {
        (false, _) => 0,
        (true, Some(s)) => s,
        (true, None) => n / 2,
    };
    // Whole symbols only, with one symbol of margin.
    let seg_start = seg_start.div_ceil(sps) * sps + sps;
    if n < seg_start + 256 * sps {
        return Err(param("analysed segment is shorter than 256 symbols"));
    }
    let seg = &trace.capture[seg_start..];
    let offset = symbol_timing(seg, sps)?.round() as usize % sps;
    let mut rx = sample_symbols(seg, sps, offset as f64);
    rx.pop();
    let base = seg_start / sps;
    let (refs, first, rotation) = aligned_reference(&rx, &prep.symbols, base)?;
    let rx_raw: Vec<Complex64> = rx[..refs.len()].to_vec();
    let circular_variance = circular_variance_quarter(&rx_raw)?;
    let fourth: Complex64 = rx_raw.iter().filter(|s| s.norm() > 0.0).map(|s| (s / s.norm()).powi(4)).sum();
    let constellation_phase = (-fourth).arg() / 4.0;
    let corr_io = pearson(
        &rx_raw.iter().map(|c| c.re).collect::<Vec<_>>(),
        &refs.iter().map(|c| c.re).collect::<Vec<_>>(),
    );

    let mut wave: Vec<Complex64> = seg.to_vec();
    let mut symbols = rx_raw.clone();
    let mut refs = refs;
    let mut first = first;
    let mut rotation = rotation;
    if let Some(window) = cfg.post.cpr_window {
        let out = offline_cpr(&symbols, window.min(symbols.len()))?;
        for (k, s) in wave.iter_mut().enumerate() {
            let j = ((k as f64 - offset as f64) / sps as f64).round().clamp(0.0, (out.phases.len() - 1) as f64) as usize;
            *s *= Complex64::from_polar(1.0, -out.phases[j]);
        }
        let (r, f, rot) = aligned_reference(&out.symbols, &prep.symbols, base)?;
        symbols = out.symbols[..r.len()].to_vec();
        refs = r;
        first = f;
        rotation = rot;
    }

    let mut skip = 0;
    let mut ffe_status = None;
    let mut ffe_tap_drift = None;
    if let Some(ffe) = &cfg.post.ffe {
        let res = lms_ffe(&wave, sps, offset, refs.len(), ffe, &refs, cfg.modulation)?;
        wave = apply_ffe_waveform(&wave, &res);
        skip = ffe.n_train.min(refs.len() / 2);
        ffe_status = Some(res.status);
        ffe_tap_drift = Some(res.tap_drift);
        symbols = res.symbols;
    }
    let eval = &symbols[skip..];
    let eval_ref = &refs[skip..];
    let evm = evm_rms(eval, eval_ref)?;
    let evm_dd = evm_decision_directed(eval, cfg.modulation)?;

    let scale = {
        let p: f64 = eval.iter().map(|s| s.norm_sqr()).sum::<f64>() / eval.len() as f64;
        if p > 0.0 { 1.0 / p.sqrt() } else { 1.0 }
    };
    let constellation: Vec<Complex64> = eval.iter().map(|s| s * scale).collect();
    let bps = cfg.modulation.bits_per_symbol();
    let rx_bits = demap_symbols(&constellation, cfg.modulation);
    let tx_from = (first + skip) * bps;
    let tx_bits = &prep.bits[tx_from..(tx_from + rx_bits.len()).min(prep.bits.len())];
    let b = ber(&rx_bits, tx_bits, cfg.modulation)?;

    let eye_from = skip * sps;
    let eye_wave = &wave[eye_from.min(wave.len())..];
    let re: Vec<f64> = eye_wave.iter().map(|c| c.re).collect();
    let im: Vec<f64> = eye_wave.iter().map(|c| c.im).collect();
    let (eye_v, eye_h) = match (eye_metrics(&re, sps), eye_metrics(&im, sps)) {
        (Ok(a), Ok(b)) => (a.vertical.min(b.vertical), a.horizontal.min(b.horizontal)),
        _ => (f64::NAN, f64::NAN),
    };

    let residual_phase_rms = rms(&trace.residual[seg_start..]);
    let pd_slope = cfg.eic.pd_gain * prep.icr_amplitude * cfg.eic.frontend_linear_gain();
    let metrics = LinkMetrics {
        record: MetricsRecord {
            evm_rms: evm,
            ber: b.ber,
            eye_vertical: eye_v,
            eye_horizontal: eye_h,
            n_symbols: eval.len(),
            ambiguity_rotation: rotation,
        },
        status,
        locked: status == LoopStatus::Locked,
        lock_time_symbols: if cfg.loop_.closed { lock_start.map(|s| s as f64 / sps as f64) } else { None },
        evm_decision_directed: evm_dd,
        ber_aligned: b.aligned,
        circular_variance,
        constellation_phase,
        residual_phase_rms,
        corr_io,
        valid_fraction: trace.valid_count as f64 / n as f64,
        timing_offset: offset,
        ffe_status,
        ffe_tap_drift,
        pd_slope,
        polarity: cfg.loop_.polarity,
        polarity_flipped: false,
    };
    Ok((metrics, constellation, eye_wave.to_vec()))
}

fn run_with(cfg: &LinkConfig, prep: &Prepared) -> Result<RunResult> {
    let pd_slope = cfg.eic.pd_gain * prep.icr_amplitude * cfg.eic.frontend_linear_gain();
    let trace = simulate(cfg, prep, &cfg.loop_, pd_slope)?;
    let status = if !cfg.loop_.closed {
        LoopStatus::OpenLoop
    } else if is_unstable(&trace, cfg.loop_.lock_threshold_rad) {
        LoopStatus::Unstable
    } else if final_lock_start(&trace.locked).is_some() {
        LoopStatus::Locked
    } else {
        LoopStatus::NotLocked
    };
    let (mut metrics, constellation, eye_waveform) = analyze(cfg, prep, &trace, status)?;
    // The detector also reads zero on its odd crossings, midway between
    // lock points. A loop resting there has its symbols rotated by π/4.
    if status == LoopStatus::Locked && metrics.constellation_phase.abs() > FALSE_LOCK_PHASE {
        metrics.status = LoopStatus::NotLocked;
        metrics.locked = false;
    }
    Ok(RunResult {
        config: cfg.clone(),
        seed: cfg.seed,
        waveforms: trace.waveforms,
        constellation,
        eye_waveform,
        metrics,
    })
}

/// Configuration with the designed loop gains filled in.
pub fn effective_config(cfg: &LinkConfig) -> Result<LinkConfig> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    if cfg.design.auto {
        let s_amp = (cfg.laser.power / 2.0).sqrt() * cfg.channel.amplitude_scale();
        let lo_amp = (cfg.laser.power / 2.0).sqrt();
        let slope = cfg.eic.pd_gain * balanced_amplitude(&cfg.pic, s_amp, lo_amp) * cfg.eic.frontend_linear_gain();
        let sens = cfg.pic.ps_sensitivity(cfg.loop_.v_ctrl_bias);
        let (kp, ki) =
            LoopConfig::design(cfg.design.natural_frequency, cfg.design.damping, slope, sens, cfg.pic.ps_speed)?;
        cfg.loop_.kp = kp;
        cfg.loop_.ki = ki;
    }
    Ok(cfg)
}

/// Runs one scenario. In closed loop with `auto_polarity`, a run that fails
/// to lock (not locked or unstable) is retried once with the opposite
/// polarity; the retry is kept only if it locks.
pub fn run_scenario(cfg: &LinkConfig) -> Result<RunResult> {
    let cfg = effective_config(cfg)?;
    let prep = prepare(&cfg)?;
    let first = run_with(&cfg, &prep)?;
    if !(cfg.loop_.closed && cfg.loop_.auto_polarity && first.metrics.status != LoopStatus::Locked) {
        return Ok(first);
    }
    let mut flipped = cfg.clone();
    flipped.loop_.polarity = -cfg.loop_.polarity;
    let mut retry = run_with(&flipped, &prep)?;
    if retry.metrics.status == LoopStatus::Locked {
        retry.metrics.polarity_flipped = true;
        Ok(retry)
    } else {
        Ok(first)
    }
}
