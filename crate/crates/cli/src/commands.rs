//! Subcommand implementations. Each writes its artifacts and returns the
//! computed result; failures carry the exit code of the command.

use std::path::PathBuf;

use cohrx_core::dsp::FfeStatus;
use cohrx_core::link::{run_scenario, LinkConfig, LoopStatus, RunResult};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::characterize::{characterize_pd, characterize_ps, PdReport, PsReport};
use crate::config::{self, config_hash, Outputs, ScenarioConfig};
use crate::error::{CliError, CliResult};
use crate::output::{fmt_f64, out_dir, Emitter, Provenance, Table};
use crate::scenarios::SCENARIOS;
use crate::svg::{thin, Plot, Series};

/// Options shared by every scenario command.
#[derive(Debug, Clone, Default)]
pub struct Common {
    pub config: Option<PathBuf>,
    pub scenario: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Comma-separated formats; overrides the config file's `outputs`.
    pub emit: Option<String>,
}

impl Common {
    fn resolve(&self, default_scenario: &str) -> CliResult<(ScenarioConfig, PathBuf)> {
        let scenario = match (&self.scenario, &self.config) {
            (Some(s), _) => Some(s.as_str()),
            (None, None) => Some(default_scenario),
            (None, Some(_)) => None,
        };
        let mut cfg = config::load(self.config.as_deref(), scenario, self.seed)?;
        if let Some(list) = &self.emit {
            cfg.outputs = Outputs::parse_list(list)?;
        }
        Ok((cfg, out_dir(self.out.as_deref())))
    }
}

fn provenance(cfg: &ScenarioConfig) -> Provenance {
    Provenance { scenario: cfg.name.clone(), seed: cfg.seed(), config_hash: cfg.config_hash() }
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialize")
}

/// Scenario used when a command gets neither a config file nor a name.
pub const DEFAULT_PS_SCENARIO: &str = "fig4a";
pub const DEFAULT_PD_SCENARIO: &str = "fig4b";
pub const DEFAULT_LINK_SCENARIO: &str = "fig7-closed";

/// Columns: `voltage_v,normalized_power`.
pub fn cmd_characterize_ps(common: &Common) -> CliResult<PsReport> {
    let (cfg, dir) = common.resolve(DEFAULT_PS_SCENARIO)?;
    let report = characterize_ps(&cfg.link.pic)?;
    let mut out = Emitter::new(&dir, cfg.outputs, provenance(&cfg))?;
    let mut t = Table::new(&["voltage_v", "normalized_power"]);
    for (v, p) in report.voltage.iter().zip(&report.power) {
        t.push_f64(&[*v, *p]);
    }
    let name = format!("{}_ps", cfg.name);
    out.csv(&name, &t)?;
    out.json(
        &name,
        json!({
            "argmin_voltage": report.argmin_voltage,
            "min_power": report.min_power,
            "power_at_3v": report.power_at_3v,
            "half_power_voltage": report.half_power_voltage,
            "pic": to_json(&cfg.link.pic),
        }),
    )?;
    let pts = report.voltage.iter().copied().zip(report.power.iter().copied()).collect();
    out.svg(&name, &Plot::new("Phase-shifter interferometer", "heater voltage (V)", "normalized power").with(Series::line("P/P(0)", pts)))?;
    Ok(report)
}

/// Columns: `phi_err_rad,v_pd_v`, one row per symbol.
pub fn cmd_characterize_pd(common: &Common) -> CliResult<PdReport> {
    let (cfg, dir) = common.resolve(DEFAULT_PD_SCENARIO)?;
    let report = characterize_pd(&cfg.link)?;
    let mut out = Emitter::new(&dir, cfg.outputs, provenance(&cfg))?;
    let mut t = Table::new(&["phi_err_rad", "v_pd_v"]);
    for (p, v) in report.phi_err.iter().zip(&report.v_pd) {
        t.push_f64(&[*p, *v]);
    }
    let name = format!("{}_pd", cfg.name);
    out.csv(&name, &t)?;
    out.json(
        &name,
        json!({
            "slope_v_per_rad": report.slope,
            "intercept_v": report.intercept,
            "period_rad": report.period,
            "odd_residual_v": report.odd_residual,
            "v_pd_rms_v": report.v_pd_rms,
            "config": to_json(&cfg.link),
        }),
    )?;
    let pts: Vec<(f64, f64)> = report.phi_err.iter().copied().zip(report.v_pd.iter().copied()).collect();
    out.svg(&name, &Plot::new("Phase-detector characteristic", "phase error (rad)", "v_pd (V)").with(Series::points("v_pd", thin(&pts, 5000))))?;
    Ok(report)
}

/// Most eye traces written to the eye CSV and plot.
pub const EYE_TRACES: usize = 400;
/// Most points per series in trace plots.
const PLOT_POINTS: usize = 4000;

/// Writes the artifacts of one link run.
///
/// Files, prefixed by the scenario name:
/// - `_constellation.csv`: `symbol,i,q` of the final unit-RMS symbols;
/// - `_eye.csv`: `trace,t_symbols,i,q`, two-symbol windows centred on the
///   sampling instant;
/// - `_traces.csv`: `time_s,i_o,q_o,v_pd,v_ctrl,phi_d,phi_err,locked` at the
///   decimated rate;
/// - `_metrics.json`: metrics and the configuration as run.
fn emit_link(out: &mut Emitter, name: &str, r: &RunResult) -> CliResult<()> {
    let mut t = Table::new(&["symbol", "i", "q"]);
    for (k, s) in r.constellation.iter().enumerate() {
        t.push(vec![k.to_string(), fmt_f64(s.re), fmt_f64(s.im)]);
    }
    out.csv(&format!("{name}_constellation"), &t)?;
    let pts: Vec<(f64, f64)> = r.constellation.iter().map(|s| (s.re, s.im)).collect();
    let mut plot = Plot::new(&format!("{name}: constellation"), "I", "Q").with(Series::points("symbols", thin(&pts, 5000)));
    plot.square = true;
    out.svg(&format!("{name}_constellation"), &plot)?;

    let sps = r.config.sps;
    let offset = r.metrics.timing_offset;
    let w = &r.eye_waveform;
    let mut t = Table::new(&["trace", "t_symbols", "i", "q"]);
    let mut paths = Vec::new();
    for k in 1..=EYE_TRACES {
        let start = k * sps + offset - sps;
        if start + 2 * sps > w.len() {
            break;
        }
        let mut path = Vec::with_capacity(2 * sps);
        for j in 0..2 * sps {
            let tt = (j as f64 - sps as f64) / sps as f64;
            let s = w[start + j];
            t.push(vec![k.to_string(), fmt_f64(tt), fmt_f64(s.re), fmt_f64(s.im)]);
            path.push((tt, s.re));
        }
        paths.push(path);
    }
    out.csv(&format!("{name}_eye"), &t)?;
    let eye = Series { label: "I".into(), style: crate::svg::Style::Lines, paths };
    out.svg(&format!("{name}_eye"), &Plot::new(&format!("{name}: eye (I)"), "time (symbols)", "amplitude").with(eye))?;

    let wf = &r.waveforms;
    let mut t = Table::new(&["time_s", "i_o", "q_o", "v_pd", "v_ctrl", "phi_d", "phi_err", "locked"]);
    for k in 0..wf.time.len() {
        let mut row: Vec<String> =
            [wf.time[k], wf.i_o[k], wf.q_o[k], wf.v_pd[k], wf.v_ctrl[k], wf.phi_d[k], wf.phi_err[k]].iter().map(|&x| fmt_f64(x)).collect();
        row.push(u8::from(wf.locked[k]).to_string());
        t.push(row);
    }
    out.csv(&format!("{name}_traces"), &t)?;
    let series = |label: &str, y: &[f64]| {
        let pts: Vec<(f64, f64)> = wf.time.iter().copied().zip(y.iter().copied()).collect();
        Series::line(label, thin(&pts, PLOT_POINTS))
    };
    out.svg(&format!("{name}_vctrl"), &Plot::new(&format!("{name}: control voltage"), "time (s)", "V").with(series("v_ctrl", &wf.v_ctrl)))?;
    out.svg(&format!("{name}_vpd"), &Plot::new(&format!("{name}: detector output"), "time (s)", "V").with(series("v_pd", &wf.v_pd)))?;

    out.json(&format!("{name}_metrics"), json!({ "metrics": to_json(&r.metrics), "config": to_json(&r.config) }))?;
    Ok(())
}

/// Maps the loop outcome onto the command's failure modes.
fn check_outcome(r: &RunResult) -> CliResult<()> {
    let m = &r.metrics;
    if m.status == LoopStatus::Unstable {
        return Err(CliError::Divergence("the Costas loop oscillates; reduce the loop gain".into()));
    }
    if m.ffe_status == Some(FfeStatus::Diverged) {
        return Err(CliError::Divergence("the equalizer diverged; reduce its step size".into()));
    }
    if r.config.loop_.closed && m.status == LoopStatus::NotLocked {
        return Err(CliError::LockFailure(format!(
            "no sustained lock; residual phase RMS {:.3} rad, constellation rotation {:.3} rad",
            m.residual_phase_rms, m.constellation_phase
        )));
    }
    Ok(())
}

/// Runs the link and writes its artifacts. Lock failure and divergence are
/// reported after the artifacts are written.
pub fn cmd_run_link(common: &Common) -> CliResult<RunResult> {
    let (cfg, dir) = common.resolve(DEFAULT_LINK_SCENARIO)?;
    let result = run_scenario(&cfg.link)?;
    let mut out = Emitter::new(&dir, cfg.outputs, provenance(&cfg))?;
    emit_link(&mut out, &cfg.name, &result)?;
    check_outcome(&result)?;
    Ok(result)
}

/// One row of a sweep aggregate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: String,
    pub status: LoopStatus,
    pub evm_rms: f64,
    pub ber: f64,
    pub eye_vertical: f64,
    pub eye_horizontal: f64,
    pub residual_phase_rms: f64,
    pub circular_variance: f64,
    pub lock_time_symbols: Option<f64>,
    pub seed: u64,
    pub config_sha256: String,
}

/// Runs one link per value of the parameter at `path` in parallel and writes
/// `<scenario>_sweep.csv` / `.json` with one row per value, in input order.
pub fn cmd_sweep(common: &Common, path: &str, values: &[String]) -> CliResult<Vec<SweepRow>> {
    let (cfg, dir) = common.resolve(DEFAULT_LINK_SCENARIO)?;
    let base = config::link_to_value(&cfg.link);
    // Every value is parsed and checked before any run starts.
    let configs: Vec<LinkConfig> = values
        .iter()
        .map(|text| {
            let mut v = base.clone();
            config::set_path(&mut v, path, config::parse_value(text)?)?;
            let link = config::link_from_value(v)?;
            link.validate().map_err(|e| CliError::Usage(format!("{path} = {text}: {e}")))?;
            Ok(link)
        })
        .collect::<CliResult<_>>()?;
    let results: Vec<RunResult> = configs.par_iter().map(run_scenario).collect::<Result<_, _>>()?;
    let rows: Vec<SweepRow> = values
        .iter()
        .zip(&configs)
        .zip(&results)
        .map(|((value, link), r)| SweepRow {
            value: value.clone(),
            status: r.metrics.status,
            evm_rms: r.metrics.record.evm_rms,
            ber: r.metrics.record.ber,
            eye_vertical: r.metrics.record.eye_vertical,
            eye_horizontal: r.metrics.record.eye_horizontal,
            residual_phase_rms: r.metrics.residual_phase_rms,
            circular_variance: r.metrics.circular_variance,
            lock_time_symbols: r.metrics.lock_time_symbols,
            seed: link.seed,
            config_sha256: config_hash(link),
        })
        .collect();

    let mut out = Emitter::new(&dir, cfg.outputs, provenance(&cfg))?;
    let mut t = Table::new(&[
        "value",
        "status",
        "evm_rms",
        "ber",
        "eye_vertical",
        "eye_horizontal",
        "residual_phase_rms",
        "circular_variance",
        "lock_time_symbols",
        "seed",
        "config_sha256",
    ]);
    for r in &rows {
        let status = serde_json::to_value(r.status).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        t.push(vec![
            csv_field(&r.value),
            status,
            fmt_f64(r.evm_rms),
            fmt_f64(r.ber),
            fmt_f64(r.eye_vertical),
            fmt_f64(r.eye_horizontal),
            fmt_f64(r.residual_phase_rms),
            fmt_f64(r.circular_variance),
            r.lock_time_symbols.map_or(String::new(), fmt_f64),
            r.seed.to_string(),
            r.config_sha256.clone(),
        ]);
    }
    let name = format!("{}_sweep", cfg.name);
    out.csv(&name, &t)?;
    out.json(&name, json!({ "parameter": path, "rows": to_json(&rows), "base_config": base }))?;
    Ok(rows)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

pub fn cmd_list_scenarios() -> String {
    SCENARIOS.iter().map(|s| format!("{:<16}{}\n", s.name, s.description)).collect()
}

/// The resolved configuration as a TOML file that loads back to itself.
pub fn cmd_dump_config(common: &Common) -> CliResult<String> {
    let (cfg, _) = common.resolve(DEFAULT_LINK_SCENARIO)?;
    let body = toml::to_string(&cfg.link).map_err(|e| CliError::Usage(format!("cannot render configuration: {e}")))?;
    Ok(format!("# {}\n{body}", provenance(&cfg).line()))
}

