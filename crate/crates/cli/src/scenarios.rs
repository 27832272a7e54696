//! Built-in scenarios reproducing the receiver's characterization and link
//! experiments.

use std::f64::consts::PI;

use cohrx_core::dsp::ffe::FfeConfig;
use cohrx_core::link::{CapturePoint, LinkConfig};
use cohrx_core::optics::DriftModel;

/// Command a scenario is meant for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    CharacterizePs,
    CharacterizePd,
    Link,
}

pub struct Scenario {
    pub name: &'static str,
    pub kind: ScenarioKind,
    pub description: &'static str,
    build: fn() -> LinkConfig,
}

impl Scenario {
    pub fn config(&self) -> LinkConfig {
        (self.build)()
    }
}

/// Phase drift of the fig7 link: the default random walk plus a slow
/// sinusoid large enough to rotate the open-loop constellation.
fn fig7_drift() -> DriftModel {
    DriftModel::Sum {
        terms: vec![
            DriftModel::default_random_walk(),
            DriftModel::Sinusoid { freq: 10e3, amplitude: 2.0, phase: -PI / 2.0 },
        ],
    }
}

fn fig7_base() -> LinkConfig {
    let mut c = LinkConfig::default();
    c.channel.drift = fig7_drift();
    c.loop_.v_ctrl_range = [0.0, 24.0];
    c.loop_.v_ctrl_bias = 12.0;
    // Band limit of 0.7×baud ahead of the chip.
    c.eic.frontend_bw = Some(0.7 * c.baud);
    c
}

fn fig4a() -> LinkConfig {
    LinkConfig::default()
}

fn fig4b() -> LinkConfig {
    let mut c = LinkConfig { baud: 1e9, sps: 32, duration_symbols: 4000, ..LinkConfig::default() };
    c.laser.offset = 1e6;
    c.loop_.closed = false;
    c
}

fn fig6() -> LinkConfig {
    let mut c = LinkConfig { baud: 4e9, sps: 16, ..LinkConfig::default() };
    c.eic.frontend_bw = Some(0.7 * c.baud);
    c.loop_.closed = false;
    c.capture = CapturePoint::Icr;
    c.post.cpr_window = Some(64);
    c.post.ffe = Some(FfeConfig::default());
    c
}

fn fig7_open() -> LinkConfig {
    let mut c = fig7_base();
    c.loop_.closed = false;
    c
}

fn fig7_closed() -> LinkConfig {
    fig7_base()
}

fn fig7_equalized() -> LinkConfig {
    let mut c = fig7_base();
    c.post.ffe = Some(FfeConfig::default());
    c
}

pub const SCENARIOS: &[Scenario] = &[
    Scenario {
        name: "fig4a",
        kind: ScenarioKind::CharacterizePs,
        description: "phase-shifter interferometer sweep, 0 to 12 V",
        build: fig4a,
    },
    Scenario {
        name: "fig4b",
        kind: ScenarioKind::CharacterizePd,
        description: "phase-detector characteristic, 1 GBaud QPSK with 1 MHz offset",
        build: fig4b,
    },
    Scenario {
        name: "fig6",
        kind: ScenarioKind::Link,
        description: "4 GBaud open-loop receiver capture, offline CPR and FFE",
        build: fig6,
    },
    Scenario {
        name: "fig7-open",
        kind: ScenarioKind::Link,
        description: "2 GBaud link through the chip with the loop open",
        build: fig7_open,
    },
    Scenario {
        name: "fig7-closed",
        kind: ScenarioKind::Link,
        description: "2 GBaud link with the Costas loop closed",
        build: fig7_closed,
    },
    Scenario {
        name: "fig7-equalized",
        kind: ScenarioKind::Link,
        description: "closed loop followed by an offline FFE",
        build: fig7_equalized,
    },
];

pub fn find(name: &str) -> Option<&'static Scenario> {
    SCENARIOS.iter().find(|s| s.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_scenarios_validate() {
        for s in SCENARIOS {
            s.config().validate().unwrap_or_else(|e| panic!("{}: {e}", s.name));
        }
    }

    #[test]
    fn names_are_unique() {
        for (i, a) in SCENARIOS.iter().enumerate() {
            assert!(SCENARIOS[i + 1..].iter().all(|b| b.name != a.name));
        }
    }
}
