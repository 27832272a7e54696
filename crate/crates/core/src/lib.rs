//! Behavioural simulator of a coherent silicon-photonic receiver locked by an
//! analog Costas loop.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dsp;
pub mod eic;
pub mod costas;
pub mod error;
pub mod filter;
pub mod link;
pub mod noise;
pub mod optics;
pub mod pic;
pub mod rng;
pub mod signal;
pub mod tx;

pub use error::{Error, Result};
pub use rng::RngStream;
pub use signal::{ComplexEnvelope, TimeGrid, Unit};

/// Fidelity of a device model.
///
/// `Ideal` reproduces the normalized textbook relations exactly; `Physical`
/// applies losses, finite bandwidths and the measured device constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ideal,
    #[default]
    Physical,
}
