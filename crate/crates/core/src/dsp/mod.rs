//! Offline post-processing of captured waveforms: symbol timing and
//! alignment, blind carrier-phase recovery, adaptive equalization and link
//! metrics.

pub mod cpr;
pub mod eye;
pub mod ffe;
pub mod metrics;
pub mod timing;

pub use cpr::{offline_cpr, CprOutput};
pub use eye::{eye_metrics, EyeMetrics};
pub use ffe::{apply_ffe_waveform, lms_ffe, FfeConfig, FfeResult, FfeStatus};
pub use metrics::{ber, circular_variance_quarter, evm_decision_directed, evm_rms, BerResult, MetricsRecord};
pub use timing::{align, sample_symbols, symbol_timing, Alignment};
