//! Pulse detection with a wavelet front end and linear SVM decision functions.
//!
//! A window of `S` samples is decomposed with an orthonormal Daubechies-5
//! filter bank; the level-4 detail band feeds a linear SVM whose smooth
//! output `w·x + b` is compared against a threshold calibrated to a target
//! false-alarm rate. Streams are searched with stride-1 windows and a bank of
//! detectors trained on partially filled windows ("n-shift" detectors), whose
//! scores can be fused by a second linear stage.
//!
//! Modules, bottom-up:
//!
//! - [`signalgen`]: chirp pulses, Gaussian noise, SNR scaling, training windows.
//! - [`wavelet`]: db5 filters, periodic DWT, detail-band features.
//! - [`detector`]: soft-margin SVM trainer, scoring, threshold calibration.
//! - [`search`]: stride-1 time search and the multi-shift detector bank.
//! - [`analysis`]: Monte Carlo P_fa / P_d, score covariance, ROC, combiner.
//! - [`pipeline`]: config-driven commands behind the `pulsedet` binary.

pub mod analysis;
pub mod detector;
pub mod error;
pub mod pipeline;
pub mod scenario;
pub mod search;
pub mod signalgen;
pub mod wavelet;

pub use error::{Error, Result};

/// Version string embedded in model files and manifests.
pub const TOOL_VERSION: &str = concat!("pulsedet ", env!("CARGO_PKG_VERSION"));
