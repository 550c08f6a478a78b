//! Joint frame synchronization and channel estimation (JFSCE) by sparse
//! recovery, with a sparse linear MMSE equalizer and a software loopback of
//! the radio experiment chain.
//!
//! The receiver's unknown frame boundary is folded into the channel as
//! leading zeros, producing a long but sparse "combined" channel vector.
//! Estimating that vector from the tail of a known training frame both
//! synchronizes and equalizes in one shot. The crate provides:
//!
//! - [`signal`]: frames, channels, delays, QPSK sources, and the forward
//!   model producing received samples;
//! - [`measurement`]: the training linear system `y = X h + z` and the
//!   reduced system of the conventional correlate-first method;
//! - [`estimators`]: conventional, classical pseudo-inverse, and the sparse
//!   recovery family (OMP, CoSaMP, reweighted-l1, SBL, EMGMAMP), plus ideal
//!   and genie baselines;
//! - [`equalizer`]: sparse FIR MMSE design and the end-to-end symbol MSE;
//! - [`loopback`]: RRC-shaped 4x-oversampled replay of the testbed chain.
//!
//! Everything is deterministic given explicit seeds; all values are
//! immutable after construction and safe to share across threads.

pub mod equalizer;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod loopback;
pub mod measurement;
pub mod rng;
pub mod signal;

pub use error::{Error, Result};
