//! Joint timing, carrier-frequency-offset, phase-noise and compressive channel
//! estimation for frequency-selective hybrid-array MIMO-OFDM links.
//!
//! The crate is organised along the signal chain:
//!
//! * [`channel`] — clustered delay-tap channels, frequency responses, angular dictionaries
//! * [`impairments`] — timing offset, CFO and the phase-noise Gaussian process
//! * [`training`] — ZC precoders, antenna-selection combiners, Golay preamble, OFDM pilots
//! * [`link`] — beamformed channels, whitening, received-frame simulation
//! * [`sync`] — timing detection, CFO/PN/channel estimation, noise variance, bound
//! * [`sparse`] — compressive measurement model and SW-OMP recovery
//! * [`experiments`] — metrics and Monte-Carlo sweeps
//!
//! ## Example
//!
//! ```
//! use mmwave_sync::experiments::{sweep_rows, SweepConfig};
//!
//! let mut cfg = SweepConfig::desk();
//! cfg.scenario.frames = 2;
//! cfg.trials = 1;
//! cfg.snr_db = vec![10.0];
//! let rows = sweep_rows(&cfg).unwrap();
//! assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.p_detect)));
//! ```

pub mod channel;
pub mod config;
pub mod error;
pub mod experiments;
pub mod impairments;
pub mod io;
pub mod linalg;
pub mod link;
pub mod rng;
pub mod sparse;
pub mod sync;
pub mod training;

pub use error::{Error, Result};
