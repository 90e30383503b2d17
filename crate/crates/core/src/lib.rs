//! Synchronization stability of power systems viewed as power-communication
//! isomorphic systems.
//!
//! Apparatus modulate internal oscillators into three-phase signals, the
//! network acts as a set of linear channels, and every apparatus demodulates
//! what it receives through complex power and locks its phase with a hybrid
//! power controller. This crate provides:
//!
//! * [`envelope`]: complex angle / complex frequency algebra and demodulation,
//! * [`channel`]: rational channels, the channel-gain ODE and its quasi-static
//!   and linearized forms,
//! * [`network`]: graph, equilibrium, branch-network reduction and the
//!   loaded-channel / frequency-shift matrices with their modal decomposition,
//! * [`phase_locking`]: hybrid power and the damped accumulator oscillator,
//! * [`stability`]: the small-gain criterion (ζ per mode against σ_max),
//! * [`simulator`]: nonlinear time-domain simulation of the closed loop,
//! * [`config`] and [`output`]: JSON configuration and report/trace emission.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod envelope;
pub mod error;
pub mod network;
pub mod output;
pub mod phase_locking;
pub mod rk4;
pub mod simulator;
pub mod stability;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Default carrier frequency, 50 Hz.
pub const DEFAULT_OMEGA0: f64 = 2.0 * std::f64::consts::PI * 50.0;
