//! Simulation and analysis of a laser-driven two-level ion whose carrier Rabi
//! frequency fluctuates with the thermal occupation of several motional modes.
//!
//! The pipeline runs bottom-up:
//!
//! - [`modes`]: Lamb-Dicke factors and thermal occupations of the trap modes.
//! - [`distribution`]: the exact discrete Rabi-frequency distribution, its
//!   Gaussian smoothing, and the one-parameter effective model `w_b` with the
//!   temperature calibration `T/T_D = c b^2`.
//! - [`dynamics`]: square-pulse populations and piecewise-constant propagation
//!   of chirped (RAP) pulses with thermal averaging.
//! - [`thermometry`]: temperature extraction from Rabi-oscillation traces and
//!   the drive-power calibration polynomial.
//! - [`robustness`]: infidelity maps over amplitude and detuning errors.
//!
//! Internally every frequency is an angular frequency in rad/s and every time
//! is in seconds. Conversion from Hz/kHz/MHz happens at the I/O boundary
//! ([`io`]).

pub mod constants;
pub mod distribution;
pub mod dynamics;
mod error;
pub mod io;
pub mod modes;
pub mod optimize;
pub mod quadrature;
pub mod robustness;
pub mod thermometry;

pub use error::{Error, Result};
