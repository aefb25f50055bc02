//! Physical constants (CODATA 2018; ħ and k_B are exact in the 2019 SI).

use std::f64::consts::TAU;

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Unified atomic mass unit, kg.
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

/// Converts an ordinary frequency in Hz to an angular frequency in rad/s.
#[inline]
pub fn hz_to_angular(hz: f64) -> f64 {
    TAU * hz
}

/// Converts an angular frequency in rad/s to an ordinary frequency in Hz.
#[inline]
pub fn angular_to_hz(omega: f64) -> f64 {
    omega / TAU
}
