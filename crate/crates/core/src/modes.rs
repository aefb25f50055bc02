//! Trap/laser geometry, Lamb-Dicke factors and thermal phonon statistics.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::constants::{ATOMIC_MASS_UNIT, BOLTZMANN, HBAR};
use crate::{Error, Result};

/// Drive laser wavelength, ion mass, and the angle between the beam and each
/// oscillation direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaserGeometry {
    /// m
    pub wavelength: f64,
    /// kg
    pub ion_mass: f64,
    /// rad, one per mode, each in `[0, π/2]`
    pub projection_angles: Vec<f64>,
}

impl LaserGeometry {
    pub fn new(wavelength: f64, ion_mass: f64, projection_angles: Vec<f64>) -> Result<Self> {
        if !(wavelength > 0.0) {
            return Err(Error::domain(format!("wavelength must be > 0, got {wavelength}")));
        }
        if !(ion_mass > 0.0) {
            return Err(Error::domain(format!("ion mass must be > 0, got {ion_mass}")));
        }
        if projection_angles.is_empty() {
            return Err(Error::domain("at least one projection angle is required"));
        }
        if let Some(a) = projection_angles
            .iter()
            .find(|a| !(0.0..=FRAC_PI_2 + 1e-12).contains(*a))
        {
            return Err(Error::domain(format!("projection angle {a} rad outside [0, π/2]")));
        }
        Ok(Self { wavelength, ion_mass, projection_angles })
    }

    /// 729 nm beam on a single ⁴⁰Ca⁺ ion: 45° to the axial mode, 60° to both
    /// radial modes. With [`REFERENCE_MODE_FREQUENCIES_HZ`] this gives
    /// η = {0.059, 0.031, 0.028}.
    pub fn ca40_reference() -> Self {
        Self {
            wavelength: 729e-9,
            ion_mass: 40.0 * ATOMIC_MASS_UNIT,
            projection_angles: vec![PI / 4.0, PI / 3.0, PI / 3.0],
        }
    }

    pub fn wavenumber(&self) -> f64 {
        TAU / self.wavelength
    }

    pub fn n_modes(&self) -> usize {
        self.projection_angles.len()
    }
}

/// Axial and the two radial trap frequencies of the reference setup, Hz.
pub const REFERENCE_MODE_FREQUENCIES_HZ: [f64; 3] = [1.35e6, 2.4e6, 3.0e6];

/// Doppler cooling limit of the reference setup, K.
pub const REFERENCE_DOPPLER_TEMPERATURE: f64 = 0.55e-3;

/// η = cos(α)·k·√(ħ / 2mω) for mode `mode_index` oscillating at
/// `angular_frequency` (rad/s).
pub fn lamb_dicke(geometry: &LaserGeometry, mode_index: usize, angular_frequency: f64) -> Result<f64> {
    if !(angular_frequency > 0.0) {
        return Err(Error::domain(format!(
            "mode angular frequency must be > 0, got {angular_frequency}"
        )));
    }
    if !(geometry.wavelength > 0.0) {
        return Err(Error::domain(format!("wavelength must be > 0, got {}", geometry.wavelength)));
    }
    let alpha = *geometry.projection_angles.get(mode_index).ok_or_else(|| {
        Error::domain(format!(
            "mode index {mode_index} out of range for {} projection angles",
            geometry.n_modes()
        ))
    })?;
    let zero_point = (HBAR / (2.0 * geometry.ion_mass * angular_frequency)).sqrt();
    // cos(π/2) is 6e-17 in floating point; an orthogonal beam does not couple
    let projection = if (alpha - FRAC_PI_2).abs() < 1e-12 { 0.0 } else { alpha.cos() };
    Ok(projection * geometry.wavenumber() * zero_point)
}

/// Mean thermal phonon number n̄ = k_B T / (ħω).
pub fn mean_occupation(temperature: f64, angular_frequency: f64) -> Result<f64> {
    if !(temperature >= 0.0) {
        return Err(Error::domain(format!("temperature must be ≥ 0, got {temperature}")));
    }
    if !(angular_frequency > 0.0) {
        return Err(Error::domain(format!(
            "mode angular frequency must be > 0, got {angular_frequency}"
        )));
    }
    Ok(BOLTZMANN * temperature / (HBAR * angular_frequency))
}

/// Thermal (Bose-Einstein) occupation probability n̄ⁿ/(n̄+1)ⁿ⁺¹.
pub fn thermal_probability(n: u32, n_bar: f64) -> f64 {
    debug_assert!(n_bar >= 0.0);
    if n_bar == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let ratio = n_bar / (n_bar + 1.0);
    (f64::from(n) * ratio.ln()).exp() / (n_bar + 1.0)
}

/// One motional mode as seen by the drive laser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    /// rad/s
    pub angular_frequency: f64,
    pub lamb_dicke: f64,
    pub mean_occupation: f64,
}

impl Mode {
    pub fn new(angular_frequency: f64, lamb_dicke: f64, mean_occupation: f64) -> Result<Self> {
        if !(angular_frequency > 0.0) {
            return Err(Error::domain(format!(
                "mode angular frequency must be > 0, got {angular_frequency}"
            )));
        }
        if !(0.0..1.0).contains(&lamb_dicke) {
            return Err(Error::domain(format!("Lamb-Dicke factor must be in [0, 1), got {lamb_dicke}")));
        }
        if !(mean_occupation >= 0.0) {
            return Err(Error::domain(format!(
                "mean occupation must be ≥ 0, got {mean_occupation}"
            )));
        }
        let mode = Self { angular_frequency, lamb_dicke, mean_occupation };
        if !mode.in_lamb_dicke_regime() {
            log::warn!(
                "mode at {:.4e} rad/s has η√n̄ = {:.3} ≥ 1; carrier model is outside its validity range",
                angular_frequency,
                lamb_dicke * mean_occupation.sqrt()
            );
        }
        Ok(mode)
    }

    /// η√n̄ < 1, the regime where sideband terms may be neglected.
    pub fn in_lamb_dicke_regime(&self) -> bool {
        self.lamb_dicke * self.mean_occupation.sqrt() < 1.0
    }
}

/// The ordered list of modes coupled by the laser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSet {
    modes: Vec<Mode>,
}

impl ModeSet {
    pub fn new(modes: Vec<Mode>) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::domain("mode set must contain at least one mode"));
        }
        Ok(Self { modes })
    }

    /// All modes in thermal equilibrium at `temperature` (K).
    pub fn thermal(geometry: &LaserGeometry, angular_frequencies: &[f64], temperature: f64) -> Result<Self> {
        if angular_frequencies.len() != geometry.n_modes() {
            return Err(Error::domain(format!(
                "{} mode frequencies but {} projection angles",
                angular_frequencies.len(),
                geometry.n_modes()
            )));
        }
        let modes = angular_frequencies
            .iter()
            .enumerate()
            .map(|(i, &w)| Mode::new(w, lamb_dicke(geometry, i, w)?, mean_occupation(temperature, w)?))
            .collect::<Result<Vec<_>>>()?;
        Self::new(modes)
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn in_lamb_dicke_regime(&self) -> bool {
        self.modes.iter().all(Mode::in_lamb_dicke_regime)
    }
}
