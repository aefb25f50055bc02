//! Thermally averaged RAP infidelity over grids of static amplitude and
//! detuning errors, and the far-detuned parasitic-transfer check.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::hz_to_angular;
use crate::distribution::EffectiveRabiDistribution;
use crate::dynamics::{average_transfer_over, PulseProgram, RapParameters, TransferResult};
use crate::{Error, Result};

/// Chirp range used as the unit of the detuning axis, Hz.
pub const REFERENCE_CHIRP_HZ: f64 = 100e3;

/// Default reduced-grid step of the thermal average.
pub const DEFAULT_DX: f64 = 0.01;

/// Grid of a robustness sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// amplitude scale y = Ω₀/Ω₀^(cal)
    pub y_range: (f64, f64),
    /// static detuning δ′, rad/s
    pub delta_range: (f64, f64),
    pub n_y: usize,
    pub n_delta: usize,
    pub dx: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        let d = 1.5 * hz_to_angular(REFERENCE_CHIRP_HZ);
        Self { y_range: (0.5, 1.5), delta_range: (-d, d), n_y: 61, n_delta: 61, dx: DEFAULT_DX }
    }
}

impl SweepSpec {
    fn validate(&self) -> Result<()> {
        if self.n_y < 2 || self.n_delta < 2 {
            return Err(Error::InvalidInput(format!(
                "sweep grid must be at least 2×2, got {}×{}",
                self.n_y, self.n_delta
            )));
        }
        if !(self.y_range.0 > 0.0 && self.y_range.1 > self.y_range.0) {
            return Err(Error::InvalidInput(format!("y range must satisfy 0 < y_min < y_max, got {:?}", self.y_range)));
        }
        if !(self.delta_range.1 > self.delta_range.0) || !self.delta_range.0.is_finite() || !self.delta_range.1.is_finite() {
            return Err(Error::InvalidInput(format!("detuning range must be increasing, got {:?}", self.delta_range)));
        }
        Ok(())
    }

    pub fn y_axis(&self) -> Vec<f64> {
        linspace(self.y_range, self.n_y)
    }

    pub fn delta_axis(&self) -> Vec<f64> {
        linspace(self.delta_range, self.n_delta)
    }
}

fn linspace((lo, hi): (f64, f64), n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| if i + 1 == n { hi } else { lo + step * i as f64 }).collect()
}

/// Everything needed to regenerate a map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMetadata {
    pub pulse: Option<RapParameters>,
    pub b: f64,
    /// rad/s
    pub omega0: f64,
    pub spec: SweepSpec,
}

/// log₁₀ infidelity on a (y, δ′) grid; rows follow y, columns follow δ′.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessMap {
    pub y_axis: Vec<f64>,
    /// rad/s
    pub delta_axis: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub metadata: MapMetadata,
}

impl RobustnessMap {
    pub fn delta_axis_hz(&self) -> Vec<f64> {
        self.delta_axis.iter().map(|d| d / std::f64::consts::TAU).collect()
    }

    /// δ′ in units of 2π·100 kHz.
    pub fn delta_axis_chirp_units(&self) -> Vec<f64> {
        let unit = hz_to_angular(REFERENCE_CHIRP_HZ);
        self.delta_axis.iter().map(|d| d / unit).collect()
    }

    /// Smallest log₁₀ infidelity and its `(y, δ′)`.
    pub fn minimum(&self) -> (f64, f64, f64) {
        let mut best = (f64::INFINITY, f64::NAN, f64::NAN);
        for (i, row) in self.values.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v < best.0 {
                    best = (v, self.y_axis[i], self.delta_axis[j]);
                }
            }
        }
        best
    }

    /// Area of the cells with infidelity ≤ `threshold`, in units of
    /// y × (2π·100 kHz).
    pub fn area_below(&self, threshold: f64) -> f64 {
        let limit = threshold.log10();
        let count = self.values.iter().flatten().filter(|&&v| v <= limit).count();
        let dy = (self.y_axis[self.y_axis.len() - 1] - self.y_axis[0]) / (self.y_axis.len() - 1) as f64;
        let dd = (self.delta_axis[self.delta_axis.len() - 1] - self.delta_axis[0])
            / (self.delta_axis.len() - 1) as f64
            / hz_to_angular(REFERENCE_CHIRP_HZ);
        count as f64 * dy * dd
    }
}

/// Thermally averaged transfer at every (y, δ′) of `spec`. Grid points run
/// in parallel; the result layout is fixed by (row, column).
pub fn sweep_robustness(
    pulse: &PulseProgram,
    eff: &EffectiveRabiDistribution,
    spec: &SweepSpec,
) -> Result<RobustnessMap> {
    spec.validate()?;
    let weights = eff.reduced_weights(spec.dx)?;
    let y_axis = spec.y_axis();
    let delta_axis = spec.delta_axis();
    let n_d = delta_axis.len();
    let flat: Vec<f64> = (0..y_axis.len() * n_d)
        .into_par_iter()
        .map(|k| average_transfer_over(pulse, &weights, y_axis[k / n_d], delta_axis[k % n_d]).log10_infidelity)
        .collect();
    let values = flat.chunks(n_d).map(<[f64]>::to_vec).collect();
    Ok(RobustnessMap {
        y_axis,
        delta_axis,
        values,
        metadata: MapMetadata { pulse: pulse.rap_parameters().copied(), b: eff.b(), omega0: eff.omega0(), spec: *spec },
    })
}

/// Coherent transfer on a transition detuned by `offset` (rad/s) from the
/// pulse centre frequency, at y = 1.
pub fn parasitic_transfer_check(
    pulse: &PulseProgram,
    eff: &EffectiveRabiDistribution,
    offset: f64,
    dx: f64,
) -> Result<TransferResult> {
    if !offset.is_finite() {
        return Err(Error::domain("offset must be finite"));
    }
    let weights = eff.reduced_weights(dx)?;
    Ok(average_transfer_over(pulse, &weights, 1.0, offset))
}
