//! Run configuration: JSON with a schema version, an optional named preset
//! that is deep-merged under the user's keys, and field-level validation.
//!
//! Units at this boundary are MHz/kHz for frequencies, μs for times and mK
//! for temperatures; everything is converted to rad/s, s and K on the way in.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use thermal_rabi::constants::hz_to_angular;
use thermal_rabi::distribution::{CalibrationSetup, EnumerationOptions, TemperatureCalibration};
use thermal_rabi::modes::LaserGeometry;
use thermal_rabi::robustness::{SweepSpec, REFERENCE_CHIRP_HZ};

pub const SCHEMA_VERSION: u32 = 1;

/// The default preset, used when no config file is given.
pub const DEFAULT_PRESET: &str = "ca40_reference";

#[derive(Debug, Error)]
#[error("config: {0}")]
pub struct ConfigError(pub String);

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

/// Keys whose value replaces the preset's wholesale instead of merging.
const REPLACED_KEYS: [&str; 2] = ["thermal", "pulse"];

/// Named parameter sets. `ca40_reference` is the full single-ion setup; the
/// `rap_*` presets only set the pulse and the amplitude error window.
pub fn preset(name: &str) -> Result<Value, ConfigError> {
    let rap = |omega_khz: f64, chirp_khz: f64| {
        json!({
            "pulse": {"omega0_cal_khz": omega_khz, "tau_sigma_us": 50.0, "chirp_range_khz": chirp_khz, "n_samples": 50}
        })
    };
    match name {
        "ca40_reference" => Ok(json!({
            "geometry": {"wavelength_nm": 729.0, "mass_u": 40.0, "projection_angles_deg": [45.0, 60.0, 60.0]},
            "mode_frequencies_mhz": [1.35, 2.4, 3.0],
            "doppler_temperature_mk": 0.55,
            "thermal": {"temperature_over_td": 2.0},
            "omega0_khz": 105.0,
            "calibration_c": 4.0e6,
            "pulse": {"omega0_cal_khz": 221.0, "tau_sigma_us": 50.0, "chirp_range_khz": 100.0, "n_samples": 50},
            "rap_scan": {
                "amplitudes_khz": (1..=40).map(|k| 10.0 * f64::from(k)).collect::<Vec<_>>(),
                "chirp_ranges_khz": [0.0, 50.0, 100.0, 150.0]
            },
            "calibrate": {"temperatures_over_td": [0.5, 1.0, 2.0, 3.0, 4.0, 5.0]}
        })),
        "rap_unchirped" => Ok(rap(332.0, 0.0)),
        "rap_100khz" => Ok(rap(221.0, 100.0)),
        "rap_150khz" => Ok(rap(332.0, 150.0)),
        other => Err(invalid(format!(
            "unknown preset {other:?}; known presets: ca40_reference, rap_unchirped, rap_100khz, rap_150khz"
        ))),
    }
}

fn deep_merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if !REPLACED_KEYS.contains(&k.as_str()) => deep_merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Expands `preset` (a name or a list of names, applied in order) and merges
/// the remaining keys on top.
pub fn resolve(user: Value) -> Result<Value, ConfigError> {
    let Value::Object(map) = &user else {
        return Err(invalid("top level must be a JSON object"));
    };
    let names: Vec<String> = match map.get("preset") {
        None => vec![],
        Some(Value::String(s)) => vec![s.clone()],
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| v.as_str().map(str::to_owned).ok_or_else(|| invalid("preset: list entries must be strings")))
            .collect::<Result<_, _>>()?,
        Some(_) => return Err(invalid("preset: must be a string or a list of strings")),
    };
    let mut merged = json!({});
    for name in &names {
        deep_merge(&mut merged, preset(name)?);
    }
    deep_merge(&mut merged, user);
    Ok(merged)
}

/// SHA-256 of the compact serialization of the resolved config (object keys
/// are sorted, so the hash does not depend on key order in the file).
pub fn config_hash(resolved: &Value) -> String {
    let bytes = serde_json::to_vec(resolved).expect("JSON values always serialize");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub wavelength_nm: f64,
    pub mass_u: f64,
    pub projection_angles_deg: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalConfig {
    pub temperature_over_td: Option<f64>,
    pub temperature_mk: Option<f64>,
    pub b: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    pub omega0_cal_khz: f64,
    pub tau_sigma_us: f64,
    pub chirp_range_khz: f64,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
}

fn default_samples() -> usize {
    50
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsConfig {
    pub truncation_epsilon: f64,
    pub max_tuples: f64,
    pub sigma_ratio: f64,
    pub grid_points: usize,
    pub dx: f64,
    pub quadrature_nodes: usize,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self {
            truncation_epsilon: 1e-4,
            max_tuples: 1e8,
            sigma_ratio: 1e-3,
            grid_points: 2000,
            dx: 0.01,
            quadrature_nodes: thermal_rabi::dynamics::DEFAULT_QUADRATURE_NODES,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RabiConfig {
    pub t_max_us: f64,
    pub n_points: usize,
}

impl Default for RabiConfig {
    fn default() -> Self {
        Self { t_max_us: 50.0, n_points: 501 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RapScanConfig {
    pub amplitudes_khz: Vec<f64>,
    pub chirp_ranges_khz: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapConfig {
    pub y_range: [f64; 2],
    /// δ′ range in units of 2π·100 kHz
    pub delta_range_chirp_units: [f64; 2],
    pub n_y: usize,
    pub n_delta: usize,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self { y_range: [0.5, 1.5], delta_range_chirp_units: [-1.5, 1.5], n_y: 61, n_delta: 61 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    pub temperatures_over_td: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub t_max_us: f64,
    pub n_points: usize,
    pub n_shots: u32,
    pub noiseless: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { t_max_us: 50.0, n_points: 200, n_shots: 200, noiseless: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub joint_polish: bool,
    pub synthetic: SyntheticConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { joint_polish: true, synthetic: SyntheticConfig::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub preset: Option<Value>,
    pub geometry: Option<GeometryConfig>,
    pub mode_frequencies_mhz: Option<Vec<f64>>,
    pub doppler_temperature_mk: Option<f64>,
    pub thermal: Option<ThermalConfig>,
    pub omega0_khz: Option<f64>,
    pub calibration_c: Option<f64>,
    pub pulse: Option<PulseConfig>,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub rabi: RabiConfig,
    pub rap_scan: Option<RapScanConfig>,
    #[serde(default)]
    pub map: MapConfig,
    pub calibrate: Option<CalibrateConfig>,
    #[serde(default)]
    pub fit: FitConfig,
}

/// Thermal input after validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Thermal {
    /// K
    Temperature(f64),
    B(f64),
}

fn positive(name: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(format!("{name}: must be a positive number, got {v}")))
    }
}

fn required<'a, T>(name: &str, v: &'a Option<T>) -> Result<&'a T, ConfigError> {
    v.as_ref().ok_or_else(|| invalid(format!("{name}: missing")))
}

impl RunConfig {
    pub fn from_value(resolved: Value) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_value(resolved).map_err(|e| invalid(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                cfg.schema_version
            )));
        }
        let n = &cfg.numerics;
        positive("numerics.truncation_epsilon", n.truncation_epsilon)?;
        if n.truncation_epsilon >= 1.0 {
            return Err(invalid("numerics.truncation_epsilon: must be < 1"));
        }
        positive("numerics.max_tuples", n.max_tuples)?;
        positive("numerics.sigma_ratio", n.sigma_ratio)?;
        if !(n.dx > 0.0 && n.dx <= 0.1) {
            return Err(invalid(format!("numerics.dx: must be in (0, 0.1], got {}", n.dx)));
        }
        if n.grid_points < 100 {
            return Err(invalid("numerics.grid_points: must be ≥ 100"));
        }
        if n.quadrature_nodes < 64 {
            return Err(invalid("numerics.quadrature_nodes: must be ≥ 64"));
        }
        Ok(cfg)
    }

    pub fn geometry(&self) -> Result<LaserGeometry, ConfigError> {
        let g = required("geometry", &self.geometry)?;
        LaserGeometry::new(
            positive("geometry.wavelength_nm", g.wavelength_nm)? * 1e-9,
            positive("geometry.mass_u", g.mass_u)? * thermal_rabi::constants::ATOMIC_MASS_UNIT,
            g.projection_angles_deg.iter().map(|a| a.to_radians()).collect(),
        )
        .map_err(|e| invalid(format!("geometry: {e}")))
    }

    /// rad/s
    pub fn mode_frequencies(&self) -> Result<Vec<f64>, ConfigError> {
        required("mode_frequencies_mhz", &self.mode_frequencies_mhz)?
            .iter()
            .map(|&f| positive("mode_frequencies_mhz", f).map(|f| hz_to_angular(f * 1e6)))
            .collect()
    }

    /// K
    pub fn doppler_temperature(&self) -> Result<f64, ConfigError> {
        Ok(positive("doppler_temperature_mk", *required("doppler_temperature_mk", &self.doppler_temperature_mk)?)? * 1e-3)
    }

    /// rad/s
    pub fn omega0(&self) -> Result<f64, ConfigError> {
        Ok(hz_to_angular(positive("omega0_khz", *required("omega0_khz", &self.omega0_khz)?)? * 1e3))
    }

    pub fn thermal(&self) -> Result<Thermal, ConfigError> {
        let t = self.thermal.as_ref().ok_or_else(|| {
            invalid("thermal: missing; give exactly one of thermal.temperature_over_td, thermal.temperature_mk, thermal.b")
        })?;
        match (t.temperature_over_td, t.temperature_mk, t.b) {
            (Some(r), None, None) => Ok(Thermal::Temperature(
                positive("thermal.temperature_over_td", r)? * self.doppler_temperature()?,
            )),
            (None, Some(mk), None) => Ok(Thermal::Temperature(positive("thermal.temperature_mk", mk)? * 1e-3)),
            (None, None, Some(b)) if b >= 0.0 && b.is_finite() => Ok(Thermal::B(b)),
            (None, None, Some(b)) => Err(invalid(format!("thermal.b: must be ≥ 0, got {b}"))),
            (None, None, None) => Err(invalid(
                "thermal: give exactly one of thermal.temperature_over_td, thermal.temperature_mk, thermal.b",
            )),
            _ => Err(invalid(
                "thermal: more than one of temperature_over_td, temperature_mk, b given; exactly one is allowed",
            )),
        }
    }

    /// Temperature in K; fails if the thermal input is a bare b.
    pub fn temperature(&self, command: &str) -> Result<f64, ConfigError> {
        match self.thermal()? {
            Thermal::Temperature(t) => Ok(t),
            Thermal::B(_) => Err(invalid(format!(
                "thermal: `{command}` needs a temperature (thermal.temperature_over_td or thermal.temperature_mk), not b"
            ))),
        }
    }

    pub fn calibration(&self) -> Result<TemperatureCalibration, ConfigError> {
        let c = positive("calibration_c", *required("calibration_c", &self.calibration_c)?)?;
        TemperatureCalibration::from_constant(c, self.doppler_temperature()?).map_err(|e| invalid(e.to_string()))
    }

    /// b from the thermal input, converting temperatures through calibration_c.
    pub fn b(&self) -> Result<f64, ConfigError> {
        match self.thermal()? {
            Thermal::B(b) => Ok(b),
            Thermal::Temperature(t) => {
                let cal = self.calibration()?;
                Ok(cal.b_for(t / cal.doppler_temperature))
            }
        }
    }

    pub fn calibration_setup(&self) -> Result<CalibrationSetup, ConfigError> {
        let mut setup = CalibrationSetup::new(self.geometry()?, self.mode_frequencies()?, self.omega0()?);
        setup.enumeration = EnumerationOptions {
            mass_tolerance: self.numerics.truncation_epsilon,
            max_tuples: self.numerics.max_tuples as u128,
        };
        setup.sigma_ratio = self.numerics.sigma_ratio;
        setup.grid_points = self.numerics.grid_points;
        Ok(setup)
    }

    pub fn pulse(&self) -> Result<&PulseConfig, ConfigError> {
        let p = required("pulse", &self.pulse)?;
        positive("pulse.omega0_cal_khz", p.omega0_cal_khz)?;
        positive("pulse.tau_sigma_us", p.tau_sigma_us)?;
        if !p.chirp_range_khz.is_finite() {
            return Err(invalid("pulse.chirp_range_khz: must be finite"));
        }
        if p.n_samples < 2 {
            return Err(invalid("pulse.n_samples: must be ≥ 2"));
        }
        Ok(p)
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec, ConfigError> {
        let m = &self.map;
        if m.n_y < 2 || m.n_delta < 2 {
            return Err(invalid("map.n_y, map.n_delta: must be ≥ 2"));
        }
        if !(m.y_range[0] > 0.0 && m.y_range[1] > m.y_range[0]) {
            return Err(invalid("map.y_range: must satisfy 0 < lo < hi"));
        }
        if !(m.delta_range_chirp_units[1] > m.delta_range_chirp_units[0]) {
            return Err(invalid("map.delta_range_chirp_units: must satisfy lo < hi"));
        }
        let unit = hz_to_angular(REFERENCE_CHIRP_HZ);
        Ok(SweepSpec {
            y_range: (m.y_range[0], m.y_range[1]),
            delta_range: (m.delta_range_chirp_units[0] * unit, m.delta_range_chirp_units[1] * unit),
            n_y: m.n_y,
            n_delta: m.n_delta,
            dx: self.numerics.dx,
        })
    }
}
