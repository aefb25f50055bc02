//! Qubit time evolution: square pulses averaged over Rabi-frequency
//! distributions, and exact piecewise-constant propagation of shaped,
//! chirped pulses.
//!
//! Amplitudes follow
//!
//! ```text
//! ċ_g = (i/2)[(δ + δ′) c_g + x y Ω c_e]
//! ċ_e = (i/2)[−(δ + δ′) c_e + x y Ω c_g]
//! ```
//!
//! with x the thermal reduction of the Rabi frequency, y a static amplitude
//! error and δ′ a static detuning error.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::{DiscreteRabiDistribution, EffectiveRabiDistribution};
use crate::quadrature::GaussLegendre;
use crate::{Error, Result};

/// Default node count of the fixed-order rule in [`square_pulse_effective`].
pub const DEFAULT_QUADRATURE_NODES: usize = 512;

/// Floor applied to the infidelity before taking log₁₀.
pub const INFIDELITY_FLOOR: f64 = 1e-12;

/// Excited-state population after a resonant square pulse of duration `t`,
/// Σ_k p_k (1 − cos Ω_k t)/2. Mass outside the truncated box does not
/// transfer.
pub fn square_pulse_exact(dist: &DiscreteRabiDistribution, t: f64) -> f64 {
    square_pulse_exact_trace(dist, &[t])[0]
}

/// [`square_pulse_exact`] at every time in `times`, in one pass over the
/// distribution.
pub fn square_pulse_exact_trace(dist: &DiscreteRabiDistribution, times: &[f64]) -> Vec<f64> {
    let blocks = dist.fold_blocks(
        || vec![0.0f64; times.len()],
        |acc, omega, p| {
            for (a, &t) in acc.iter_mut().zip(times) {
                *a += p * (1.0 - (omega * t).cos());
            }
        },
    );
    let mut out = vec![0.0; times.len()];
    for block in blocks {
        for (o, b) in out.iter_mut().zip(block) {
            *o += b;
        }
    }
    out.iter_mut().for_each(|v| *v *= 0.5);
    out
}

/// Excited-state population under the effective model,
/// (1/2)∫ w_b(Ω)(1 − cos Ωt) dΩ, on an `n_nodes` Gauss-Legendre rule.
pub fn square_pulse_effective(eff: &EffectiveRabiDistribution, t: f64, n_nodes: usize) -> f64 {
    let rule = GaussLegendre::new(n_nodes.max(64));
    square_pulse_effective_with(eff, t, &rule)
}

/// [`square_pulse_effective`] with a prebuilt rule.
pub fn square_pulse_effective_with(eff: &EffectiveRabiDistribution, t: f64, rule: &GaussLegendre) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    // 1 − cos θ = 2 sin²(θ/2) avoids cancellation at small θ
    eff.expectation(|w| (0.5 * w * t).sin().powi(2), rule)
}

/// Piecewise-constant drive: each sample holds a Rabi amplitude and detuning
/// for its duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSample {
    /// s
    pub duration: f64,
    /// rad/s
    pub rabi_amplitude: f64,
    /// rad/s
    pub detuning: f64,
}

/// Parameters a RAP pulse was generated from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RapParameters {
    /// peak Rabi frequency Ω₀^(cal), rad/s
    pub omega0_cal: f64,
    /// s
    pub tau_sigma: f64,
    /// r_c, Hz
    pub chirp_range: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseProgram {
    samples: Vec<PulseSample>,
    /// Start time of the first sample, s.
    start_time: f64,
    rap: Option<RapParameters>,
}

impl PulseProgram {
    pub fn new(samples: Vec<PulseSample>, start_time: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("pulse program needs at least one sample".into()));
        }
        for (j, s) in samples.iter().enumerate() {
            if !(s.duration > 0.0) {
                return Err(Error::domain(format!("sample {j}: duration must be > 0")));
            }
            if !(s.rabi_amplitude >= 0.0) {
                return Err(Error::domain(format!("sample {j}: Rabi amplitude must be ≥ 0")));
            }
            if !s.detuning.is_finite() {
                return Err(Error::domain(format!("sample {j}: detuning is not finite")));
            }
        }
        Ok(Self { samples, start_time, rap: None })
    }

    pub fn samples(&self) -> &[PulseSample] {
        &self.samples
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn rap_parameters(&self) -> Option<&RapParameters> {
        self.rap.as_ref()
    }

    pub fn total_duration(&self) -> f64 {
        self.samples.iter().map(|s| s.duration).sum()
    }

    /// `(t_start, sample)` pairs.
    pub fn timeline(&self) -> impl Iterator<Item = (f64, &PulseSample)> {
        self.samples.iter().scan(self.start_time, |t, s| {
            let start = *t;
            *t += s.duration;
            Some((start, s))
        })
    }

    /// The same pulse with every detuning negated.
    pub fn with_reversed_chirp(&self) -> Self {
        let mut out = self.clone();
        for s in &mut out.samples {
            s.detuning = -s.detuning;
        }
        if let Some(rap) = &mut out.rap {
            rap.chirp_range = -rap.chirp_range;
        }
        out
    }
}

/// Gaussian RAP pulse truncated to `[−2τ_σ, 2τ_σ]` and held constant over
/// `n_samples` equal steps. Each step takes the amplitude
/// Ω₀^(cal)·exp(−t_c²/2τ_σ²) and detuning π·r_c·t_c/τ_σ at its midpoint t_c.
pub fn build_rap_pulse(omega0_cal: f64, tau_sigma: f64, chirp_range: f64, n_samples: usize) -> Result<PulseProgram> {
    if n_samples < 2 {
        return Err(Error::domain(format!("need ≥ 2 samples, got {n_samples}")));
    }
    if !(omega0_cal >= 0.0) || !(tau_sigma > 0.0) || !chirp_range.is_finite() {
        return Err(Error::domain("peak amplitude must be ≥ 0, τ_σ > 0 and the chirp range finite"));
    }
    let step = 4.0 * tau_sigma / n_samples as f64;
    let start = -2.0 * tau_sigma;
    let samples = (0..n_samples)
        .map(|j| {
            let tc = start + (j as f64 + 0.5) * step;
            PulseSample {
                duration: step,
                rabi_amplitude: omega0_cal * (-tc * tc / (2.0 * tau_sigma * tau_sigma)).exp(),
                detuning: std::f64::consts::PI * chirp_range * tc / tau_sigma,
            }
        })
        .collect();
    let mut pulse = PulseProgram::new(samples, start)?;
    pulse.rap = Some(RapParameters { omega0_cal, tau_sigma, chirp_range, n_samples });
    Ok(pulse)
}

/// Constant Rabi amplitude with detuning swept linearly at `sweep_rate`
/// (rad/s²) from −`detuning_span` to +`detuning_span`, held piecewise
/// constant over `n_samples` steps with midpoint detunings.
pub fn build_linear_chirp_pulse(
    rabi_amplitude: f64,
    sweep_rate: f64,
    detuning_span: f64,
    n_samples: usize,
) -> Result<PulseProgram> {
    if n_samples < 2 || !(sweep_rate > 0.0) || !(detuning_span > 0.0) || !(rabi_amplitude >= 0.0) {
        return Err(Error::domain("linear chirp needs ≥ 2 samples, positive sweep rate and span, amplitude ≥ 0"));
    }
    let half = detuning_span / sweep_rate;
    let step = 2.0 * half / n_samples as f64;
    let samples = (0..n_samples)
        .map(|j| PulseSample {
            duration: step,
            rabi_amplitude,
            detuning: sweep_rate * (-half + (j as f64 + 0.5) * step),
        })
        .collect();
    PulseProgram::new(samples, -half)
}

/// Ground and excited amplitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitAmplitudes {
    pub c_g: Complex64,
    pub c_e: Complex64,
}

impl QubitAmplitudes {
    pub fn ground() -> Self {
        Self { c_g: Complex64::new(1.0, 0.0), c_e: Complex64::new(0.0, 0.0) }
    }

    pub fn excited() -> Self {
        Self { c_g: Complex64::new(0.0, 0.0), c_e: Complex64::new(1.0, 0.0) }
    }

    /// Normalizes `(c_g, c_e)`; fails for the zero vector.
    pub fn new(c_g: Complex64, c_e: Complex64) -> Result<Self> {
        let norm = (c_g.norm_sqr() + c_e.norm_sqr()).sqrt();
        if !(norm > 0.0) {
            return Err(Error::InvalidInput("zero state vector".into()));
        }
        Ok(Self { c_g: c_g / norm, c_e: c_e / norm })
    }

    pub fn norm_sqr(&self) -> f64 {
        self.c_g.norm_sqr() + self.c_e.norm_sqr()
    }

    pub fn p_excited(&self) -> f64 {
        self.c_e.norm_sqr()
    }
}

/// Applies each sample's exact propagator. With drive Ω' = xyΩ, total
/// detuning Δ = δ + δ′ and Ω_R = √(Ω'² + Δ²), a sample of length τ maps
///
/// ```text
/// c ↦ [cos(Ω_R τ/2)·1 + i sin(Ω_R τ/2)/Ω_R · ((Δ, Ω'), (Ω', −Δ))] c
/// ```
pub fn propagate(
    pulse: &PulseProgram,
    x: f64,
    y: f64,
    delta_prime: f64,
    initial: QubitAmplitudes,
) -> QubitAmplitudes {
    let i = Complex64::i();
    let (mut cg, mut ce) = (initial.c_g, initial.c_e);
    for s in &pulse.samples {
        let drive = x * y * s.rabi_amplitude;
        let det = s.detuning + delta_prime;
        let rate = drive.hypot(det);
        if rate == 0.0 {
            continue;
        }
        let (sin, cos) = (0.5 * rate * s.duration).sin_cos();
        // U = ((a, β), (β, ā)) with a = cos + i sin Δ/Ω_R and β = i sin Ω'/Ω_R
        let a = Complex64::new(cos, sin * det / rate);
        let beta = i * (sin * drive / rate);
        let ng = a * cg + beta * ce;
        let ne = beta * cg + a.conj() * ce;
        // U is unitary, so any change of norm is rounding; over 10⁶ steps it
        // would otherwise accumulate to ~10⁻¹⁰
        let scale = (ng.norm_sqr() + ne.norm_sqr()).sqrt().recip();
        cg = ng * scale;
        ce = ne * scale;
    }
    QubitAmplitudes { c_g: cg, c_e: ce }
}

/// Integrates the same equations with classical RK4 at `steps_per_sample`
/// steps per sample. Only useful as an independent check of [`propagate`].
pub fn propagate_rk4(
    pulse: &PulseProgram,
    x: f64,
    y: f64,
    delta_prime: f64,
    initial: QubitAmplitudes,
    steps_per_sample: usize,
) -> QubitAmplitudes {
    let half_i = Complex64::new(0.0, 0.5);
    let mut c = [initial.c_g, initial.c_e];
    for s in &pulse.samples {
        let drive = x * y * s.rabi_amplitude;
        let det = s.detuning + delta_prime;
        let rhs = |c: [Complex64; 2]| {
            [
                half_i * (det * c[0] + drive * c[1]),
                half_i * (-det * c[1] + drive * c[0]),
            ]
        };
        let h = s.duration / steps_per_sample as f64;
        for _ in 0..steps_per_sample {
            let k1 = rhs(c);
            let k2 = rhs([c[0] + k1[0] * (h / 2.0), c[1] + k1[1] * (h / 2.0)]);
            let k3 = rhs([c[0] + k2[0] * (h / 2.0), c[1] + k2[1] * (h / 2.0)]);
            let k4 = rhs([c[0] + k3[0] * h, c[1] + k3[1] * h]);
            for j in 0..2 {
                c[j] += (k1[j] + k2[j] * 2.0 + k3[j] * 2.0 + k4[j]) * (h / 6.0);
            }
        }
    }
    QubitAmplitudes { c_g: c[0], c_e: c[1] }
}

/// Population transferred by a pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferResult {
    pub p_excited: f64,
    pub infidelity: f64,
    pub log10_infidelity: f64,
}

impl TransferResult {
    pub fn from_p_excited(p_excited: f64) -> Self {
        let p = p_excited.clamp(0.0, 1.0);
        let infidelity = 1.0 - p;
        Self {
            p_excited: p,
            infidelity,
            log10_infidelity: infidelity.max(INFIDELITY_FLOOR).log10(),
        }
    }
}

/// Transfer from the ground state averaged over weighted thermal reductions
/// `(x, weight)`; weights must sum to one.
pub fn average_transfer_over(pulse: &PulseProgram, weights: &[(f64, f64)], y: f64, delta_prime: f64) -> TransferResult {
    let per_x: Vec<f64> = weights
        .par_iter()
        .map(|&(x, _)| propagate(pulse, x, y, delta_prime, QubitAmplitudes::ground()).p_excited())
        .collect();
    let p = weights.iter().zip(per_x).map(|(&(_, w), p)| w * p).sum();
    TransferResult::from_p_excited(p)
}

/// Ground-state transfer averaged over x ∈ {dx/2, 3dx/2, …} with weights
/// ∝ w_b(xΩ₀).
pub fn thermal_average_transfer(
    pulse: &PulseProgram,
    eff: &EffectiveRabiDistribution,
    y: f64,
    delta_prime: f64,
    dx: f64,
) -> Result<TransferResult> {
    if !(y > 0.0) {
        return Err(Error::domain(format!("amplitude scale y must be > 0, got {y}")));
    }
    let weights = eff.reduced_weights(dx)?;
    Ok(average_transfer_over(pulse, &weights, y, delta_prime))
}

/// Reduced weights `(Ω_k/Ω₀, p_k)` of an exact distribution, renormalized
/// to the retained mass.
pub fn exact_reduced_weights(dist: &DiscreteRabiDistribution) -> Vec<(f64, f64)> {
    let total = 1.0 - dist.truncation_deficit();
    dist.iter().map(|(w, p)| (w / dist.omega0(), p / total)).collect()
}
