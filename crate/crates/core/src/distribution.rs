//! Rabi-frequency distributions of a thermally moving ion.
//!
//! The exact distribution is a weighted point set over all phonon-number
//! tuples `{nᵢ}`; each mode contributes an independent factor, so the set is
//! stored as per-mode factor lists and the tuple box is only ever walked, never
//! materialized. Smoothing it with a narrow Gaussian gives a density that is
//! fitted by the one-parameter model
//!
//! ```text
//! w_b(Ω) = 𝒩 ((Ω₀ − Ω)/Ω)⁴ exp(−((Ω₀ − Ω)/(b² Ω))^¼),   0 < Ω ≤ Ω₀
//! ```
//!
//! whose width parameter maps to the temperature through `T/T_D = c b²`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::modes::{thermal_probability, LaserGeometry, ModeSet};
use crate::optimize::{scan_then_brent, BracketPosition};
use crate::quadrature::{adaptive_gauss_kronrod, GaussLegendre};
use crate::{Error, Result};

/// Carrier coupling e^{−η²/2}·L_n(η²) of phonon level `n`.
pub fn carrier_matrix_element(n: u32, eta: f64) -> f64 {
    *carrier_matrix_elements(n, eta).last().expect("n + 1 elements")
}

/// Carrier couplings for n = 0..=n_max by the three-term Laguerre recurrence.
pub fn carrier_matrix_elements(n_max: u32, eta: f64) -> Vec<f64> {
    let x = eta * eta;
    let damping = (-0.5 * x).exp();
    let mut out = Vec::with_capacity(n_max as usize + 1);
    let (mut prev, mut cur) = (0.0, 1.0);
    out.push(damping);
    for k in 0..n_max {
        let kf = f64::from(k);
        let next = ((2.0 * kf + 1.0 - x) * cur - kf * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
        out.push(damping * cur);
    }
    out
}

/// Controls for [`enumerate_distribution`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnumerationOptions {
    /// Total thermal probability allowed outside the truncated box.
    pub mass_tolerance: f64,
    /// Hard cap on the number of phonon tuples.
    pub max_tuples: u128,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        Self { mass_tolerance: 1e-4, max_tuples: 100_000_000 }
    }
}

/// One mode's contribution: Rabi-frequency ratio |M_n| and probability p_th(n)
/// for each retained phonon number.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeFactor {
    pub rabi_ratios: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl ModeFactor {
    fn len(&self) -> usize {
        self.rabi_ratios.len()
    }
}

/// Weighted point set {(Ω_{nᵢ}, Πᵢ p_th(nᵢ))} over a truncated phonon box.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteRabiDistribution {
    factors: Vec<ModeFactor>,
    omega0: f64,
    truncation_deficit: f64,
}

impl DiscreteRabiDistribution {
    /// An explicit point list `(omega, probability)`.
    pub fn from_points(omega0: f64, points: &[(f64, f64)]) -> Result<Self> {
        if !(omega0 > 0.0) {
            return Err(Error::domain(format!("Ω₀ must be > 0, got {omega0}")));
        }
        if points.is_empty() {
            return Err(Error::InvalidInput("distribution needs at least one point".into()));
        }
        for &(w, p) in points {
            if !(w > 0.0 && w <= omega0) {
                return Err(Error::domain(format!("Rabi frequency {w} outside (0, Ω₀]")));
            }
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::domain(format!("probability {p} outside (0, 1]")));
            }
        }
        let total: f64 = points.iter().map(|p| p.1).sum();
        if total > 1.0 + 1e-9 {
            return Err(Error::InvalidInput(format!("probabilities sum to {total} > 1")));
        }
        let factor = ModeFactor {
            rabi_ratios: points.iter().map(|p| p.0 / omega0).collect(),
            probabilities: points.iter().map(|p| p.1).collect(),
        };
        Ok(Self { factors: vec![factor], omega0, truncation_deficit: (1.0 - total).max(0.0) })
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    /// 1 − Σ probabilities: thermal mass outside the enumerated box.
    pub fn truncation_deficit(&self) -> f64 {
        self.truncation_deficit
    }

    pub fn factors(&self) -> &[ModeFactor] {
        &self.factors
    }

    /// Per-mode phonon cutoffs n_max,i.
    pub fn cutoffs(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.len() - 1).collect()
    }

    pub fn len(&self) -> u128 {
        self.factors.iter().map(|f| f.len() as u128).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_probability(&self) -> f64 {
        self.factors.iter().map(|f| f.probabilities.iter().sum::<f64>()).product()
    }

    /// Points in lexicographic phonon-tuple order.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mut out = Vec::new();
        // cheap for the small sets where a materialized iterator is wanted
        self.visit_block(None, &mut |w, p| out.push((w, p)));
        out.into_iter()
    }

    /// Folds every point into one accumulator per index of the first mode, in
    /// parallel. The returned accumulators are in index order, so a sequential
    /// reduction over them is independent of the worker count.
    pub fn fold_blocks<T, I, F>(&self, init: I, fold: F) -> Vec<T>
    where
        T: Send,
        I: Fn() -> T + Sync,
        F: Fn(&mut T, f64, f64) + Sync,
    {
        (0..self.factors[0].len())
            .into_par_iter()
            .map(|i| {
                let mut acc = init();
                self.visit_block(Some(i), &mut |w, p| fold(&mut acc, w, p));
                acc
            })
            .collect()
    }

    fn visit_block(&self, first: Option<usize>, f: &mut dyn FnMut(f64, f64)) {
        fn recurse(
            factors: &[ModeFactor],
            ratio: f64,
            prob: f64,
            f: &mut dyn FnMut(f64, f64),
            omega0: f64,
        ) {
            match factors.split_first() {
                None => f(omega0 * ratio, prob),
                Some((head, rest)) => {
                    for (r, p) in head.rabi_ratios.iter().zip(&head.probabilities) {
                        recurse(rest, ratio * r, prob * p, f, omega0);
                    }
                }
            }
        }
        let (head, rest) = self.factors.split_first().expect("at least one factor");
        match first {
            Some(i) => recurse(rest, head.rabi_ratios[i], head.probabilities[i], f, self.omega0),
            None => recurse(&self.factors, 1.0, 1.0, f, self.omega0),
        }
    }

    /// Σ p_k Ω_k (unnormalized by the retained mass).
    pub fn first_moment(&self) -> f64 {
        self.fold_blocks(|| 0.0, |acc, w, p| *acc += w * p).into_iter().sum()
    }

    pub fn min_omega(&self) -> f64 {
        self.omega0 * self.factors.iter().map(|f| f.rabi_ratios.iter().copied().fold(f64::INFINITY, f64::min)).product::<f64>()
    }

    pub fn max_omega(&self) -> f64 {
        self.omega0 * self.factors.iter().map(|f| f.rabi_ratios.iter().copied().fold(0.0, f64::max)).product::<f64>()
    }
}

/// Smallest N whose cumulative thermal mass Σ_{n≤N} p_th(n, n̄) reaches `target`.
fn phonon_cutoff(n_bar: f64, target: f64) -> u32 {
    let mut cumulative = 0.0;
    let mut n = 0u32;
    loop {
        cumulative += thermal_probability(n, n_bar);
        if cumulative >= target || n == u32::MAX {
            return n;
        }
        n += 1;
    }
}

/// Exact Rabi-frequency distribution of `modes` for bare Rabi frequency
/// `omega0` (rad/s). Each mode keeps the smallest phonon range holding
/// `(1 − ε)^{1/#modes}` of its thermal mass; Rabi frequencies are the
/// magnitude of Ω₀·Πᵢ M_{nᵢ}.
pub fn enumerate_distribution(
    modes: &ModeSet,
    omega0: f64,
    options: &EnumerationOptions,
) -> Result<DiscreteRabiDistribution> {
    let eps = options.mass_tolerance;
    if !(eps > 0.0 && eps < 0.1) {
        return Err(Error::domain(format!("truncation tolerance must be in (0, 0.1), got {eps}")));
    }
    if !(omega0 > 0.0) {
        return Err(Error::domain(format!("Ω₀ must be > 0, got {omega0}")));
    }
    let target = (1.0 - eps).powf(1.0 / modes.len() as f64);
    let cutoffs: Vec<u32> = modes
        .modes()
        .iter()
        .map(|m| phonon_cutoff(m.mean_occupation, target))
        .collect();
    let tuples: u128 = cutoffs.iter().map(|&n| u128::from(n) + 1).product();
    if tuples > options.max_tuples {
        return Err(Error::Resource { tuples, cap: options.max_tuples });
    }
    let factors: Vec<ModeFactor> = modes
        .modes()
        .iter()
        .zip(&cutoffs)
        .map(|(m, &n_max)| ModeFactor {
            rabi_ratios: carrier_matrix_elements(n_max, m.lamb_dicke)
                .into_iter()
                .map(f64::abs)
                .collect(),
            probabilities: (0..=n_max).map(|n| thermal_probability(n, m.mean_occupation)).collect(),
        })
        .collect();
    let mut dist = DiscreteRabiDistribution { factors, omega0, truncation_deficit: 0.0 };
    dist.truncation_deficit = (1.0 - dist.total_probability()).max(0.0);
    Ok(dist)
}

/// Gaussian-smoothed density sampled on a uniform Ω grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedDistribution {
    /// rad/s
    pub grid_start: f64,
    /// rad/s
    pub grid_step: f64,
    /// s/rad
    pub density: Vec<f64>,
    /// rad/s
    pub sigma: f64,
    pub truncation_deficit: f64,
}

impl SmoothedDistribution {
    /// Wraps density samples taken at `grid_start + i·grid_step`.
    pub fn from_samples(grid_start: f64, grid_step: f64, density: Vec<f64>, sigma: f64) -> Result<Self> {
        if !(grid_step > 0.0) || density.len() < 2 {
            return Err(Error::InvalidInput("grid needs ≥ 2 points and a positive step".into()));
        }
        if density.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::InvalidInput("density must be non-negative".into()));
        }
        Ok(Self { grid_start, grid_step, density, sigma, truncation_deficit: 0.0 })
    }

    pub fn omega_at(&self, i: usize) -> f64 {
        self.grid_start + self.grid_step * i as f64
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.density.iter().enumerate().map(|(i, &d)| (self.omega_at(i), d))
    }

    pub fn trapezoid_integral(&self) -> f64 {
        let n = self.density.len();
        let inner: f64 = self.density[1..n - 1].iter().sum();
        self.grid_step * (inner + 0.5 * (self.density[0] + self.density[n - 1]))
    }
}

/// How far the Gaussian kernel is evaluated, in units of σ.
const KERNEL_HALF_WIDTH: f64 = 10.0;

/// Convolves the point set with a normalized Gaussian of width `sigma` and
/// samples the result on `grid_points` uniform points over
/// `[min Ω_k − 5σ, Ω₀]`.
pub fn smooth_distribution(
    dist: &DiscreteRabiDistribution,
    sigma: f64,
    grid_points: usize,
) -> Result<SmoothedDistribution> {
    if !(sigma > 0.0) {
        return Err(Error::domain(format!("smoothing width must be > 0, got {sigma}")));
    }
    if grid_points < 100 {
        return Err(Error::domain(format!("need ≥ 100 grid points, got {grid_points}")));
    }
    let lo = dist.min_omega() - 5.0 * sigma;
    let hi = dist.omega0();
    let step = (hi - lo) / (grid_points - 1) as f64;
    let reach = (KERNEL_HALF_WIDTH * sigma / step).ceil() as i64;
    let two_var = 2.0 * sigma * sigma;
    let q = (-step * step / (sigma * sigma)).exp();
    let prefactor = 1.0 / (2.0 * PI * sigma * sigma).sqrt();
    let last = grid_points as i64 - 1;

    let blocks = dist.fold_blocks(
        || vec![0.0f64; grid_points],
        |acc, omega, p| {
            let center = ((omega - lo) / step).round() as i64;
            let d0 = lo + step * center as f64 - omega;
            let g0 = p * prefactor * (-d0 * d0 / two_var).exp();
            // Gaussian along the grid by multiplicative recurrence in both directions
            let (mut g, mut r) = (g0, (-(2.0 * d0 * step + step * step) / two_var).exp());
            for j in center..=(center + reach).min(last) {
                if j >= 0 {
                    acc[j as usize] += g;
                }
                g *= r;
                r *= q;
            }
            let (mut g, mut r) = (g0, ((2.0 * d0 * step - step * step) / two_var).exp());
            let mut j = center - 1;
            while j >= (center - reach).max(0) {
                g *= r;
                r *= q;
                if j <= last {
                    acc[j as usize] += g;
                }
                j -= 1;
            }
        },
    );
    let mut density = vec![0.0; grid_points];
    for block in blocks {
        for (d, b) in density.iter_mut().zip(block) {
            *d += b;
        }
    }
    Ok(SmoothedDistribution {
        grid_start: lo,
        grid_step: step,
        density,
        sigma,
        truncation_deficit: dist.truncation_deficit(),
    })
}

/// Upper limit of the reduced variable u = ((Ω₀−Ω)/(b²Ω))^¼; the u^19 e^{−u}
/// weight beyond it is below 1e-39 of the total.
const U_MAX: f64 = 150.0;

/// ln J(b), J(b) = ∫₀^∞ u¹⁹ e^{−u} / (1 + b²u⁴)² du.
fn ln_reduced_integral(b: f64) -> Result<f64> {
    // the integrand is scaled by e^{-ln 19!} so its peak is O(1)
    let ln_fact19: f64 = (2..=19).map(|k| f64::from(k).ln()).sum();
    let b2 = b * b;
    let integrand = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        let den = 1.0 + b2 * u.powi(4);
        (19.0 * u.ln() - u - ln_fact19).exp() / (den * den)
    };
    let r = adaptive_gauss_kronrod(integrand, 0.0, U_MAX, 0.0, 1e-12, 2000)?;
    if !(r.value > 0.0) {
        return Err(Error::numeric(format!(
            "normalization integral for b = {b} is not positive ({:?})",
            r
        )));
    }
    Ok(r.value.ln() + ln_fact19)
}

/// 𝒩 such that ∫₀^{Ω₀} w_b(Ω) dΩ = 1.
///
/// Substituting Ω = Ω₀/(1 + b²u⁴) turns the integral into
/// 4𝒩Ω₀b¹⁰ ∫ u¹⁹e^{−u}/(1 + b²u⁴)² du, which puts the quadrature nodes where
/// the density peaks just below Ω₀ and leaves a smooth, gamma-shaped integrand.
pub fn normalize_pdf(omega0: f64, b: f64) -> Result<f64> {
    Ok(ln_normalization(omega0, b)?.exp())
}

fn ln_normalization(omega0: f64, b: f64) -> Result<f64> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::domain(format!("b must be > 0, got {b}")));
    }
    if !(omega0 > 0.0) {
        return Err(Error::domain(format!("Ω₀ must be > 0, got {omega0}")));
    }
    Ok(-(4.0 * omega0).ln() - 10.0 * b.ln() - ln_reduced_integral(b)?)
}

/// The model density w_b over Ω ∈ (0, Ω₀]. `b = 0` is the zero-temperature
/// point mass at Ω₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveRabiDistribution {
    omega0: f64,
    b: f64,
    ln_normalization: f64,
}

impl EffectiveRabiDistribution {
    pub fn new(omega0: f64, b: f64) -> Result<Self> {
        if !(omega0 > 0.0 && omega0.is_finite()) {
            return Err(Error::domain(format!("Ω₀ must be > 0, got {omega0}")));
        }
        if !(b >= 0.0 && b.is_finite()) {
            return Err(Error::domain(format!("b must be ≥ 0, got {b}")));
        }
        let ln_normalization = if b == 0.0 { f64::NAN } else { ln_normalization(omega0, b)? };
        Ok(Self { omega0, b, ln_normalization })
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn is_point_mass(&self) -> bool {
        self.b == 0.0
    }

    /// 𝒩 in s/rad; NaN for the point mass.
    pub fn normalization(&self) -> f64 {
        self.ln_normalization.exp()
    }

    /// Most probable Rabi frequency Ω₀/(1 + 2¹⁶b²).
    pub fn peak_omega(&self) -> f64 {
        self.omega0 / (1.0 + 65536.0 * self.b * self.b)
    }

    /// ln w_b(Ω); −∞ at Ω = Ω₀.
    fn ln_pdf(&self, omega: f64) -> f64 {
        let s = (self.omega0 - omega) / omega;
        if s <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.ln_normalization + 4.0 * s.ln() - (s / (self.b * self.b)).powf(0.25)
    }

    /// Weights of the reduced grid x = dx/2, 3dx/2, … < 1, proportional to
    /// w_b(xΩ₀) and summing to one. The point mass yields the single node x = 1.
    pub fn reduced_weights(&self, dx: f64) -> Result<Vec<(f64, f64)>> {
        if !(dx > 0.0 && dx <= 0.1) {
            return Err(Error::domain(format!("dx must be in (0, 0.1], got {dx}")));
        }
        if self.is_point_mass() {
            return Ok(vec![(1.0, 1.0)]);
        }
        let cells = 1.0 / dx;
        let n = if (cells - cells.round()).abs() < 1e-9 { cells.round() } else { cells.ceil() } as usize;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * dx).filter(|&x| x < 1.0).collect();
        let ln_w: Vec<f64> = xs.iter().map(|&x| self.ln_pdf(x * self.omega0)).collect();
        let max = ln_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::numeric(format!("all reduced-grid weights vanish for b = {}", self.b)));
        }
        let w: Vec<f64> = ln_w.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = w.iter().sum();
        Ok(xs.into_iter().zip(w).map(|(x, w)| (x, w / total)).collect())
    }

    /// ∫ w_b(Ω) f(Ω) dΩ on the Gauss-Legendre `rule` in the reduced variable u.
    pub fn expectation<F: Fn(f64) -> f64>(&self, f: F, rule: &GaussLegendre) -> f64 {
        if self.is_point_mass() {
            return f(self.omega0);
        }
        let b2 = self.b * self.b;
        let (mut num, mut den) = (0.0, 0.0);
        for (u, w) in rule.on_interval(0.0, U_MAX) {
            if u <= 0.0 {
                continue;
            }
            let u4 = u.powi(4);
            let d = 1.0 + b2 * u4;
            let g = w * (19.0 * (u / 19.0).ln() - u + 19.0).exp() / (d * d);
            num += g * f(self.omega0 / d);
            den += g;
        }
        num / den
    }
}

/// w_b(Ω) in s/rad.
pub fn effective_pdf(omega: f64, eff: &EffectiveRabiDistribution) -> Result<f64> {
    if !(omega > 0.0 && omega <= eff.omega0) {
        return Err(Error::domain(format!(
            "Ω = {omega} outside (0, Ω₀ = {}]",
            eff.omega0
        )));
    }
    if eff.is_point_mass() {
        return Ok(if omega == eff.omega0 { f64::INFINITY } else { 0.0 });
    }
    Ok(eff.ln_pdf(omega).exp())
}

/// Fitted width of an effective distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BFit {
    pub b: f64,
    /// √(SSE / Σ density²)
    pub residual: f64,
}

const B_BRACKET_LOG10: (f64, f64) = (-6.0, -1.0);

/// Least-squares width b of w_b against the smoothed density, with 𝒩
/// recomputed for every candidate. Searched on log₁₀ b ∈ [−6, −1].
pub fn fit_b(smoothed: &SmoothedDistribution, omega0: f64) -> Result<BFit> {
    let data: Vec<(f64, f64)> = smoothed
        .points()
        .filter(|&(w, _)| w > 0.0 && w <= omega0)
        .collect();
    if data.len() < 100 {
        return Err(Error::InvalidInput(format!(
            "smoothed distribution has {} points in (0, Ω₀]; need ≥ 100",
            data.len()
        )));
    }
    let norm2: f64 = data.iter().map(|d| d.1 * d.1).sum();
    if !(norm2 > 0.0) {
        return Err(Error::InvalidInput("smoothed density is identically zero".into()));
    }
    let mut failure = None;
    let mut sse = |log_b: f64| -> f64 {
        match EffectiveRabiDistribution::new(omega0, 10f64.powf(log_b)) {
            Ok(eff) => data
                .iter()
                .map(|&(w, d)| {
                    let m = if w >= omega0 { 0.0 } else { eff.ln_pdf(w).exp() };
                    (m - d) * (m - d)
                })
                .sum(),
            Err(e) => {
                failure.get_or_insert(e);
                f64::INFINITY
            }
        }
    };
    // relative width 1e-6 in b is 1e-6/ln 10 in log₁₀ b
    let (min, position) = scan_then_brent(&mut sse, B_BRACKET_LOG10.0, B_BRACKET_LOG10.1, 51, 4e-7);
    if let Some(e) = failure {
        return Err(e);
    }
    if position != BracketPosition::Interior {
        return Err(Error::FitFailure(format!(
            "best b = {:.3e} sits on the search bracket [1e-6, 1e-1]",
            10f64.powf(min.x)
        )));
    }
    Ok(BFit { b: 10f64.powf(min.x), residual: (min.value / norm2).sqrt() })
}

/// Bare Rabi frequency from the time of the first excitation maximum,
/// Ω₀ = (π/τ_max)(1 + 2¹⁶b²).
pub fn omega0_from_tau_max(tau_max: f64, b: f64) -> Result<f64> {
    if !(tau_max > 0.0) {
        return Err(Error::domain(format!("τ_max must be > 0, got {tau_max}")));
    }
    if !(b >= 0.0) {
        return Err(Error::domain(format!("b must be ≥ 0, got {b}")));
    }
    Ok(PI / tau_max * (1.0 + 65536.0 * b * b))
}

/// Everything except the temperature needed to run enumerate → smooth → fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSetup {
    pub geometry: LaserGeometry,
    /// rad/s, one per projection angle
    pub mode_frequencies: Vec<f64>,
    /// rad/s; b does not depend on it, it only sets the scale
    pub omega0: f64,
    pub enumeration: EnumerationOptions,
    /// σ/Ω₀
    pub sigma_ratio: f64,
    pub grid_points: usize,
}

impl CalibrationSetup {
    pub fn new(geometry: LaserGeometry, mode_frequencies: Vec<f64>, omega0: f64) -> Self {
        Self {
            geometry,
            mode_frequencies,
            omega0,
            enumeration: EnumerationOptions::default(),
            sigma_ratio: 1e-3,
            grid_points: 2000,
        }
    }

    /// Exact distribution at `temperature` (K).
    pub fn distribution(&self, temperature: f64) -> Result<DiscreteRabiDistribution> {
        let modes = ModeSet::thermal(&self.geometry, &self.mode_frequencies, temperature)?;
        enumerate_distribution(&modes, self.omega0, &self.enumeration)
    }

    /// Smoothed distribution at `temperature` (K).
    pub fn smoothed(&self, temperature: f64) -> Result<SmoothedDistribution> {
        smooth_distribution(
            &self.distribution(temperature)?,
            self.sigma_ratio * self.omega0,
            self.grid_points,
        )
    }

    /// Fitted b at `temperature` (K).
    pub fn fit_b(&self, temperature: f64) -> Result<BFit> {
        fit_b(&self.smoothed(temperature)?, self.omega0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    #[serde(rename = "T_over_TD")]
    pub temperature_over_td: f64,
    pub b: f64,
}

/// Linear map T/T_D = c·b².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureCalibration {
    pub c: f64,
    #[serde(rename = "T_D_kelvin")]
    pub doppler_temperature: f64,
    /// RMS of T/T_D − c b² over the calibration points
    #[serde(rename = "residual")]
    pub fit_residual: f64,
    /// Coefficient of determination of the through-origin regression
    /// (uncentered: 1 − SSE/Σ(T/T_D)²).
    pub r_squared: f64,
    pub points: Vec<CalibrationPoint>,
}

impl TemperatureCalibration {
    /// A calibration with a known constant and no supporting points.
    pub fn from_constant(c: f64, doppler_temperature: f64) -> Result<Self> {
        if !(c > 0.0) || !(doppler_temperature > 0.0) {
            return Err(Error::domain("c and T_D must both be > 0"));
        }
        Ok(Self { c, doppler_temperature, fit_residual: 0.0, r_squared: 1.0, points: vec![] })
    }

    /// Least-squares slope through the origin.
    pub fn from_points(points: Vec<CalibrationPoint>, doppler_temperature: f64) -> Result<Self> {
        let sxy: f64 = points.iter().map(|p| p.temperature_over_td * p.b * p.b).sum();
        let sxx: f64 = points.iter().map(|p| p.b.powi(4)).sum();
        let syy: f64 = points.iter().map(|p| p.temperature_over_td.powi(2)).sum();
        if !(sxx > 0.0) {
            return Err(Error::numeric("calibration points have no spread in b"));
        }
        let c = sxy / sxx;
        let sse: f64 = points
            .iter()
            .map(|p| (p.temperature_over_td - c * p.b * p.b).powi(2))
            .sum();
        Ok(Self {
            c,
            doppler_temperature,
            fit_residual: (sse / points.len() as f64).sqrt(),
            r_squared: 1.0 - sse / syy,
            points,
        })
    }

    pub fn temperature_over_td(&self, b: f64) -> f64 {
        self.c * b * b
    }

    pub fn b_for(&self, temperature_over_td: f64) -> f64 {
        (temperature_over_td / self.c).sqrt()
    }
}

/// Fits b at every temperature of `temperature_grid` (K) and regresses
/// T/T_D on b² through the origin.
pub fn calibrate_c(
    setup: &CalibrationSetup,
    doppler_temperature: f64,
    temperature_grid: &[f64],
) -> Result<TemperatureCalibration> {
    if !(doppler_temperature > 0.0) {
        return Err(Error::domain(format!("T_D must be > 0, got {doppler_temperature}")));
    }
    if temperature_grid.len() < 5 {
        return Err(Error::InvalidInput(format!(
            "temperature grid needs ≥ 5 points, got {}",
            temperature_grid.len()
        )));
    }
    let (lo, hi) = temperature_grid
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &t| (l.min(t), h.max(t)));
    let tol = 1e-9;
    if lo / doppler_temperature > 0.5 + tol || hi / doppler_temperature < 5.0 - tol {
        return Err(Error::InvalidInput(format!(
            "temperature grid must span [0.5, 5]·T_D, got [{:.3}, {:.3}]·T_D",
            lo / doppler_temperature,
            hi / doppler_temperature
        )));
    }
    let fits: Vec<Result<CalibrationPoint>> = temperature_grid
        .par_iter()
        .map(|&t| {
            let fit = setup.fit_b(t).map_err(|e| {
                Error::FitFailure(format!("calibration at T = {t:.4e} K failed: {e}"))
            })?;
            Ok(CalibrationPoint { temperature_over_td: t / doppler_temperature, b: fit.b })
        })
        .collect();
    let points = fits.into_iter().collect::<Result<Vec<_>>>()?;
    TemperatureCalibration::from_points(points, doppler_temperature)
}
