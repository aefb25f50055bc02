use std::f64::consts::{PI, TAU};

use thermal_rabi::constants::hz_to_angular;
use thermal_rabi::distribution::{CalibrationSetup, EffectiveRabiDistribution};
use thermal_rabi::dynamics::{
    average_transfer_over, build_linear_chirp_pulse, build_rap_pulse, exact_reduced_weights, propagate,
    thermal_average_transfer, QubitAmplitudes,
};
use thermal_rabi::modes::{LaserGeometry, REFERENCE_DOPPLER_TEMPERATURE, REFERENCE_MODE_FREQUENCIES_HZ};

const B_REF: f64 = 7.1e-4;

fn rap_sets() -> [(f64, f64); 3] {
    // (chirp range Hz, Ω₀^(cal) rad/s)
    [(0.0, TAU * 332e3), (100e3, TAU * 221e3), (150e3, TAU * 332e3)]
}

#[test]
fn landau_zener_survival() {
    let rabi = TAU * 10e3;
    for kappa in [0.05, 0.25, 1.0] {
        // κ = Ω²/(2α)
        let alpha = rabi * rabi / (2.0 * kappa);
        // the finite sweep leaves oscillations of relative size ~Ω/span
        let span = 1000.0 * rabi;
        let duration = 2.0 * span / alpha;
        let n = (duration * span / 3.0).ceil() as usize;
        let pulse = build_linear_chirp_pulse(rabi, alpha, span, n).unwrap();
        let out = propagate(&pulse, 1.0, 1.0, 0.0, QubitAmplitudes::ground());
        let survival = out.c_g.norm_sqr();
        let oracle = (-PI * kappa).exp();
        assert!((survival - oracle).abs() < 1e-3, "κ={kappa}: {survival} vs {oracle}");
        assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn chirp_reversal_leaves_transfer_unchanged() {
    let eff = EffectiveRabiDistribution::new(TAU * 221e3, B_REF).unwrap();
    for (rc, omega) in rap_sets() {
        let pulse = build_rap_pulse(omega, 50e-6, rc, 50).unwrap();
        let reversed = pulse.with_reversed_chirp();
        for y in [0.7, 1.0, 1.3] {
            let a = thermal_average_transfer(&pulse, &eff, y, 0.0, 0.01).unwrap();
            let b = thermal_average_transfer(&reversed, &eff, y, 0.0, 0.01).unwrap();
            assert!((a.p_excited - b.p_excited).abs() < 1e-12, "r_c={rc} y={y}");
        }
    }
}

#[test]
fn unchirped_transfer_is_even_in_detuning() {
    let eff = EffectiveRabiDistribution::new(TAU * 332e3, B_REF).unwrap();
    let pulse = build_rap_pulse(TAU * 332e3, 50e-6, 0.0, 50).unwrap();
    for dp in [TAU * 5e3, TAU * 37e3, TAU * 120e3] {
        let a = thermal_average_transfer(&pulse, &eff, 1.0, dp, 0.01).unwrap();
        let b = thermal_average_transfer(&pulse, &eff, 1.0, -dp, 0.01).unwrap();
        assert!((a.p_excited - b.p_excited).abs() < 1e-12);
    }
}

fn refinement_gap(rc: f64, omega: f64, scale: f64, eff: &EffectiveRabiDistribution) -> (f64, f64) {
    let pulse = build_rap_pulse(scale * omega, 50e-6, rc, 50).unwrap();
    let p = |dx| thermal_average_transfer(&pulse, eff, 1.0, 0.0, dx).unwrap().p_excited;
    let (coarse, fine, finest) = (p(0.01), p(0.002), p(0.0004));
    ((coarse - fine).abs(), (fine - finest).abs())
}

#[test]
fn thermal_grid_refinement_chirped() {
    let eff = EffectiveRabiDistribution::new(TAU * 221e3, B_REF).unwrap();
    for (rc, omega) in rap_sets().into_iter().skip(1) {
        for k in 1..=20 {
            let (gap, _) = refinement_gap(rc, omega, k as f64 / 20.0, &eff);
            assert!(gap < 5e-4, "r_c={rc} scale={}: {gap:.2e}", k as f64 / 20.0);
        }
    }
}

#[test]
fn thermal_grid_refinement_unchirped() {
    // Without a chirp p(x) oscillates with period ~2π/(pulse area) in x, so
    // dx = 0.01 undersamples it; the refined grids agree closely.
    let eff = EffectiveRabiDistribution::new(TAU * 221e3, B_REF).unwrap();
    let (rc, omega) = rap_sets()[0];
    for k in 1..=20 {
        let (gap, converged) = refinement_gap(rc, omega, k as f64 / 20.0, &eff);
        assert!(gap < 1.5e-3, "scale={}: {gap:.2e}", k as f64 / 20.0);
        assert!(converged < 2e-5);
    }
}

#[test]
fn rap_scans_change_character_with_chirp() {
    let eff = EffectiveRabiDistribution::new(TAU * 221e3, B_REF).unwrap();
    let amplitudes: Vec<f64> = (1..=40).map(|k| TAU * 10e3 * k as f64).collect();
    let scan = |rc: f64| -> Vec<f64> {
        amplitudes
            .iter()
            .map(|&a| {
                let pulse = build_rap_pulse(a, 50e-6, rc, 50).unwrap();
                thermal_average_transfer(&pulse, &eff, 1.0, 0.0, 0.01).unwrap().p_excited
            })
            .collect()
    };
    // unchirped: Rabi-like, repeatedly returning to low transfer
    let flat = scan(0.0);
    let local_maxima = (1..flat.len() - 1).filter(|&i| flat[i] > flat[i - 1] && flat[i] > flat[i + 1]).count();
    assert!(local_maxima >= 2, "{flat:?}");
    assert!(flat.iter().skip(5).any(|&p| p < 0.5));
    // chirped: rises to a plateau and stays there
    let chirped = scan(100e3);
    let top = chirped.iter().position(|&p| p > 0.99).expect("chirped scan saturates");
    assert!(chirped[..=top].windows(2).all(|w| w[1] > w[0]), "{chirped:?}");
    assert!(chirped[top..].iter().all(|&p| p > 0.85), "{chirped:?}");
}

#[test]
fn effective_weights_track_exact_distribution_in_rap() {
    let omega0 = hz_to_angular(105e3);
    let setup = CalibrationSetup::new(
        LaserGeometry::ca40_reference(),
        REFERENCE_MODE_FREQUENCIES_HZ.iter().map(|&f| hz_to_angular(f)).collect(),
        omega0,
    );
    let pulse = build_rap_pulse(TAU * 221e3, 50e-6, 100e3, 50).unwrap();
    for t_over_td in [0.5, 2.0, 5.0] {
        let t = t_over_td * REFERENCE_DOPPLER_TEMPERATURE;
        let b = setup.fit_b(t).unwrap().b;
        let eff = EffectiveRabiDistribution::new(omega0, b).unwrap();
        let exact = exact_reduced_weights(&setup.distribution(t).unwrap());
        for y in [0.6, 1.0] {
            let p_eff = thermal_average_transfer(&pulse, &eff, y, 0.0, 0.01).unwrap().p_excited;
            let p_exact = average_transfer_over(&pulse, &exact, y, 0.0).p_excited;
            assert!((p_eff - p_exact).abs() < 1e-2, "T={t_over_td}·T_D y={y}: {p_eff} vs {p_exact}");
        }
    }
}
