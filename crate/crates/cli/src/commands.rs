//! Subcommand implementations. Each writes its outputs into the output
//! directory and returns the list of files written.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use thermal_rabi::constants::hz_to_angular;
use thermal_rabi::distribution::{calibrate_c, fit_b, smooth_distribution, EffectiveRabiDistribution};
use thermal_rabi::dynamics::{
    build_rap_pulse, square_pulse_effective_with, square_pulse_exact_trace, thermal_average_transfer, PulseProgram,
};
use thermal_rabi::io;
use thermal_rabi::quadrature::GaussLegendre;
use thermal_rabi::robustness::sweep_robustness;
use thermal_rabi::thermometry::{fit_thermal_rabi, synthetic_trace, FitOptions, RabiTrace};

use crate::config::{ConfigError, RunConfig};
use crate::CliError;

/// Run metadata written at the top of every output file.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl RunMetadata {
    fn header(&self) -> Vec<(String, String)> {
        vec![
            ("tool".into(), format!("{} {}", self.tool, self.version)),
            ("command".into(), self.command.clone()),
            ("config_sha256".into(), self.config_sha256.clone()),
            ("seed".into(), self.seed.to_string()),
        ]
    }
}

pub struct Context<'a> {
    pub config: &'a RunConfig,
    pub out: &'a Path,
    pub run_metadata: RunMetadata,
}

impl Context<'_> {
    fn csv<F>(&self, name: &str, extra: &[(String, String)], body: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> thermal_rabi::Result<()>,
    {
        let path = self.out.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        let mut meta = self.run_metadata.header();
        meta.extend_from_slice(extra);
        io::write_metadata(&mut w, &meta)?;
        body(&mut w)?;
        w.flush()?;
        Ok(path)
    }

    fn json(&self, name: &str, mut value: Value) -> Result<PathBuf, CliError> {
        let path = self.out.join(name);
        if let Value::Object(map) = &mut value {
            map.insert("metadata".into(), serde_json::to_value(&self.run_metadata)?);
        }
        let mut w = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut w, &value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(path)
    }
}

fn kv(k: &str, v: impl ToString) -> (String, String) {
    (k.to_owned(), v.to_string())
}

pub fn dist(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let cfg = ctx.config;
    let temperature = cfg.temperature("dist")?;
    let setup = cfg.calibration_setup()?;
    let dist = setup.distribution(temperature)?;
    let smoothed = smooth_distribution(&dist, setup.sigma_ratio * setup.omega0, setup.grid_points)?;
    let fit = fit_b(&smoothed, setup.omega0)?;
    let eff = EffectiveRabiDistribution::new(setup.omega0, fit.b)?;
    let td = cfg.doppler_temperature()?;
    let extra = [kv("temperature_mk", temperature * 1e3), kv("b_fit", fit.b)];

    let grid: Vec<f64> = smoothed.points().map(|(w, _)| w).collect();
    let files = vec![
        ctx.csv("distribution_exact.csv", &extra, |w| io::write_distribution_csv(w, &dist))?,
        ctx.csv("distribution_smoothed.csv", &extra, |w| io::write_smoothed_csv(w, &smoothed))?,
        ctx.csv("distribution_model.csv", &extra, |w| io::write_model_csv(w, &eff, &grid))?,
        ctx.json(
            "distribution_fit.json",
            json!({
                "temperature_kelvin": temperature,
                "temperature_over_TD": temperature / td,
                "omega0_hz": setup.omega0 / std::f64::consts::TAU,
                "b": fit.b,
                "residual": fit.residual,
                "cutoffs": dist.cutoffs(),
                "n_points": dist.len().to_string(),
                "truncation_deficit": dist.truncation_deficit(),
                "sigma_hz": setup.sigma_ratio * setup.omega0 / std::f64::consts::TAU,
                "grid_points": setup.grid_points,
            }),
        )?,
    ];
    Ok(files)
}

/// Durations 0..=t_max; t_max = 0 gives the single point t = 0.
fn duration_grid(t_max_us: f64, n_points: usize) -> Result<Vec<f64>, ConfigError> {
    if !(t_max_us >= 0.0 && t_max_us.is_finite()) {
        return Err(ConfigError(format!("rabi.t_max_us: must be ≥ 0, got {t_max_us}")));
    }
    if t_max_us == 0.0 {
        return Ok(vec![0.0]);
    }
    if n_points < 2 {
        return Err(ConfigError("rabi.n_points: must be ≥ 2 when t_max_us > 0".into()));
    }
    let step = t_max_us * 1e-6 / (n_points - 1) as f64;
    Ok((0..n_points).map(|i| step * i as f64).collect())
}

pub fn rabi(ctx: &Context, t_max_us: Option<f64>, n_points: Option<usize>) -> Result<Vec<PathBuf>, CliError> {
    let cfg = ctx.config;
    let temperature = cfg.temperature("rabi")?;
    let times = duration_grid(
        t_max_us.unwrap_or(cfg.rabi.t_max_us),
        n_points.unwrap_or(cfg.rabi.n_points),
    )?;
    let setup = cfg.calibration_setup()?;
    let dist = setup.distribution(temperature)?;
    let smoothed = smooth_distribution(&dist, setup.sigma_ratio * setup.omega0, setup.grid_points)?;
    let fit = fit_b(&smoothed, setup.omega0)?;
    let eff = EffectiveRabiDistribution::new(setup.omega0, fit.b)?;
    let rule = GaussLegendre::new(cfg.numerics.quadrature_nodes);

    let exact = square_pulse_exact_trace(&dist, &times);
    let rows: Vec<(f64, f64, f64)> = times
        .iter()
        .zip(&exact)
        .map(|(&t, &pe)| (t, pe, square_pulse_effective_with(&eff, t, &rule)))
        .collect();
    let max_diff = rows.iter().map(|r| (r.1 - r.2).abs()).fold(0.0, f64::max);
    let extra = [kv("temperature_mk", temperature * 1e3), kv("b_fit", fit.b)];
    Ok(vec![
        ctx.csv("rabi.csv", &extra, |w| io::write_rabi_csv(w, &rows))?,
        ctx.json(
            "rabi_summary.json",
            json!({
                "temperature_kelvin": temperature,
                "omega0_hz": setup.omega0 / std::f64::consts::TAU,
                "b": fit.b,
                "n_points": rows.len(),
                "max_abs_difference": max_diff,
            }),
        )?,
    ])
}

fn rap_pulse(omega_cal: f64, tau_sigma_us: f64, chirp_khz: f64, n: usize) -> Result<PulseProgram, CliError> {
    Ok(build_rap_pulse(omega_cal, tau_sigma_us * 1e-6, chirp_khz * 1e3, n)?)
}

pub fn rap_scan(
    ctx: &Context,
    amplitudes_khz: Option<Vec<f64>>,
    chirps_khz: Option<Vec<f64>>,
) -> Result<Vec<PathBuf>, CliError> {
    let cfg = ctx.config;
    let scan = cfg.rap_scan.clone();
    let amplitudes = amplitudes_khz
        .or_else(|| scan.as_ref().map(|s| s.amplitudes_khz.clone()))
        .ok_or_else(|| ConfigError("rap_scan.amplitudes_khz: missing".into()))?;
    let chirps = chirps_khz
        .or_else(|| scan.as_ref().map(|s| s.chirp_ranges_khz.clone()))
        .ok_or_else(|| ConfigError("rap_scan.chirp_ranges_khz: missing".into()))?;
    if amplitudes.is_empty() {
        return Err(ConfigError("rap_scan.amplitudes_khz: list is empty".into()).into());
    }
    if chirps.is_empty() {
        return Err(ConfigError("rap_scan.chirp_ranges_khz: list is empty".into()).into());
    }
    if let Some(a) = amplitudes.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(ConfigError(format!("rap_scan.amplitudes_khz: {a} is not a positive number")).into());
    }
    if let Some(c) = chirps.iter().find(|c| !c.is_finite()) {
        return Err(ConfigError(format!("rap_scan.chirp_ranges_khz: {c} is not finite")).into());
    }
    let pulse_cfg = cfg.pulse()?;
    let b = cfg.b()?;
    let eff = EffectiveRabiDistribution::new(cfg.omega0()?, b)?;
    let dx = cfg.numerics.dx;

    let mut files = Vec::new();
    let mut summary = Vec::new();
    for &chirp in &chirps {
        let rows = amplitudes
            .iter()
            .map(|&a| {
                let omega = hz_to_angular(a * 1e3);
                let pulse = rap_pulse(omega, pulse_cfg.tau_sigma_us, chirp, pulse_cfg.n_samples)?;
                Ok((omega, thermal_average_transfer(&pulse, &eff, 1.0, 0.0, dx)?.p_excited))
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let best = rows.iter().copied().fold((f64::NAN, f64::NEG_INFINITY), |acc, r| if r.1 > acc.1 { r } else { acc });
        summary.push(json!({
            "chirp_range_khz": chirp,
            "best_omega0_cal_khz": best.0 / std::f64::consts::TAU / 1e3,
            "best_p_transfer": best.1,
        }));
        let extra = [kv("chirp_range_khz", chirp), kv("b", b), kv("tau_sigma_us", pulse_cfg.tau_sigma_us)];
        files.push(ctx.csv(&format!("rap_scan_chirp_{chirp}khz.csv"), &extra, |w| io::write_rap_scan_csv(w, &rows))?);
    }
    files.push(ctx.json(
        "rap_scan_summary.json",
        json!({"b": b, "dx": dx, "tau_sigma_us": pulse_cfg.tau_sigma_us, "n_samples": pulse_cfg.n_samples, "scans": summary}),
    )?);
    Ok(files)
}

pub fn map(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let cfg = ctx.config;
    let p = cfg.pulse()?;
    let spec = cfg.sweep_spec()?;
    let b = cfg.b()?;
    let omega_cal = hz_to_angular(p.omega0_cal_khz * 1e3);
    let pulse = rap_pulse(omega_cal, p.tau_sigma_us, p.chirp_range_khz, p.n_samples)?;
    // The amplitude scale y multiplies Ω₀^(cal); the thermal width is set by b.
    let eff = EffectiveRabiDistribution::new(omega_cal, b)?;
    let map = sweep_robustness(&pulse, &eff, &spec)?;
    let (min_value, min_y, min_delta) = map.minimum();
    let extra = [kv("b", b), kv("omega0_cal_khz", p.omega0_cal_khz), kv("chirp_range_khz", p.chirp_range_khz)];
    let mut meta = serde_json::to_value(&map.metadata)?;
    if let Value::Object(m) = &mut meta {
        m.insert(
            "minimum".into(),
            json!({
                "log10_infidelity": min_value,
                "y": min_y,
                "delta_prime_hz": min_delta / std::f64::consts::TAU,
            }),
        );
        m.insert("area_below_1e-2".into(), json!(map.area_below(1e-2)));
    }
    Ok(vec![
        ctx.csv("map.csv", &extra, |w| io::write_map_csv(w, &map))?,
        ctx.csv("pulse.csv", &extra, |w| io::write_pulse_csv(w, &pulse))?,
        ctx.json("map.json", meta)?,
    ])
}

pub fn calibrate(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let cfg = ctx.config;
    let td = cfg.doppler_temperature()?;
    let ratios = cfg
        .calibrate
        .as_ref()
        .map(|c| c.temperatures_over_td.clone())
        .ok_or_else(|| ConfigError("calibrate.temperatures_over_td: missing".into()))?;
    if let Some(r) = ratios.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(ConfigError(format!("calibrate.temperatures_over_td: {r} is not a positive number")).into());
    }
    let temps: Vec<f64> = ratios.iter().map(|r| r * td).collect();
    let setup = cfg.calibration_setup()?;
    let cal = calibrate_c(&setup, td, &temps)?;
    Ok(vec![ctx.json("calibration.json", serde_json::to_value(&cal)?)?])
}

pub fn fit(ctx: &Context, trace_path: Option<&Path>, synthetic: bool) -> Result<Vec<PathBuf>, CliError> {
    let cfg = ctx.config;
    let calibration = cfg.calibration()?;
    let mut files = Vec::new();
    let trace: RabiTrace = match (trace_path, synthetic) {
        (Some(_), true) => {
            return Err(ConfigError("fit: give either a trace file or --synthetic, not both".into()).into());
        }
        (Some(path), false) => {
            let file = File::open(path)
                .map_err(|e| ConfigError(format!("trace file {}: {e}", path.display())))?;
            io::read_trace_csv(std::io::BufReader::new(file))
                .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?
        }
        (None, true) => {
            let s = &cfg.fit.synthetic;
            let times = duration_grid(s.t_max_us, s.n_points)?;
            let eff = EffectiveRabiDistribution::new(cfg.omega0()?, cfg.b()?)?;
            let trace = if s.noiseless {
                synthetic_trace::<ChaCha8Rng>(&eff, &times, s.n_shots, None)?
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(ctx.run_metadata.seed);
                synthetic_trace(&eff, &times, s.n_shots, Some(&mut rng))?
            };
            let extra = [kv("b_true", eff.b()), kv("omega0_khz", eff.omega0() / std::f64::consts::TAU / 1e3)];
            files.push(ctx.csv("trace.csv", &extra, |w| write_trace(w, &trace))?);
            trace
        }
        (None, false) => {
            return Err(ConfigError("fit: a trace file is required (or pass --synthetic)".into()).into());
        }
    };
    let options = FitOptions { joint_polish: cfg.fit.joint_polish, quadrature_nodes: cfg.numerics.quadrature_nodes };
    let result = fit_thermal_rabi(&trace, &calibration, &options)?;
    for w in &result.warnings {
        log::warn!("{w}");
    }
    files.push(ctx.json("thermometry.json", serde_json::to_value(&result)?)?);
    Ok(files)
}

fn write_trace<W: Write>(w: &mut W, trace: &RabiTrace) -> thermal_rabi::Result<()> {
    writeln!(w, "duration_us,p_excited,n_shots")?;
    for p in trace.points() {
        writeln!(w, "{},{},{}", p.duration * 1e6, p.p_excited, p.n_shots)?;
    }
    Ok(())
}
