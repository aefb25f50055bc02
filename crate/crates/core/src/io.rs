//! CSV import and export. Files may start with `#` metadata lines; every
//! table has a mandatory header row. Frequencies are written in Hz (or kHz
//! where the column name says so) and times in s or μs.

use std::io::{Read, Write};

use crate::distribution::{DiscreteRabiDistribution, EffectiveRabiDistribution, SmoothedDistribution};
use crate::dynamics::PulseProgram;
use crate::robustness::RobustnessMap;
use crate::thermometry::{RabiTrace, TracePoint, DEFAULT_SHOTS};
use crate::{Error, Result};

const TAU: f64 = std::f64::consts::TAU;

/// Writes `# key: value` lines.
pub fn write_metadata<W: Write>(w: &mut W, metadata: &[(String, String)]) -> Result<()> {
    for (k, v) in metadata {
        writeln!(w, "# {k}: {v}")?;
    }
    Ok(())
}

fn row<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            w.write_all(b",")?;
        }
        first = false;
        write!(w, "{v}")?;
    }
    w.write_all(b"\n")?;
    Ok(())
}

/// `omega_hz,probability` for every retained point of the exact distribution.
pub fn write_distribution_csv<W: Write>(w: &mut W, dist: &DiscreteRabiDistribution) -> Result<()> {
    writeln!(w, "omega_hz,probability")?;
    for (omega, p) in dist.iter() {
        row(w, &[omega / TAU, p])?;
    }
    Ok(())
}

/// `omega_hz,density_per_hz` of the smoothed distribution.
pub fn write_smoothed_csv<W: Write>(w: &mut W, smoothed: &SmoothedDistribution) -> Result<()> {
    writeln!(w, "omega_hz,density_per_hz")?;
    for (omega, d) in smoothed.points() {
        row(w, &[omega / TAU, d * TAU])?;
    }
    Ok(())
}

/// `omega_hz,density_per_hz` of the effective model at the given angular
/// frequencies; points outside (0, Ω₀) have zero density.
pub fn write_model_csv<W: Write>(w: &mut W, eff: &EffectiveRabiDistribution, omegas: &[f64]) -> Result<()> {
    writeln!(w, "omega_hz,density_per_hz")?;
    for &omega in omegas {
        let d = if omega > 0.0 && omega < eff.omega0() {
            crate::distribution::effective_pdf(omega, eff)?
        } else {
            0.0
        };
        row(w, &[omega / TAU, d * TAU])?;
    }
    Ok(())
}

/// `t_start_s,duration_s,rabi_hz,detuning_hz`.
pub fn write_pulse_csv<W: Write>(w: &mut W, pulse: &PulseProgram) -> Result<()> {
    writeln!(w, "t_start_s,duration_s,rabi_hz,detuning_hz")?;
    for (start, s) in pulse.timeline() {
        row(w, &[start, s.duration, s.rabi_amplitude / TAU, s.detuning / TAU])?;
    }
    Ok(())
}

/// `duration_us,p_exact,p_effective`.
pub fn write_rabi_csv<W: Write>(w: &mut W, rows: &[(f64, f64, f64)]) -> Result<()> {
    writeln!(w, "duration_us,p_exact,p_effective")?;
    for &(t, exact, effective) in rows {
        row(w, &[t * 1e6, exact, effective])?;
    }
    Ok(())
}

/// `omega0_cal_khz,p_transfer`.
pub fn write_rap_scan_csv<W: Write>(w: &mut W, rows: &[(f64, f64)]) -> Result<()> {
    writeln!(w, "omega0_cal_khz,p_transfer")?;
    for &(omega, p) in rows {
        row(w, &[omega / TAU / 1e3, p])?;
    }
    Ok(())
}

/// Matrix of log₁₀ infidelity. The first two rows hold the detuning axis in
/// Hz and in units of 2π·100 kHz; each further row starts with its y value.
pub fn write_map_csv<W: Write>(w: &mut W, map: &RobustnessMap) -> Result<()> {
    write!(w, "y\\delta_prime_hz")?;
    for d in map.delta_axis_hz() {
        write!(w, ",{d}")?;
    }
    writeln!(w)?;
    write!(w, "y\\delta_prime_chirp_units")?;
    for d in map.delta_axis_chirp_units() {
        write!(w, ",{d}")?;
    }
    writeln!(w)?;
    for (y, values) in map.y_axis.iter().zip(&map.values) {
        write!(w, "{y}")?;
        for v in values {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Reads `duration_us,p_excited[,std_err][,n_shots]`. Missing `n_shots`
/// defaults to 200; missing `std_err` falls back to the shot-noise estimate.
/// Errors name the offending line of the file.
pub fn read_trace_csv<R: Read>(reader: R) -> Result<RabiTrace> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| csv_error(&e))?
        .iter()
        .map(str::to_owned)
        .collect::<Vec<_>>();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let (Some(i_t), Some(i_p)) = (column("duration_us"), column("p_excited")) else {
        return Err(Error::InvalidInput(format!(
            "trace header must contain duration_us and p_excited, got {headers:?}"
        )));
    };
    let (i_err, i_n) = (column("std_err"), column("n_shots"));

    let mut points: Vec<TracePoint> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(&e))?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |msg: String| Error::InvalidInput(format!("line {line}: {msg}"));
        let number = |i: usize, name: &str| -> Result<Option<f64>> {
            match record.get(i).filter(|s| !s.is_empty()) {
                None => Ok(None),
                Some(s) => s
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(Some)
                    .ok_or_else(|| bad(format!("{name} = {s:?} is not a number"))),
            }
        };
        let t_us = number(i_t, "duration_us")?.ok_or_else(|| bad("duration_us is missing".into()))?;
        let p = number(i_p, "p_excited")?.ok_or_else(|| bad("p_excited is missing".into()))?;
        let std_err = match i_err {
            Some(i) => number(i, "std_err")?,
            None => None,
        };
        let n_shots = match i_n.map(|i| record.get(i).unwrap_or("")).filter(|s| !s.is_empty()) {
            None => DEFAULT_SHOTS,
            Some(s) => s
                .parse::<u32>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| bad(format!("n_shots = {s:?} is not a positive integer")))?,
        };
        if !(t_us >= 0.0) {
            return Err(bad(format!("duration_us = {t_us} must be ≥ 0")));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(bad(format!("p_excited = {p} outside [0, 1]")));
        }
        if std_err.is_some_and(|s| s < 0.0) {
            return Err(bad("std_err must be ≥ 0".into()));
        }
        if points.last().is_some_and(|last| t_us * 1e-6 <= last.duration) {
            return Err(bad("durations must be strictly increasing".into()));
        }
        points.push(TracePoint { duration: t_us * 1e-6, p_excited: p, std_err, n_shots });
    }
    RabiTrace::new(points)
}

fn csv_error(e: &csv::Error) -> Error {
    match e.position() {
        Some(p) => Error::InvalidInput(format!("line {}: {e}", p.line())),
        None => Error::InvalidInput(e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::build_rap_pulse;

    #[test]
    fn reads_minimal_trace() {
        let text = "# produced elsewhere\nduration_us,p_excited\n1,0.1\n2,0.5\n3,0.9\n";
        let tr = read_trace_csv(text.as_bytes()).unwrap();
        assert_eq!(tr.points().len(), 3);
        assert_eq!(tr.points()[1].n_shots, 200);
        assert!((tr.points()[2].duration - 3e-6).abs() < 1e-18);
        assert_eq!(tr.points()[0].std_err, None);
    }

    #[test]
    fn reads_optional_columns() {
        let text = "duration_us,p_excited,std_err,n_shots\n1,0.1,0.02,100\n2,0.5,,\n3,0.9,0.01,50\n";
        let tr = read_trace_csv(text.as_bytes()).unwrap();
        assert_eq!(tr.points()[0].n_shots, 100);
        assert_eq!(tr.points()[1].std_err, None);
        assert_eq!(tr.points()[1].n_shots, 200);
        assert_eq!(tr.points()[2].std_err, Some(0.01));
    }

    #[test]
    fn malformed_row_names_line() {
        let text = "duration_us,p_excited\n1,0.1\n2,abc\n3,0.9\n";
        let err = read_trace_csv(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let text = "duration_us,p_excited\n1,0.1\n2,0.2\n1.5,0.9\n";
        let err = read_trace_csv(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 4"), "{err}");
        let text = "duration_us,p_excited\n1,0.1\n2,0.2,7\n3,0.3\n";
        let err = read_trace_csv(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let text = "time,p\n1,0.1\n";
        assert!(read_trace_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn pulse_csv_layout() {
        let pulse = build_rap_pulse(TAU * 221e3, 50e-6, 100e3, 4).unwrap();
        let mut buf = Vec::new();
        write_pulse_csv(&mut buf, &pulse).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t_start_s,duration_s,rabi_hz,detuning_hz");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("-0.0001,0.00005,"));
    }

    #[test]
    fn metadata_lines() {
        let mut buf = Vec::new();
        write_metadata(&mut buf, &[("version".into(), "0.1.0".into())]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "# version: 0.1.0\n");
    }
}
