use std::path::Path;

use super::ExperimentError;
use crate::tag::VoltageTrace;

#[derive(Debug, Clone, PartialEq)]
pub struct IngestedTrace {
    pub trace: VoltageTrace,
    /// Samples pulled back into `[v_min, v_max]`.
    pub clamped: usize,
}

/// Reads a `time_s,volts` CSV, clamping volts into `[v_min, v_max]`.
pub fn ingest_voltage_trace(path: &Path, v_min: f64, v_max: f64) -> Result<IngestedTrace, ExperimentError> {
    let parse_err = |line: u64, reason: String| ExperimentError::Parse {
        path: path.into(),
        line,
        reason,
    };
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| ExperimentError::io(path, e.into()))?;
    let headers = r.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(1, format!("missing column `{name}`")))
    };
    let (it, iv) = (col("time_s")?, col("volts")?);
    let mut times = Vec::new();
    let mut volts = Vec::new();
    let mut clamped = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize, what: &str| -> Result<f64, ExperimentError> {
            let s = rec.get(i).unwrap_or("");
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| parse_err(line, format!("{what}: not a number: {s:?}")))
        };
        let t = num(it, "time_s")?;
        let v = num(iv, "volts")?;
        if let Some(&prev) = times.last() {
            if !(t > prev) {
                return Err(parse_err(line, format!("time {t} not after {prev}")));
            }
        }
        let c = v.clamp(v_min, v_max);
        if c != v {
            clamped += 1;
        }
        times.push(t);
        volts.push(c);
    }
    if times.is_empty() {
        return Err(parse_err(1, "trace has no samples".into()));
    }
    if clamped > 0 {
        log::warn!("{}: {clamped} samples clamped to [{v_min}, {v_max}] V", path.display());
    }
    Ok(IngestedTrace {
        trace: VoltageTrace { times_s: times, volts },
        clamped,
    })
}
