use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::link::LinkConfig;
use crate::mac::PowerComponent;
use crate::tag::VoltageSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Circuit curve against the full-chain recovered phase.
    PhaseVoltage,
    /// Relative phase across frequency at fixed biases.
    BandFlatness,
    /// Spread of regular, extra and differential CSI phase.
    CsiConsistency,
    /// RF switch against direct bias switching.
    Transient,
    /// Packet-level DER and throughput.
    Link,
    /// Span, linearity and flatness against stub length.
    Tl2Flatness,
    /// Carrier throughput ratio of the three schemes.
    Transparency,
    /// Tag power breakdown; takes no sweep.
    PowerBudget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Voltage,
    Frequency,
    SyncOffsetNs,
    Tl2Length,
    NSegments,
    TagRate,
    Snr,
}

impl SweepAxis {
    pub fn column(&self) -> &'static str {
        match self {
            SweepAxis::Voltage => "volts",
            SweepAxis::Frequency => "frequency_hz",
            SweepAxis::SyncOffsetNs => "sync_offset_ns",
            SweepAxis::Tl2Length => "tl2_length_deg",
            SweepAxis::NSegments => "n_segments",
            SweepAxis::TagRate => "tag_rate_bps",
            SweepAxis::Snr => "snr_db",
        }
    }
}

/// Either an explicit list or `start..=stop` in `step` increments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: SweepAxis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

const MAX_POINTS: usize = 100_000;

impl Sweep {
    pub fn list(axis: SweepAxis, values: Vec<f64>) -> Self {
        Self {
            axis,
            values: Some(values),
            start: None,
            stop: None,
            step: None,
        }
    }

    pub fn range(axis: SweepAxis, start: f64, stop: f64, step: f64) -> Self {
        Self {
            axis,
            values: None,
            start: Some(start),
            stop: Some(stop),
            step: Some(step),
        }
    }

    /// Sorted sweep points.
    pub fn points(&self) -> Result<Vec<f64>, ExperimentError> {
        let mut pts = match (&self.values, self.start, self.stop, self.step) {
            (Some(v), None, None, None) => {
                if v.is_empty() {
                    return Err(ExperimentError::config("sweep.values", "must not be empty"));
                }
                v.clone()
            }
            (None, Some(a), Some(b), Some(s)) => {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(ExperimentError::config("sweep.step", "must be positive"));
                }
                if !(b >= a) || !a.is_finite() || !b.is_finite() {
                    return Err(ExperimentError::config("sweep.stop", "must be finite and >= sweep.start"));
                }
                let n = ((b - a) / s + 1e-9).floor();
                if n >= MAX_POINTS as f64 {
                    return Err(ExperimentError::config("sweep.step", "too many sweep points"));
                }
                (0..=n as usize).map(|i| a + s * i as f64).collect()
            }
            (Some(_), ..) => {
                return Err(ExperimentError::config("sweep", "give either values or start/stop/step, not both"))
            }
            _ => return Err(ExperimentError::config("sweep", "needs values or all of start, stop, step")),
        };
        if pts.iter().any(|x| !x.is_finite()) {
            return Err(ExperimentError::config("sweep.values", "must be finite"));
        }
        pts.sort_by(f64::total_cmp);
        if pts.windows(2).any(|w| w[0] == w[1]) {
            return Err(ExperimentError::config("sweep.values", "duplicate sweep point"));
        }
        Ok(pts)
    }
}

/// Log-distance path loss on both legs of the backscatter link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceModel {
    pub tx_tag_m: f64,
    pub tag_rx_m: f64,
    pub exponent: f64,
    /// SNR with both legs at 1 m.
    pub snr_at_1m_db: f64,
}

impl DistanceModel {
    pub fn snr_db(&self) -> f64 {
        self.snr_at_1m_db - 10.0 * self.exponent * (self.tx_tag_m.log10() + self.tag_rx_m.log10())
    }
}

fn default_packets() -> usize {
    100
}

fn default_voltage() -> VoltageSource {
    VoltageSource::Uniform { min: 0.0, max: 5.0 }
}

fn default_levels() -> Vec<f64> {
    vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub scenario: Scenario,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub link: LinkConfig,
    #[serde(default = "default_packets")]
    pub packets_per_point: usize,
    #[serde(default = "default_voltage")]
    pub voltage: VoltageSource,
    #[serde(default)]
    pub distance: Option<DistanceModel>,
    /// Bias levels tabulated by the band-flatness and stub scenarios.
    #[serde(default = "default_levels")]
    pub bias_levels_v: Vec<f64>,
    #[serde(default)]
    pub power_components: Option<Vec<PowerComponent>>,
}

impl ExperimentConfig {
    pub fn new(name: &str, scenario: Scenario, sweep: Option<Sweep>) -> Self {
        Self {
            name: name.into(),
            scenario,
            seed: 1,
            sweep,
            link: LinkConfig::default(),
            packets_per_point: default_packets(),
            voltage: default_voltage(),
            distance: None,
            bias_levels_v: default_levels(),
            power_components: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| ExperimentError::config(json_path_hint(&e), e.inner().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn allowed_axes(&self) -> &'static [SweepAxis] {
        use SweepAxis as A;
        match self.scenario {
            Scenario::PhaseVoltage | Scenario::Transient => &[A::Voltage],
            Scenario::BandFlatness => &[A::Frequency],
            Scenario::CsiConsistency => &[A::Snr],
            Scenario::Link => &[A::Voltage, A::SyncOffsetNs, A::NSegments, A::Snr, A::Tl2Length],
            Scenario::Tl2Flatness => &[A::Tl2Length],
            Scenario::Transparency => &[A::TagRate],
            Scenario::PowerBudget => &[],
        }
    }

    /// Checks everything that can be checked before simulating.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c)) {
            return Err(ExperimentError::config("name", "must be non-empty [A-Za-z0-9_.-]"));
        }
        let allowed = self.allowed_axes();
        match (&self.sweep, allowed.is_empty()) {
            (None, false) => return Err(ExperimentError::config("sweep", "scenario requires a sweep axis")),
            (Some(_), true) => return Err(ExperimentError::config("sweep", "scenario takes no sweep")),
            _ => {}
        }
        if let Some(sweep) = &self.sweep {
            if !allowed.contains(&sweep.axis) {
                return Err(ExperimentError::config(
                    "sweep.axis",
                    format!("{:?} not valid for scenario {:?}", sweep.axis, self.scenario),
                ));
            }
            let pts = sweep.points()?;
            self.check_axis_values(sweep.axis, &pts)?;
        }
        self.link
            .validate()
            .map_err(|e| ExperimentError::config("link", e.to_string()))?;
        if self.packets_per_point == 0 && matches!(self.scenario, Scenario::Link | Scenario::CsiConsistency | Scenario::PhaseVoltage) {
            return Err(ExperimentError::config("packets_per_point", "must be positive"));
        }
        let vmax = self.link.tag.circuit.varactor.max_bias;
        match &self.voltage {
            VoltageSource::Constant { volts } if !(0.0..=vmax).contains(volts) => {
                return Err(ExperimentError::config("voltage.volts", format!("outside [0, {vmax}] V")))
            }
            VoltageSource::Uniform { min, max } if !(0.0 <= *min && min <= max && *max <= vmax) => {
                return Err(ExperimentError::config("voltage", format!("need 0 <= min <= max <= {vmax}")))
            }
            VoltageSource::Steps {
                levels,
                packets_per_level,
            } if levels.is_empty() || *packets_per_level == 0 || levels.iter().any(|v| !(0.0..=vmax).contains(v)) => {
                return Err(ExperimentError::config("voltage.levels", "need non-empty in-range levels"))
            }
            VoltageSource::Trace { trace }
                if trace.times_s.is_empty()
                    || trace.times_s.len() != trace.volts.len()
                    || trace.times_s.windows(2).any(|w| !(w[1] > w[0])) =>
            {
                return Err(ExperimentError::config("voltage.trace", "times must be non-empty and increasing"))
            }
            _ => {}
        }
        if let Some(d) = &self.distance {
            if !(d.tx_tag_m > 0.0 && d.tag_rx_m > 0.0) {
                return Err(ExperimentError::config("distance", "distances must be positive"));
            }
            if !(d.exponent > 0.0) || !d.snr_at_1m_db.is_finite() {
                return Err(ExperimentError::config("distance.exponent", "must be positive"));
            }
        }
        if self.bias_levels_v.is_empty() || self.bias_levels_v.iter().any(|v| !(0.0..=vmax).contains(v)) {
            return Err(ExperimentError::config("bias_levels_v", format!("need levels within [0, {vmax}] V")));
        }
        if let Some(c) = &self.power_components {
            if let Some(bad) = c.iter().find(|c| !(c.microwatts >= 0.0)) {
                return Err(ExperimentError::config(
                    "power_components",
                    format!("{}: power must be non-negative", bad.name),
                ));
            }
        }
        Ok(())
    }

    fn check_axis_values(&self, axis: SweepAxis, pts: &[f64]) -> Result<(), ExperimentError> {
        let vmax = self.link.tag.circuit.varactor.max_bias;
        let bad = |why: String| Err(ExperimentError::config("sweep.values", why));
        for &x in pts {
            match axis {
                SweepAxis::Voltage if !(0.0..=vmax).contains(&x) => return bad(format!("{x} V outside [0, {vmax}]")),
                SweepAxis::Frequency if !(x > 0.0) => return bad(format!("frequency {x} must be positive")),
                SweepAxis::Tl2Length if !(x > 0.0) => return bad(format!("stub length {x} must be positive")),
                SweepAxis::NSegments if !(x >= 2.0 && x.fract() == 0.0) => {
                    return bad(format!("segment count {x} must be an integer >= 2"))
                }
                SweepAxis::TagRate if !(x >= 0.0) => return bad(format!("tag rate {x} must be non-negative")),
                SweepAxis::SyncOffsetNs if x.abs() > 36_000.0 => return bad(format!("offset {x} ns too large")),
                _ => {}
            }
        }
        Ok(())
    }
}

/// Best-effort field name from a serde_json error message.
fn json_path_hint(e: &serde_path_to_error::Error<serde_json::Error>) -> String {
    match e.path().to_string() {
        p if p == "." => format!("line {} column {}", e.inner().line(), e.inner().column()),
        p => p,
    }
}
