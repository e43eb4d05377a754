//! Tag behaviour: packet-edge detection on a comparator clock, the
//! reference/embedding state machine, switch dynamics, and wake-up on
//! interval-coded excitation packets.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{GammaProfile, Mixing, ReflectionSegment, TagReflectionSchedule};
use crate::phy::Waveform;
use crate::rf::{circuit_s11, Branch, ReflectiveCircuitSpec, RfError, REFERENCE_FREQUENCY_HZ};

pub const DERIVED_CLOCK_SOURCE_HZ: f64 = 20e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TagError {
    #[error("no threshold crossing; packet missed by the tag")]
    DetectionMiss,
    #[error("illegal transition {from:?} --{event:?}-->")]
    IllegalTransition { from: TagMode, event: TagEvent },
    #[error("invalid tag config: {0}")]
    Config(String),
    #[error(transparent)]
    Rf(#[from] RfError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SwitchModel {
    /// RF switch toggling between the varactor and the fixed branch.
    RfSwitch { t_switch_ns: f64 },
    /// Bias stepped on the varactor directly; first-order settling.
    LcTransient { tau_us: f64 },
}

impl SwitchModel {
    /// Fraction of the transition completed `t_us` after the command.
    pub fn progress(&self, t_us: f64) -> f64 {
        if t_us <= 0.0 {
            return 0.0;
        }
        match *self {
            SwitchModel::RfSwitch { t_switch_ns } => {
                let ts = t_switch_ns * 1e-3;
                if ts <= 0.0 {
                    1.0
                } else {
                    (t_us / ts).min(1.0)
                }
            }
            SwitchModel::LcTransient { tau_us } => 1.0 - (-t_us / tau_us).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TagConfig {
    pub detector_threshold_db: f64,
    pub comparator_clock_hz: f64,
    pub envelope_bandwidth_hz: f64,
    /// Power of the detector's noise floor in the units of the envelope.
    pub noise_floor_power: f64,
    pub switch_model: SwitchModel,
    pub circuit: ReflectiveCircuitSpec<f64>,
    /// Positive means late switching.
    pub extra_delay_ns: f64,
    pub carrier_hz: f64,
    pub embed_offset_us: f64,
    pub embed_duration_us: f64,
    /// Reference-state time kept after the embedding window.
    pub reference_tail_us: f64,
    pub mixing: Mixing,
    pub mixer_harmonics: u32,
    /// Gamma table resolution for the LC model.
    pub lc_step_ns: f64,
}

impl Default for TagConfig {
    fn default() -> Self {
        Self {
            detector_threshold_db: 10.0,
            comparator_clock_hz: 4e6,
            envelope_bandwidth_hz: 1e6,
            noise_floor_power: 1e-2,
            switch_model: SwitchModel::RfSwitch { t_switch_ns: 10.0 },
            circuit: ReflectiveCircuitSpec::default(),
            extra_delay_ns: 0.0,
            carrier_hz: REFERENCE_FREQUENCY_HZ,
            embed_offset_us: crate::phy::PREAMBLE_BEFORE_ELTF_US,
            embed_duration_us: crate::phy::SYMBOL_US,
            reference_tail_us: 4.0,
            mixing: Mixing::SquareWave20MHz,
            mixer_harmonics: 1,
            lc_step_ns: 10.0,
        }
    }
}

impl TagConfig {
    pub fn validate(&self) -> Result<(), TagError> {
        let ratio = DERIVED_CLOCK_SOURCE_HZ / self.comparator_clock_hz;
        if !(self.comparator_clock_hz > 0.0) || (ratio - ratio.round()).abs() > 1e-9 {
            return Err(TagError::Config(format!(
                "comparator clock {} Hz does not divide 20 MHz",
                self.comparator_clock_hz
            )));
        }
        match self.switch_model {
            SwitchModel::RfSwitch { t_switch_ns } if !(t_switch_ns >= 0.0) => {
                return Err(TagError::Config("t_switch_ns must be non-negative".into()))
            }
            SwitchModel::LcTransient { tau_us } if !(tau_us > 0.0) => {
                return Err(TagError::Config("tau_us must be positive".into()))
            }
            _ => {}
        }
        if !(self.envelope_bandwidth_hz > 0.0) || !(self.noise_floor_power > 0.0) {
            return Err(TagError::Config("detector bandwidth and noise floor must be positive".into()));
        }
        if !(self.lc_step_ns > 0.0) || !(self.embed_duration_us > 0.0) || !self.extra_delay_ns.is_finite() {
            return Err(TagError::Config("timing parameters out of range".into()));
        }
        if self.mixing == Mixing::SquareWave20MHz && self.mixer_harmonics == 0 {
            return Err(TagError::Config("mixer_harmonics must be at least 1".into()));
        }
        self.circuit.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TagMode {
    Sleeping,
    Armed,
    Reference,
    Embedding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TagEvent {
    WakePattern,
    ForeignPattern,
    PacketEdge,
    EmbedStart,
    EmbedEnd,
    PacketEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TagState {
    pub mode: TagMode,
    pub time_us: f64,
}

impl TagState {
    pub fn sleeping() -> Self {
        Self {
            mode: TagMode::Sleeping,
            time_us: 0.0,
        }
    }

    pub fn on(&self, event: TagEvent, time_us: f64) -> Result<TagState, TagError> {
        use TagEvent as E;
        use TagMode as M;
        let next = match (self.mode, event) {
            (M::Sleeping, E::WakePattern) => M::Armed,
            (M::Armed, E::PacketEdge) => M::Reference,
            (M::Reference, E::EmbedStart) => M::Embedding,
            (M::Embedding, E::EmbedEnd) => M::Reference,
            (M::Reference, E::PacketEnd) => M::Armed,
            (M::Armed, E::ForeignPattern) => M::Sleeping,
            (from, event) => return Err(TagError::IllegalTransition { from, event }),
        };
        Ok(TagState {
            mode: next,
            time_us,
        })
    }
}

/// Magnitude followed by a single-pole low-pass; the result is carried in
/// the real part of the returned waveform.
pub fn envelope_detector(x: &Waveform<f64>, bandwidth_hz: f64) -> Waveform<f64> {
    let alpha = 1.0 - (-2.0 * std::f64::consts::PI * bandwidth_hz / x.sample_rate).exp();
    let mut e = 0.0;
    let samples = x
        .samples
        .iter()
        .map(|s| {
            e += alpha * (s.norm() - e);
            Complex64::new(e, 0.0)
        })
        .collect();
    Waveform::new(samples, x.sample_rate, x.start_time_us)
}

/// Rounds `t_us` up to the next tick of a clock at `clock_hz`.
pub fn quantize_up(t_us: f64, clock_hz: f64) -> f64 {
    let ticks = (t_us * 1e-6 * clock_hz - 1e-9).ceil();
    ticks / clock_hz * 1e6
}

/// First comparator tick at or after the envelope crosses the threshold.
pub fn detect_packet_edge(envelope: &Waveform<f64>, config: &TagConfig) -> Result<f64, TagError> {
    let thr = (config.noise_floor_power * 10f64.powf(config.detector_threshold_db / 10.0)).sqrt();
    let n = envelope
        .samples
        .iter()
        .position(|s| s.re >= thr)
        .ok_or(TagError::DetectionMiss)?;
    Ok(quantize_up(envelope.time_us(n), config.comparator_clock_hz))
}

/// First-order step response of the varactor bias.
pub fn lc_transient_voltage(v_target: f64, tau_us: f64, t_us: f64) -> f64 {
    if t_us <= 0.0 {
        return 0.0;
    }
    v_target * (1.0 - (-t_us / tau_us).exp())
}

fn gamma(config: &TagConfig, branch: Branch, v: f64) -> Result<Complex64, TagError> {
    let v = v.clamp(0.0, config.circuit.varactor.max_bias);
    Ok(circuit_s11(&config.circuit, branch, v, config.carrier_hz)?.value)
}

fn gamma_table(
    config: &TagConfig,
    start_us: f64,
    end_us: f64,
    volts: impl Fn(f64) -> f64,
) -> Result<GammaProfile, TagError> {
    let step = config.lc_step_ns * 1e-3;
    let n = ((end_us - start_us) / step).ceil().max(1.0) as usize;
    let mut times_us = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let t = (start_us + step * i as f64).min(end_us);
        times_us.push(t);
        values.push(gamma(config, Branch::Embedding, volts(t - start_us))?);
    }
    Ok(GammaProfile::Table { times_us, values })
}

/// Reflection schedule for one packet whose edge the tag detected at
/// `detect_time_us`.
pub fn schedule_states(
    detect_time_us: f64,
    config: &TagConfig,
    v_bias: f64,
) -> Result<TagReflectionSchedule, TagError> {
    config.validate()?;
    let t0 = detect_time_us;
    let te = (t0 + config.embed_offset_us + config.extra_delay_ns * 1e-3).max(t0);
    let tx = te + config.embed_duration_us;
    let tend = tx + config.reference_tail_us;
    let mut segments = Vec::with_capacity(5);
    match config.switch_model {
        SwitchModel::RfSwitch { t_switch_ns } => {
            let g_ref = gamma(config, Branch::Reference, 0.0)?;
            let g_emb = gamma(config, Branch::Embedding, v_bias)?;
            let ts = (t_switch_ns * 1e-3).min(config.embed_duration_us);
            // Command issued early so the embedding state is settled at te.
            let ton = (te - ts).max(t0);
            segments.push(ReflectionSegment::constant(t0, ton, g_ref));
            if te > ton {
                segments.push(ReflectionSegment {
                    start_us: ton,
                    end_us: te,
                    profile: GammaProfile::Ramp { from: g_ref, to: g_emb },
                });
            }
            segments.push(ReflectionSegment::constant(te, tx, g_emb));
            if ts > 0.0 {
                segments.push(ReflectionSegment {
                    start_us: tx,
                    end_us: tx + ts,
                    profile: GammaProfile::Ramp { from: g_emb, to: g_ref },
                });
            }
            segments.push(ReflectionSegment::constant(tx + ts, tend.max(tx + ts), g_ref));
        }
        SwitchModel::LcTransient { tau_us } => {
            let g0 = gamma(config, Branch::Embedding, 0.0)?;
            segments.push(ReflectionSegment::constant(t0, te, g0));
            segments.push(ReflectionSegment {
                start_us: te,
                end_us: tx,
                profile: gamma_table(config, te, tx, |t| lc_transient_voltage(v_bias, tau_us, t))?,
            });
            let v_peak = lc_transient_voltage(v_bias, tau_us, config.embed_duration_us);
            segments.push(ReflectionSegment {
                start_us: tx,
                end_us: tend,
                profile: gamma_table(config, tx, tend, |t| v_peak * (-t / tau_us).exp())?,
            });
        }
    }
    segments.retain(|s| s.end_us > s.start_us);
    Ok(TagReflectionSchedule {
        segments,
        mixing: config.mixing,
        mixer_harmonics: config.mixer_harmonics,
        mixer_phase_rad: 0.0,
    })
}

/// Fraction of a CSI body of `body_us` during which the switch is below
/// `settle_fraction` of its final state, when the switch command lands on
/// the body start. Counted on a `resolution_ns` grid.
pub fn switching_contamination(
    model: &SwitchModel,
    body_us: f64,
    settle_fraction: f64,
    resolution_ns: f64,
) -> f64 {
    let n = (body_us * 1e3 / resolution_ns).round() as usize;
    let bad = (0..n)
        .filter(|&i| model.progress(i as f64 * resolution_ns * 1e-3) < settle_fraction)
        .count();
    bad as f64 / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WakeDecision {
    Awake,
    Asleep,
}

/// Wake decision from the most recent pair of excitation arrivals; only
/// that pair matters.
pub fn wake_on_pattern(arrivals_us: &[f64], expected_interval_us: f64, tolerance_us: f64) -> WakeDecision {
    match arrivals_us {
        [.., a, b] if ((b - a) - expected_interval_us).abs() <= tolerance_us => WakeDecision::Awake,
        _ => WakeDecision::Asleep,
    }
}

/// Sensor voltage trace sampled at increasing times; linear in between,
/// held at the ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageTrace {
    pub times_s: Vec<f64>,
    pub volts: Vec<f64>,
}

impl VoltageTrace {
    pub fn value_at(&self, t_s: f64) -> f64 {
        let i = self.times_s.partition_point(|&x| x <= t_s);
        if i == 0 {
            return self.volts[0];
        }
        if i >= self.times_s.len() {
            return self.volts[self.volts.len() - 1];
        }
        let (t0, t1) = (self.times_s[i - 1], self.times_s[i]);
        let a = if t1 > t0 { (t_s - t0) / (t1 - t0) } else { 1.0 };
        self.volts[i - 1] + (self.volts[i] - self.volts[i - 1]) * a
    }
}

/// Where the tag's sensor voltage comes from during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum VoltageSource {
    Constant { volts: f64 },
    /// Uniform draw per packet.
    Uniform { min: f64, max: f64 },
    /// Cycles through `levels`, holding each for `packets_per_level`.
    Steps { levels: Vec<f64>, packets_per_level: usize },
    Trace { trace: VoltageTrace },
}
