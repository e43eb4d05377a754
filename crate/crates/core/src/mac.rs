//! Packet-level MAC: reader-initiated channel reservation, interval-coded
//! tag wake-up, excitation by an unmodified transmitter, and ACK re-shifting.
//! Also the analytic carrier-throughput and tag power models.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phy::{build_packet_timeline, SYMBOL_US};
use crate::tag::{wake_on_pattern, WakeDecision};

#[derive(Debug, Error)]
pub enum MacError {
    #[error("invalid MAC config: {0}")]
    Config(String),
    #[error("tag rate {rate_bps} bps outside {scheme} range [0, {max_bps}]")]
    Range { scheme: String, rate_bps: f64, max_bps: f64 },
    #[error("trace violation at {time_us} us: {reason}")]
    Trace { time_us: f64, reason: String },
    #[error("writing trace: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacKind {
    CtsToSelf,
    ExcitationPacket,
    DataPacket { ess: bool },
    Ack,
    TagWake,
    TagSleep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacChannel {
    Original,
    Secondary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    Transmitter,
    Reader,
    Tag(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacEvent {
    pub time_us: f64,
    pub kind: MacKind,
    pub channel: MacChannel,
    pub actor: Actor,
}

impl fmt::Display for MacKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MacKind::CtsToSelf => f.write_str("cts_to_self"),
            MacKind::ExcitationPacket => f.write_str("excitation"),
            MacKind::DataPacket { ess: true } => f.write_str("data_ess"),
            MacKind::DataPacket { ess: false } => f.write_str("data"),
            MacKind::Ack => f.write_str("ack"),
            MacKind::TagWake => f.write_str("tag_wake"),
            MacKind::TagSleep => f.write_str("tag_sleep"),
        }
    }
}

impl fmt::Display for MacChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MacChannel::Original => "original",
            MacChannel::Secondary => "secondary",
        })
    }
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Actor::Transmitter => f.write_str("transmitter"),
            Actor::Reader => f.write_str("reader"),
            Actor::Tag(id) => write!(f, "tag{id}"),
        }
    }
}

/// Reader addresses whichever tag answers to `interval_us` at `time_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WakeCommand {
    pub time_s: f64,
    pub interval_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacConfig {
    pub packet_rate_hz: f64,
    pub sim_duration_s: f64,
    /// Wake interval of each tag; the index is the tag id.
    pub tag_intervals_us: Vec<f64>,
    pub wake_schedule: Vec<WakeCommand>,
    pub wake_tolerance_us: f64,
    /// CTS start to first excitation start.
    pub cts_gap_us: f64,
    pub cts_airtime_us: f64,
    pub excitation_airtime_us: f64,
    pub sifs_us: f64,
    pub n_data_symbols: usize,
}

impl MacConfig {
    /// `n_tags` tags on intervals 100, 200, ... us; the reader wakes tag 0
    /// (or sends an unanswered pattern when there are no tags) at t = 0.
    pub fn new(n_tags: usize, packet_rate_hz: f64, sim_duration_s: f64) -> Self {
        let tag_intervals_us: Vec<f64> = (1..=n_tags).map(|i| 100.0 * i as f64).collect();
        let first = tag_intervals_us.first().copied().unwrap_or(100.0);
        Self {
            packet_rate_hz,
            sim_duration_s,
            tag_intervals_us,
            wake_schedule: vec![WakeCommand {
                time_s: 0.0,
                interval_us: first,
            }],
            wake_tolerance_us: 10.0,
            cts_gap_us: 60.0,
            cts_airtime_us: 44.0,
            excitation_airtime_us: 20.0,
            sifs_us: 16.0,
            n_data_symbols: 10,
        }
    }

    pub fn validate(&self) -> Result<(), MacError> {
        let bad = |s: &str| Err(MacError::Config(s.into()));
        if !(self.packet_rate_hz > 0.0) || !(self.sim_duration_s > 0.0) {
            return bad("packet_rate_hz and sim_duration_s must be positive");
        }
        if !(self.wake_tolerance_us >= 0.0) {
            return bad("wake_tolerance_us must be non-negative");
        }
        for (i, a) in self.tag_intervals_us.iter().enumerate() {
            if !(*a > 2.0 * self.wake_tolerance_us) {
                return Err(MacError::Config(format!("tag {i}: interval {a} us too short")));
            }
            for (j, b) in self.tag_intervals_us.iter().enumerate().skip(i + 1) {
                if (a - b).abs() <= 2.0 * self.wake_tolerance_us {
                    return Err(MacError::Config(format!(
                        "tags {i} and {j}: duplicate wake interval {a} / {b} us"
                    )));
                }
            }
        }
        for w in self.wake_schedule.windows(2) {
            if !(w[1].time_s > w[0].time_s) {
                return bad("wake_schedule times must increase");
            }
        }
        if self.wake_schedule.iter().any(|w| !(w.interval_us > 0.0)) {
            return bad("wake intervals must be positive");
        }
        if !(self.cts_gap_us >= self.cts_airtime_us) || !(self.excitation_airtime_us > 0.0) {
            return bad("CTS must end before the first excitation");
        }
        Ok(())
    }

    pub fn data_airtime_us(&self) -> f64 {
        build_packet_timeline(self.n_data_symbols, true).airtime_us()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TagStats {
    pub wakes: usize,
    pub backscattered: usize,
    pub acks_reshifted: usize,
    pub awake_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacReport {
    pub events: Vec<MacEvent>,
    pub tag_stats: Vec<TagStats>,
    pub transmitter_packets: usize,
    pub deferred_packets: usize,
}

struct Reservation {
    cts: f64,
    end: f64,
    interval: f64,
}

pub fn run_mac_scenario(cfg: &MacConfig) -> Result<MacReport, MacError> {
    cfg.validate()?;
    let horizon = cfg.sim_duration_s * 1e6;
    let air = cfg.data_airtime_us();
    let period = 1e6 / cfg.packet_rate_hz;

    // Reader reservations; the CTS waits for an in-flight data packet.
    let mut reservations = Vec::new();
    for w in &cfg.wake_schedule {
        let mut cts = w.time_s * 1e6;
        let k = (cts / period).floor();
        if cts < k * period + air {
            cts = k * period + air + cfg.sifs_us;
        }
        if let Some(prev) = reservations.last().map(|r: &Reservation| r.end) {
            cts = cts.max(prev + cfg.sifs_us);
        }
        let end = cts + cfg.cts_gap_us + w.interval_us + cfg.excitation_airtime_us;
        if cts < horizon {
            reservations.push(Reservation {
                cts,
                end,
                interval: w.interval_us,
            });
        }
    }

    // Transmitter packets, deferred past any reservation they would overlap.
    let mut tx_times = Vec::new();
    let mut deferred = 0;
    let mut next_free = f64::NEG_INFINITY;
    let mut k = 0u64;
    loop {
        let nominal = k as f64 * period;
        if nominal >= horizon {
            break;
        }
        k += 1;
        let mut t = nominal.max(next_free);
        if t > nominal {
            deferred += 1;
        }
        while let Some(r) = reservations.iter().find(|r| t < r.end && t + air > r.cts) {
            if t == nominal {
                deferred += 1;
            }
            t = r.end + cfg.sifs_us;
        }
        next_free = t + air;
        tx_times.push(t);
    }

    enum Air {
        Cts(usize),
        Tx,
    }
    let mut air_events: Vec<(f64, Air)> = reservations.iter().enumerate().map(|(i, r)| (r.cts, Air::Cts(i))).collect();
    air_events.extend(tx_times.iter().map(|&t| (t, Air::Tx)));
    air_events.sort_by(|a, b| a.0.total_cmp(&b.0));

    let n = cfg.tag_intervals_us.len();
    let mut awake: Option<(usize, f64)> = None;
    let mut stats = vec![TagStats::default(); n];
    let mut events = Vec::new();
    let push = |events: &mut Vec<MacEvent>, time_us, kind, channel, actor| {
        events.push(MacEvent {
            time_us,
            kind,
            channel,
            actor,
        })
    };
    for (t, a) in air_events {
        match a {
            Air::Cts(i) => {
                let r = &reservations[i];
                let e1 = r.cts + cfg.cts_gap_us;
                let e2 = e1 + r.interval;
                push(&mut events, r.cts, MacKind::CtsToSelf, MacChannel::Secondary, Actor::Reader);
                push(&mut events, e1, MacKind::ExcitationPacket, MacChannel::Secondary, Actor::Reader);
                push(&mut events, e2, MacKind::ExcitationPacket, MacChannel::Secondary, Actor::Reader);
                let target = (0..n).find(|&id| {
                    wake_on_pattern(&[e1, e2], cfg.tag_intervals_us[id], cfg.wake_tolerance_us) == WakeDecision::Awake
                });
                if let Some((id, since)) = awake {
                    if target != Some(id) {
                        push(&mut events, e2, MacKind::TagSleep, MacChannel::Secondary, Actor::Tag(id));
                        stats[id].awake_us += e2 - since;
                        awake = None;
                    }
                }
                if let Some(id) = target {
                    if awake.is_none() {
                        push(&mut events, e2, MacKind::TagWake, MacChannel::Secondary, Actor::Tag(id));
                        stats[id].wakes += 1;
                        awake = Some((id, e2));
                    }
                }
            }
            Air::Tx => {
                push(&mut events, t, MacKind::DataPacket { ess: true }, MacChannel::Original, Actor::Transmitter);
                if let Some((id, _)) = awake {
                    push(&mut events, t, MacKind::DataPacket { ess: true }, MacChannel::Secondary, Actor::Tag(id));
                    let ack = t + air + cfg.sifs_us;
                    push(&mut events, ack, MacKind::Ack, MacChannel::Secondary, Actor::Reader);
                    push(&mut events, ack, MacKind::Ack, MacChannel::Original, Actor::Tag(id));
                    stats[id].backscattered += 1;
                    stats[id].acks_reshifted += 1;
                }
            }
        }
    }
    if let Some((id, since)) = awake {
        stats[id].awake_us += horizon.max(since) - since;
    }
    events.sort_by(|a, b| a.time_us.total_cmp(&b.time_us));
    Ok(MacReport {
        events,
        tag_stats: stats,
        transmitter_packets: tx_times.len(),
        deferred_packets: deferred,
    })
}

/// Checks ordering, wake causality, mutual exclusion and ACK re-shifting.
pub fn check_trace(events: &[MacEvent], cfg: &MacConfig) -> Result<(), MacError> {
    let fail = |time_us: f64, reason: String| Err(MacError::Trace { time_us, reason });
    let mut awake: Option<usize> = None;
    for (i, e) in events.iter().enumerate() {
        if i > 0 && e.time_us < events[i - 1].time_us {
            return fail(e.time_us, "events out of order".into());
        }
        match (e.kind, e.actor) {
            (MacKind::TagWake, Actor::Tag(id)) => {
                if let Some(other) = awake {
                    return fail(e.time_us, format!("tag{id} woke while tag{other} awake"));
                }
                let before = &events[..i];
                let exc: Vec<&MacEvent> =
                    before.iter().rev().filter(|x| x.kind == MacKind::ExcitationPacket).take(2).collect();
                let cts = before.iter().rposition(|x| x.kind == MacKind::CtsToSelf);
                let ok = exc.len() == 2
                    && cts.is_some_and(|c| events[c].time_us <= exc[1].time_us)
                    && ((exc[0].time_us - exc[1].time_us) - cfg.tag_intervals_us[id]).abs() <= cfg.wake_tolerance_us;
                if !ok {
                    return fail(e.time_us, format!("tag{id} woke without its pattern"));
                }
                awake = Some(id);
            }
            (MacKind::TagSleep, Actor::Tag(id)) => {
                if awake != Some(id) {
                    return fail(e.time_us, format!("tag{id} slept while not awake"));
                }
                awake = None;
            }
            (MacKind::DataPacket { .. } | MacKind::Ack, Actor::Tag(id)) if awake != Some(id) => {
                return fail(e.time_us, format!("tag{id} transmitted while asleep"));
            }
            (MacKind::Ack, Actor::Reader) => {
                let copied = events.iter().any(|x| {
                    x.kind == MacKind::Ack && x.channel == MacChannel::Original && x.time_us == e.time_us
                });
                if e.channel != MacChannel::Secondary || !copied {
                    return fail(e.time_us, "reader ACK not re-shifted to the original channel".into());
                }
            }
            _ => {}
        }
    }
    Ok(())
}

pub fn write_trace_csv<W: Write>(events: &[MacEvent], mut w: W) -> Result<(), MacError> {
    writeln!(w, "time_us,kind,channel,actor")?;
    for e in events {
        writeln!(w, "{},{},{},{}", e.time_us, e.kind, e.channel, e.actor)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "scheme")]
pub enum TransparencyModel {
    /// Extra HT-LTF per packet; the only cost is the 4 us symbol.
    EssEmbedding { payload_us: f64 },
    /// Corrupts aggregated subframes to signal bits.
    Witag { max_rate_bps: f64, ratio_at_max: f64 },
    /// Per-packet modulation at low rate.
    WifiBackscatter { max_rate_bps: f64, ratio_at_max: f64 },
}

impl TransparencyModel {
    pub fn ess_default() -> Self {
        TransparencyModel::EssEmbedding {
            payload_us: 10.0 * SYMBOL_US,
        }
    }

    pub fn witag_default() -> Self {
        TransparencyModel::Witag {
            max_rate_bps: 4000.0,
            ratio_at_max: 0.5,
        }
    }

    pub fn wifi_backscatter_default() -> Self {
        TransparencyModel::WifiBackscatter {
            max_rate_bps: 400.0,
            ratio_at_max: 0.95,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TransparencyModel::EssEmbedding { .. } => "ess_embedding",
            TransparencyModel::Witag { .. } => "witag",
            TransparencyModel::WifiBackscatter { .. } => "wifi_backscatter",
        }
    }

    pub fn max_rate_bps(&self) -> f64 {
        match *self {
            TransparencyModel::EssEmbedding { .. } => f64::INFINITY,
            TransparencyModel::Witag { max_rate_bps, .. } | TransparencyModel::WifiBackscatter { max_rate_bps, .. } => {
                max_rate_bps
            }
        }
    }
}

/// Carrier throughput with the tag relative to without it.
pub fn carrier_throughput_ratio(model: &TransparencyModel, tag_rate_bps: f64) -> Result<f64, MacError> {
    let max = model.max_rate_bps();
    if !(tag_rate_bps >= 0.0) || tag_rate_bps > max {
        return Err(MacError::Range {
            scheme: model.name().into(),
            rate_bps: tag_rate_bps,
            max_bps: max,
        });
    }
    if tag_rate_bps == 0.0 {
        return Ok(1.0);
    }
    let r = match *model {
        TransparencyModel::EssEmbedding { payload_us } => payload_us / (payload_us + SYMBOL_US),
        TransparencyModel::Witag {
            max_rate_bps,
            ratio_at_max,
        }
        | TransparencyModel::WifiBackscatter {
            max_rate_bps,
            ratio_at_max,
        } => 1.0 - (1.0 - ratio_at_max) * tag_rate_bps / max_rate_bps,
    };
    Ok(r.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerComponent {
    pub name: String,
    pub microwatts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerBudget {
    pub total_uw: f64,
    pub breakdown: Vec<PowerComponent>,
}

pub fn default_power_components() -> Vec<PowerComponent> {
    [("rf_switches", 2.0), ("packet_detector", 7.0), ("control_logic", 1.5), ("clock_gen", 20.0)]
        .into_iter()
        .map(|(n, p)| PowerComponent {
            name: n.into(),
            microwatts: p,
        })
        .collect()
}

/// Published tag power of other WiFi backscatter designs, uW.
pub const COMPARISON_POWER_UW: [(&str, f64); 2] = [("witag", 125.0), ("hitchhike", 147.0)];

pub fn power_budget(components: &[PowerComponent]) -> Result<PowerBudget, MacError> {
    if let Some(c) = components.iter().find(|c| !(c.microwatts >= 0.0)) {
        return Err(MacError::Config(format!("component {}: negative power", c.name)));
    }
    Ok(PowerBudget {
        total_uw: components.iter().map(|c| c.microwatts).sum(),
        breakdown: components.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_budget() {
        let b = power_budget(&default_power_components()).unwrap();
        assert_eq!(b.total_uw, 30.5);
        assert_eq!(power_budget(&[]).unwrap().total_uw, 0.0);
    }

    #[test]
    fn zero_rate_is_transparent() {
        for m in [
            TransparencyModel::ess_default(),
            TransparencyModel::witag_default(),
            TransparencyModel::wifi_backscatter_default(),
        ] {
            assert_eq!(carrier_throughput_ratio(&m, 0.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn single_tag_wakes_once() {
        let r = run_mac_scenario(&MacConfig::new(1, 2000.0, 0.05)).unwrap();
        assert_eq!(r.tag_stats[0].wakes, 1);
        assert!(r.tag_stats[0].backscattered >= 99);
    }
}
