//! Packet-level chain: transmitter preamble -> tag detection and
//! reflection -> channel -> receiver CSI extraction and digitization.
//!
//! Every packet draws its randomness from a ChaCha stream selected by the
//! packet index, so sweeps over one parameter reuse identical channel,
//! noise and loss draws at every sweep point.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{add_noise, propagate, ChannelError, ChannelModel, ChannelProfile, Mixing};
use crate::phy::{
    build_packet_timeline, LtfSymbol, OfdmEngine, PacketField, PacketTimeline, Waveform, FFT_SIZE, GI_SAMPLES,
    SAMPLE_RATE_HZ,
};
use crate::receiver::{
    correct_cfo, estimate_cfo, estimate_csi_at, extract_phase_difference, DigitizerConfig, ReceiverError,
};
use crate::rf::{circuit_s11, phase_voltage_curve, Branch, RfError};
use crate::scalar::{wrap_deg, LineFit};
use crate::tag::{detect_packet_edge, envelope_detector, schedule_states, TagConfig, TagError};

#[derive(Debug, Error)]
pub enum LinkError {
    #[error(transparent)]
    Rf(#[from] RfError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Tag(#[from] TagError),
    #[error(transparent)]
    Receiver(#[from] ReceiverError),
    #[error("invalid link config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SyncMode {
    /// Tag knows the exact packet start; packets start on a clock tick.
    #[default]
    Ideal,
    /// Envelope detector and comparator clock; arrivals are unaligned.
    Detector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub tag: TagConfig,
    pub channel: ChannelProfile,
    pub sync: SyncMode,
    pub n_data_symbols: usize,
    /// Silence before the packet, in samples.
    pub lead_in_samples: usize,
    /// Incident SNR at the tag's detector.
    pub tag_incident_snr_db: f64,
    /// Packets whose instantaneous tag-path SNR falls below this are lost.
    pub decode_threshold_db: f64,
    /// Independent loss probability (collisions, driver drops).
    pub capture_loss: f64,
    pub packet_rate_hz: f64,
    pub n_segments: usize,
    /// Usable phase span; `None` takes it from the calibration curve.
    pub phase_span_deg: Option<(f64, f64)>,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            tag: TagConfig::default(),
            channel: ChannelProfile {
                mean_snr_db: None,
                ..ChannelProfile::default()
            },
            sync: SyncMode::Ideal,
            n_data_symbols: 10,
            lead_in_samples: 20,
            tag_incident_snr_db: 30.0,
            decode_threshold_db: 4.0,
            capture_loss: 0.0,
            packet_rate_hz: 2000.0,
            n_segments: 10,
            phase_span_deg: None,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<(), LinkError> {
        self.tag.validate()?;
        self.channel.validate()?;
        if !(0.0..1.0).contains(&self.capture_loss) {
            return Err(LinkError::Config("capture_loss must be in [0, 1)".into()));
        }
        if !(self.packet_rate_hz > 0.0) {
            return Err(LinkError::Config("packet_rate_hz must be positive".into()));
        }
        if self.n_segments < 2 {
            return Err(LinkError::Config("n_segments must be at least 2".into()));
        }
        if let Some((lo, hi)) = self.phase_span_deg {
            if !(lo < hi) {
                return Err(LinkError::Config("phase span must be increasing".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacketStatus {
    Received,
    /// Tag never saw the packet edge.
    TagMiss,
    /// Tag-path SNR below the decode threshold.
    DecodeFail,
    CaptureLoss,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketOutcome {
    pub index: u64,
    pub time_s: f64,
    pub true_v: f64,
    pub true_phase_deg: f64,
    pub status: PacketStatus,
    pub snr_db: f64,
    /// Tag detection time minus packet start, ns.
    pub sync_error_ns: f64,
    pub regular_phase_deg: f64,
    pub ess_phase_deg: f64,
    pub measured_phase_deg: f64,
    pub segment: usize,
    pub true_segment: usize,
    pub reconstructed_v: f64,
    /// `|reconstructed - noiseless reconstruction|`.
    pub voltage_deviation: f64,
}

impl PacketOutcome {
    pub fn received(&self) -> bool {
        self.status == PacketStatus::Received
    }

    pub fn phase_error_deg(&self) -> f64 {
        wrap_deg(self.measured_phase_deg - self.true_phase_deg).abs()
    }

    pub fn is_error(&self) -> bool {
        self.segment != self.true_segment
    }
}

/// Reusable per-configuration state.
#[derive(Debug, Clone)]
pub struct LinkSimulator {
    pub config: LinkConfig,
    pub digitizer: DigitizerConfig<f64>,
    pub timeline: PacketTimeline,
    engine: OfdmEngine<f64>,
    template: Vec<Complex64>,
    known: LtfSymbol<f64>,
    gamma_ref: Complex64,
}

/// Linear calibration of embedded phase against bias, from the circuit.
pub fn calibrate(tag: &TagConfig, points: usize) -> Result<(LineFit<f64>, (f64, f64)), LinkError> {
    let vmax = tag.circuit.varactor.max_bias;
    let grid: Vec<f64> = (0..points).map(|i| vmax * i as f64 / (points - 1) as f64).collect();
    let curve = phase_voltage_curve(&tag.circuit, tag.carrier_hz, &grid)?;
    let rel: Vec<f64> = curve.points.iter().map(|p| p.relative_phase_deg).collect();
    let fit = LineFit::fit(&grid, &rel).ok_or_else(|| LinkError::Config("flat calibration curve".into()))?;
    let (a, b) = (rel[0], rel[rel.len() - 1]);
    Ok((fit, (a.min(b), a.max(b))))
}

impl LinkSimulator {
    pub fn new(config: LinkConfig) -> Result<Self, LinkError> {
        config.validate()?;
        let (fit, span) = calibrate(&config.tag, 26)?;
        let (lo, hi) = config.phase_span_deg.unwrap_or(span);
        let digitizer = DigitizerConfig::new(lo, hi, config.n_segments, fit)?;
        let timeline = build_packet_timeline(config.n_data_symbols, true);
        let engine = OfdmEngine::new();
        let mut template = vec![Complex64::new(0.0, 0.0); config.lead_in_samples];
        template.extend(engine.packet(&timeline, 0x5eed, 0.0).samples);
        let gamma_ref = circuit_s11(&config.tag.circuit, Branch::Reference, 0.0, config.tag.carrier_hz)?.value;
        Ok(Self {
            config,
            digitizer,
            timeline,
            engine,
            template,
            known: LtfSymbol::ht_ltf(),
            gamma_ref,
        })
    }

    /// Noiseless embedded phase for bias `v`, in the digitizer's span.
    pub fn true_phase_deg(&self, v: f64) -> Result<f64, LinkError> {
        let v = v.clamp(0.0, self.config.tag.circuit.varactor.max_bias);
        let g = circuit_s11(&self.config.tag.circuit, Branch::Embedding, v, self.config.tag.carrier_hz)?.value;
        Ok(self.digitizer.unwrap_into_span((g / self.gamma_ref).arg().to_degrees()))
    }

    fn image_power(&self) -> f64 {
        match self.config.tag.mixing {
            Mixing::Off => 1.0,
            Mixing::SquareWave20MHz => (2.0 / std::f64::consts::PI).powi(2),
        }
    }

    /// Packet `index` sent at nominal time `time_s` with the sensor at `v`.
    pub fn simulate_packet(&self, seed: u64, index: u64, time_s: f64, v: f64) -> Result<PacketOutcome, LinkError> {
        let cfg = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let noise_seed: u64 = rng.random();
        let channel = cfg.channel.realize(&mut rng, noise_seed, self.image_power());
        let tag_noise_seed: u64 = rng.random();
        let loss_draw: f64 = rng.random();
        let jitter: f64 = rng.random();
        let mixer_phase = rng.random::<f64>() * 2.0 * std::f64::consts::PI;

        let true_phase_deg = self.true_phase_deg(v)?;
        let true_segment = self.digitizer.segment_of_deg(true_phase_deg);
        let snr_db = cfg.channel.mean_snr_db.map_or(f64::INFINITY, |s| s + 10.0 * channel.tap_power().log10());
        let mut out = PacketOutcome {
            index,
            time_s,
            true_v: v,
            true_phase_deg,
            status: PacketStatus::Received,
            snr_db,
            sync_error_ns: 0.0,
            regular_phase_deg: f64::NAN,
            ess_phase_deg: f64::NAN,
            measured_phase_deg: f64::NAN,
            segment: 0,
            true_segment,
            reconstructed_v: f64::NAN,
            voltage_deviation: f64::NAN,
        };

        let fs = SAMPLE_RATE_HZ;
        let lead_us = cfg.lead_in_samples as f64 / fs * 1e6;
        let mut packet_start_us = time_s * 1e6;
        if cfg.sync == SyncMode::Detector {
            packet_start_us += jitter / cfg.tag.comparator_clock_hz * 1e6;
        }
        let tx = Waveform::new(self.template.clone(), fs, packet_start_us - lead_us);

        let detect_us = match cfg.sync {
            SyncMode::Ideal => packet_start_us,
            SyncMode::Detector => {
                let amp = (cfg.tag.noise_floor_power * 10f64.powf(cfg.tag_incident_snr_db / 10.0)).sqrt();
                let mut incident = tx.scaled(Complex64::new(amp, 0.0));
                add_noise(&mut incident.samples, cfg.tag.noise_floor_power, tag_noise_seed)?;
                let env = envelope_detector(&incident, cfg.tag.envelope_bandwidth_hz);
                match detect_packet_edge(&env, &cfg.tag) {
                    Ok(t) => t,
                    Err(TagError::DetectionMiss) => {
                        out.status = PacketStatus::TagMiss;
                        return Ok(out);
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        };
        out.sync_error_ns = (detect_us - packet_start_us) * 1e3;
        if snr_db < cfg.decode_threshold_db {
            out.status = PacketStatus::DecodeFail;
            return Ok(out);
        }
        if loss_draw < cfg.capture_loss {
            out.status = PacketStatus::CaptureLoss;
            return Ok(out);
        }

        let mut schedule = schedule_states(detect_us, &cfg.tag, v)?.clipped(tx.start_time_us, tx.end_time_us());
        schedule.mixer_phase_rad = mixer_phase;
        let rx = propagate(&tx, &channel, &schedule)?;
        let (reg, ess) = self.extract(rx.samples)?;
        out.regular_phase_deg = reg.mean_phase().to_degrees();
        out.ess_phase_deg = ess.mean_phase().to_degrees();
        let pd = extract_phase_difference(&reg, &ess)?;
        let measured = self.digitizer.unwrap_into_span(pd.mean_deg());
        out.measured_phase_deg = measured;
        out.segment = self.digitizer.segment_of_deg(measured);
        out.reconstructed_v = self.digitizer.voltage_of_deg(measured);
        out.voltage_deviation = (out.reconstructed_v - self.digitizer.voltage_of_deg(true_phase_deg)).abs();
        Ok(out)
    }

    /// Receiver: CFO from the L-LTF repetition, then both HT-LTF estimates.
    fn extract(
        &self,
        mut samples: Vec<Complex64>,
    ) -> Result<(crate::receiver::CsiVector<f64>, crate::receiver::CsiVector<f64>), LinkError> {
        let lead = self.config.lead_in_samples;
        let at = |f| lead + self.timeline.start_sample(f).expect("field present");
        let lltf = at(PacketField::LLtf) + 2 * GI_SAMPLES;
        let cfo = estimate_cfo(&samples, lltf, FFT_SIZE, SAMPLE_RATE_HZ);
        correct_cfo(&mut samples, cfo, SAMPLE_RATE_HZ);
        let reg = estimate_csi_at(&self.engine, &samples, at(PacketField::HtDltf) + GI_SAMPLES, &self.known)?;
        let ess = estimate_csi_at(&self.engine, &samples, at(PacketField::HtEltf) + GI_SAMPLES, &self.known)?;
        Ok((reg, ess))
    }

    /// Runs a propagated packet through a caller-supplied channel; used by
    /// oracle tests that need full control over the realization.
    pub fn simulate_with_channel(
        &self,
        channel: &ChannelModel,
        time_s: f64,
        v: f64,
    ) -> Result<(f64, f64, f64), LinkError> {
        let fs = SAMPLE_RATE_HZ;
        let start = time_s * 1e6;
        let lead_us = self.config.lead_in_samples as f64 / fs * 1e6;
        let tx = Waveform::new(self.template.clone(), fs, start - lead_us);
        let schedule = schedule_states(start, &self.config.tag, v)?.clipped(tx.start_time_us, tx.end_time_us());
        let rx = propagate(&tx, channel, &schedule)?;
        let (reg, ess) = self.extract(rx.samples)?;
        let pd = extract_phase_difference(&reg, &ess)?;
        Ok((pd.mean, reg.mean_phase(), ess.mean_phase()))
    }
}

/// Aggregate of a batch of packets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSummary {
    pub packets_sent: usize,
    pub packets_rx: usize,
    pub der: f64,
    pub throughput_bps: f64,
    pub phase_err_p50: f64,
    pub phase_err_p95: f64,
    pub v_dev_p95: f64,
}

pub fn summarize(outcomes: &[PacketOutcome], bits_per_packet: f64, duration_s: f64) -> LinkSummary {
    let rx: Vec<&PacketOutcome> = outcomes.iter().filter(|o| o.received()).collect();
    let mut perr: Vec<f64> = rx.iter().map(|o| o.phase_error_deg()).collect();
    perr.sort_by(f64::total_cmp);
    let mut vdev: Vec<f64> = rx.iter().map(|o| o.voltage_deviation).collect();
    vdev.sort_by(f64::total_cmp);
    let wrong = rx.iter().filter(|o| o.is_error()).count();
    LinkSummary {
        packets_sent: outcomes.len(),
        packets_rx: rx.len(),
        der: if rx.is_empty() { f64::NAN } else { wrong as f64 / rx.len() as f64 },
        throughput_bps: rx.len() as f64 * bits_per_packet / duration_s,
        phase_err_p50: crate::receiver::percentile(&perr, 0.5),
        phase_err_p95: crate::receiver::percentile(&perr, 0.95),
        v_dev_p95: crate::receiver::percentile(&vdev, 0.95),
    }
}
