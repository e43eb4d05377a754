use super::config::{DistanceModel, ExperimentConfig, Scenario, Sweep, SweepAxis};
use crate::channel::ChannelProfile;
use crate::tag::VoltageSource;

/// Preset names with a one-line description.
pub const PRESETS: [(&str, &str); 11] = [
    ("fig6_phase_voltage", "phase against bias, circuit vs. noiseless full chain"),
    ("fig7_band_flatness", "relative phase across 2.40-2.50 GHz at fixed biases"),
    ("fig10_csi_consistency", "regular, extra and differential CSI phase spread vs. SNR"),
    ("fig12_transient", "RF switch vs. direct bias switching"),
    ("fig20_sync", "DER and throughput vs. tag switching offset"),
    ("fig21_tl2", "span, linearity and band flatness vs. stub length"),
    ("fig22_resolution", "DER and throughput vs. number of segments"),
    ("fig23_transparency", "carrier throughput ratio vs. tag data rate"),
    ("table1_power", "tag power breakdown and comparison"),
    ("poc_los", "model-based trend: 0-5 V sweep, line-of-sight distances"),
    ("poc_nlos", "model-based trend: 0-5 V sweep, non-line-of-sight distances"),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

/// Single dominant path without clock drift; isolates tag timing.
fn clean_los(snr_db: Option<f64>) -> ChannelProfile {
    ChannelProfile {
        n_taps: 1,
        rician_k_db: Some(20.0),
        mean_snr_db: snr_db,
        sfo_ppm_max: 0.0,
        ..ChannelProfile::default()
    }
}

pub const LOS_DISTANCE: DistanceModel = DistanceModel {
    tx_tag_m: 1.0,
    tag_rx_m: 2.0,
    exponent: 2.0,
    snr_at_1m_db: 36.0,
};

pub const NLOS_DISTANCE: DistanceModel = DistanceModel {
    tx_tag_m: 1.0,
    tag_rx_m: 2.0,
    exponent: 3.0,
    snr_at_1m_db: 36.0,
};

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let mut c = match name {
        "fig6_phase_voltage" => {
            let mut c = ExperimentConfig::new(
                name,
                Scenario::PhaseVoltage,
                Some(Sweep::range(SweepAxis::Voltage, 0.0, 5.0, 0.2)),
            );
            c.packets_per_point = 20;
            c
        }
        "fig7_band_flatness" => ExperimentConfig::new(
            name,
            Scenario::BandFlatness,
            Some(Sweep::range(SweepAxis::Frequency, 2.40e9, 2.50e9, 1e6)),
        ),
        "fig10_csi_consistency" => {
            let mut c = ExperimentConfig::new(
                name,
                Scenario::CsiConsistency,
                Some(Sweep::list(SweepAxis::Snr, vec![10.0, 15.0, 20.0, 25.0, 30.0])),
            );
            c.voltage = VoltageSource::Constant { volts: 2.5 };
            c.packets_per_point = 200;
            c
        }
        "fig12_transient" => {
            let mut c = ExperimentConfig::new(
                name,
                Scenario::Transient,
                Some(Sweep::range(SweepAxis::Voltage, 0.0, 5.0, 0.5)),
            );
            c.packets_per_point = 4;
            c
        }
        "fig20_sync" => {
            let mut c = ExperimentConfig::new(
                name,
                Scenario::Link,
                Some(Sweep::list(
                    SweepAxis::SyncOffsetNs,
                    vec![
                        -900.0, -750.0, -600.0, -450.0, -400.0, -300.0, -150.0, 0.0, 150.0, 300.0, 450.0, 600.0, 750.0,
                        800.0, 900.0,
                    ],
                )),
            );
            c.link.channel = clean_los(Some(20.0));
            c.link.decode_threshold_db = -100.0;
            c.packets_per_point = 2000;
            c
        }
        "fig21_tl2" => ExperimentConfig::new(
            name,
            Scenario::Tl2Flatness,
            Some(Sweep::range(SweepAxis::Tl2Length, 30.0, 90.0, 5.0)),
        ),
        "fig22_resolution" => {
            let mut c = ExperimentConfig::new(
                name,
                Scenario::Link,
                Some(Sweep::list(SweepAxis::NSegments, vec![2.0, 4.0, 8.0, 10.0, 16.0])),
            );
            c.distance = Some(LOS_DISTANCE);
            c.link.capture_loss = 0.15;
            c.packets_per_point = 4000;
            c
        }
        "fig23_transparency" => ExperimentConfig::new(
            name,
            Scenario::Transparency,
            Some(Sweep::range(SweepAxis::TagRate, 0.0, 4000.0, 200.0)),
        ),
        "table1_power" => ExperimentConfig::new(name, Scenario::PowerBudget, None),
        "poc_los" | "poc_nlos" => {
            let mut c = ExperimentConfig::new(
                name,
                Scenario::Link,
                Some(Sweep::range(SweepAxis::Voltage, 0.0, 5.0, 0.2)),
            );
            c.distance = Some(if name == "poc_los" { LOS_DISTANCE } else { NLOS_DISTANCE });
            if name == "poc_nlos" {
                c.link.channel.n_taps = 5;
                c.link.channel.rician_k_db = Some(0.0);
            }
            c.link.capture_loss = 0.15;
            c.packets_per_point = 200;
            c
        }
        _ => return None,
    };
    c.seed = 20240601;
    Some(c)
}
