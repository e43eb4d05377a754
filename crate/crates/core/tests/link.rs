use num_complex::Complex64;
use phasescatter::channel::{ChannelModel, Tap};
use phasescatter::link::*;
use phasescatter::rf::{circuit_s11, Branch};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_channel(seed: u64) -> ChannelModel {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let n = r.random_range(1..=4);
    let mut ch = ChannelModel::identity();
    ch.taps = (0..n)
        .map(|d| Tap {
            delay: d,
            gain: Complex64::from_polar(r.random_range(0.05..1.0), r.random_range(-3.14..3.14)),
        })
        .collect();
    ch.cfo_hz = r.random_range(-50e3..50e3);
    ch.sfo_ppm = r.random_range(-20.0..20.0);
    ch.common_phase_rad = r.random_range(-3.14..3.14);
    ch
}

/// Embedded phase straight from the circuit, radians.
fn injected(sim: &LinkSimulator, v: f64) -> f64 {
    let t = &sim.config.tag;
    let e = circuit_s11(&t.circuit, Branch::Embedding, v, t.carrier_hz).unwrap().value;
    let r = circuit_s11(&t.circuit, Branch::Reference, 0.0, t.carrier_hz).unwrap().value;
    (e / r).arg()
}

#[test]
fn random_channels_cancel_exactly() {
    let sim = LinkSimulator::new(LinkConfig::default()).unwrap();
    for seed in 0..100 {
        let v = 5.0 * (seed as f64 * 0.37).fract();
        let (diff, _, _) = sim.simulate_with_channel(&random_channel(seed), 1e-3 * seed as f64, v).unwrap();
        let err = (diff - injected(&sim, v) + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
        assert!(err.abs() < 1e-6, "seed {seed}: {err}");
    }
}

#[test]
fn constant_reflection_gives_zero_difference() {
    // At 0 V the embedding and reference branches coincide.
    let sim = LinkSimulator::new(LinkConfig::default()).unwrap();
    for seed in 0..20 {
        let (diff, reg, _) = sim.simulate_with_channel(&random_channel(seed), 0.0, 0.0).unwrap();
        assert!(diff.abs() < 1e-6, "{diff}");
        assert!(reg.is_finite());
    }
}

#[test]
fn packets_are_reproducible() {
    let mut cfg = LinkConfig::default();
    cfg.channel.mean_snr_db = Some(20.0);
    let sim = LinkSimulator::new(cfg).unwrap();
    let a = sim.simulate_packet(11, 3, 0.1, 2.0).unwrap();
    let b = sim.simulate_packet(11, 3, 0.1, 2.0).unwrap();
    assert_eq!(a, b);
    let c = sim.simulate_packet(11, 4, 0.1, 2.0).unwrap();
    assert_ne!(a.measured_phase_deg, c.measured_phase_deg);
}

#[test]
fn detector_sync_errors_stay_in_the_guard_interval() {
    let cfg = LinkConfig {
        sync: SyncMode::Detector,
        ..LinkConfig::default()
    };
    let sim = LinkSimulator::new(cfg).unwrap();
    for k in 0..50 {
        let o = sim.simulate_packet(5, k, k as f64 * 5e-4, 2.5).unwrap();
        assert!(o.received());
        assert!((0.0..=300.0).contains(&o.sync_error_ns), "{}", o.sync_error_ns);
        assert!(!o.is_error() || o.phase_error_deg() < 1e-6);
    }
}

#[test]
fn low_snr_packets_fail_to_decode() {
    let mut cfg = LinkConfig::default();
    cfg.channel.mean_snr_db = Some(-10.0);
    let sim = LinkSimulator::new(cfg).unwrap();
    let outs: Vec<_> = (0..50).map(|k| sim.simulate_packet(1, k, 0.0, 1.0).unwrap()).collect();
    assert!(outs.iter().all(|o| o.status == PacketStatus::DecodeFail));
    let s = summarize(&outs, 3.3, 1.0);
    assert_eq!(s.packets_rx, 0);
    assert!(s.der.is_nan());
}

#[test]
fn capture_loss_rate() {
    let cfg = LinkConfig {
        capture_loss: 0.25,
        ..LinkConfig::default()
    };
    let sim = LinkSimulator::new(cfg).unwrap();
    let n = 4000;
    let lost = (0..n)
        .filter(|&k| sim.simulate_packet(2, k, 0.0, 1.0).unwrap().status == PacketStatus::CaptureLoss)
        .count();
    let p = lost as f64 / n as f64;
    assert!((p - 0.25).abs() < 0.03, "{p}");
}

#[test]
fn bad_config_rejected() {
    for cfg in [
        LinkConfig { capture_loss: 1.0, ..LinkConfig::default() },
        LinkConfig { n_segments: 1, ..LinkConfig::default() },
        LinkConfig { packet_rate_hz: 0.0, ..LinkConfig::default() },
        LinkConfig { phase_span_deg: Some((5.0, 1.0)), ..LinkConfig::default() },
    ] {
        assert!(LinkSimulator::new(cfg).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn positive_offsets_inside_gi_change_nothing(offset in 0.0f64..790.0, seed in 0u64..100) {
        let mut base = LinkConfig::default();
        base.channel.n_taps = 1;
        base.channel.sfo_ppm_max = 0.0;
        base.channel.mean_snr_db = Some(15.0);
        let late = LinkConfig { tag: phasescatter::tag::TagConfig { extra_delay_ns: offset, ..base.tag.clone() }, ..base.clone() };
        let a = LinkSimulator::new(base).unwrap().simulate_packet(seed, 0, 0.0, 3.3).unwrap();
        let b = LinkSimulator::new(late).unwrap().simulate_packet(seed, 0, 0.0, 3.3).unwrap();
        prop_assert_eq!(a.status, b.status);
        if a.received() {
            prop_assert!((a.measured_phase_deg - b.measured_phase_deg).abs() < 1e-9);
        }
    }

    #[test]
    fn noiseless_reconstruction_within_linearity(v in 0.0f64..5.0) {
        let sim = LinkSimulator::new(LinkConfig::default()).unwrap();
        let o = sim.simulate_packet(9, 1, 0.0, v).unwrap();
        let curve = phasescatter::rf::phase_voltage_curve(
            &sim.config.tag.circuit,
            sim.config.tag.carrier_hz,
            &(0..=50).map(|i| i as f64 * 0.1).collect::<Vec<_>>(),
        ).unwrap();
        let slope = sim.digitizer.calibration().slope.abs();
        prop_assert!((o.reconstructed_v - v).abs() <= curve.max_residual_deg / slope + 1e-9);
    }
}
