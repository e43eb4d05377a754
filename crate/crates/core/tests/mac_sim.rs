use phasescatter::mac::*;
use proptest::prelude::*;

fn count(r: &MacReport, f: impl Fn(&MacEvent) -> bool) -> usize {
    r.events.iter().filter(|e| f(e)).count()
}

#[test]
fn single_tag_wakes_and_backscatters() {
    let cfg = MacConfig::new(1, 1000.0, 0.05);
    let r = run_mac_scenario(&cfg).unwrap();
    check_trace(&r.events, &cfg).unwrap();
    assert_eq!(r.tag_stats[0].wakes, 1);
    let tag_data = count(&r, |e| e.actor == Actor::Tag(0) && matches!(e.kind, MacKind::DataPacket { .. }));
    assert!(tag_data > 40, "{tag_data}");
    // Every backscattered packet is followed by a re-shifted ACK.
    assert_eq!(r.tag_stats[0].acks_reshifted, r.tag_stats[0].backscattered);
    assert_eq!(
        count(&r, |e| e.kind == MacKind::Ack && e.actor == Actor::Tag(0) && e.channel == MacChannel::Original),
        tag_data
    );
    // The reservation sits on the secondary channel ahead of the first excitation.
    let cts = r.events.iter().find(|e| e.kind == MacKind::CtsToSelf).unwrap();
    assert_eq!(cts.channel, MacChannel::Secondary);
    let exc: Vec<f64> = r
        .events
        .iter()
        .filter(|e| e.kind == MacKind::ExcitationPacket)
        .map(|e| e.time_us)
        .collect();
    assert_eq!(exc.len(), 2);
    assert!((exc[1] - exc[0] - 100.0).abs() < 1e-9);
    assert!(exc[0] - cts.time_us >= cfg.cts_airtime_us);
}

#[test]
fn no_tags_means_transmitter_only() {
    let cfg = MacConfig::new(0, 1000.0, 0.02);
    let r = run_mac_scenario(&cfg).unwrap();
    check_trace(&r.events, &cfg).unwrap();
    assert!(r.events.iter().all(|e| !matches!(e.actor, Actor::Tag(_))));
    assert_eq!(
        count(&r, |e| matches!(e.kind, MacKind::DataPacket { .. })),
        r.transmitter_packets
    );
    assert_eq!(r.transmitter_packets, 20);
}

#[test]
fn two_tags_hand_off() {
    let mut cfg = MacConfig::new(2, 1000.0, 0.04);
    cfg.wake_schedule.push(WakeCommand {
        time_s: 0.02,
        interval_us: 200.0,
    });
    let r = run_mac_scenario(&cfg).unwrap();
    check_trace(&r.events, &cfg).unwrap();
    assert_eq!(r.tag_stats[0].wakes, 1);
    assert_eq!(r.tag_stats[1].wakes, 1);
    let sleep = r.events.iter().position(|e| e.kind == MacKind::TagSleep && e.actor == Actor::Tag(0)).unwrap();
    let wake1 = r.events.iter().position(|e| e.kind == MacKind::TagWake && e.actor == Actor::Tag(1)).unwrap();
    assert!(sleep < wake1);
    // Never two tags transmitting at once: tag 0 only before the hand-off, tag 1 only after.
    let t_handoff = r.events[wake1].time_us;
    for e in &r.events {
        if matches!(e.kind, MacKind::DataPacket { .. }) {
            match e.actor {
                Actor::Tag(0) => assert!(e.time_us < t_handoff),
                Actor::Tag(1) => assert!(e.time_us > t_handoff),
                _ => {}
            }
        }
    }
    assert!(r.tag_stats[0].backscattered > 0 && r.tag_stats[1].backscattered > 0);
}

#[test]
fn duplicate_intervals_rejected() {
    let mut cfg = MacConfig::new(2, 1000.0, 0.01);
    cfg.tag_intervals_us = vec![100.0, 115.0];
    assert!(matches!(run_mac_scenario(&cfg), Err(MacError::Config(_))));
}

#[test]
fn unknown_interval_wakes_nobody() {
    let mut cfg = MacConfig::new(1, 1000.0, 0.01);
    cfg.wake_schedule[0].interval_us = 150.0;
    let r = run_mac_scenario(&cfg).unwrap();
    assert_eq!(r.tag_stats[0].wakes, 0);
    assert_eq!(r.tag_stats[0].backscattered, 0);
}

#[test]
fn tampered_trace_is_caught() {
    let cfg = MacConfig::new(1, 1000.0, 0.01);
    let mut ev = run_mac_scenario(&cfg).unwrap().events;
    let i = ev.iter().position(|e| e.kind == MacKind::TagWake).unwrap();
    ev.remove(i);
    assert!(matches!(check_trace(&ev, &cfg), Err(MacError::Trace { .. })));
}

#[test]
fn runs_are_deterministic_and_csv_has_header() {
    let cfg = MacConfig::new(1, 500.0, 0.02);
    let a = run_mac_scenario(&cfg).unwrap();
    let b = run_mac_scenario(&cfg).unwrap();
    assert_eq!(a.events, b.events);
    let mut buf = Vec::new();
    write_trace_csv(&a.events, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("time_us,kind,channel,actor"));
    assert_eq!(lines.count(), a.events.len());
}

#[test]
fn transparency_models() {
    let ess = TransparencyModel::ess_default();
    assert_eq!(carrier_throughput_ratio(&ess, 0.0).unwrap(), 1.0);
    assert!((carrier_throughput_ratio(&ess, 5000.0).unwrap() - 40.0 / 44.0).abs() < 1e-12);
    let long = TransparencyModel::EssEmbedding { payload_us: 80.0 };
    assert!(carrier_throughput_ratio(&long, 1e5).unwrap() >= 0.95);
    let witag = TransparencyModel::witag_default();
    assert!((carrier_throughput_ratio(&witag, 4000.0).unwrap() - 0.5).abs() < 0.05);
    let wb = TransparencyModel::wifi_backscatter_default();
    assert!(matches!(carrier_throughput_ratio(&wb, 401.0), Err(MacError::Range { .. })));
    assert!(carrier_throughput_ratio(&witag, -1.0).is_err());
}

#[test]
fn power_budget_totals() {
    let b = power_budget(&default_power_components()).unwrap();
    assert!((b.total_uw - 30.0).abs() <= 1.0, "{}", b.total_uw);
    let sum: f64 = b.breakdown.iter().map(|c| c.microwatts).sum();
    assert!((sum - b.total_uw).abs() < 1e-12);
    for (_, p) in COMPARISON_POWER_UW {
        let r = p / b.total_uw;
        assert!((4.0..=5.0).contains(&r), "{r}");
    }
    let neg = vec![PowerComponent { name: "x".into(), microwatts: -1.0 }];
    assert!(power_budget(&neg).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generated_traces_satisfy_invariants(
        n_tags in 0usize..4,
        rate in 100.0f64..3000.0,
        switches in prop::collection::vec(0usize..4, 0..4),
    ) {
        let mut cfg = MacConfig::new(n_tags, rate, 0.05);
        for (i, s) in switches.iter().enumerate() {
            cfg.wake_schedule.push(WakeCommand {
                time_s: 0.01 * (i + 1) as f64,
                interval_us: 100.0 * (s + 1) as f64,
            });
        }
        let r = run_mac_scenario(&cfg).unwrap();
        prop_assert!(check_trace(&r.events, &cfg).is_ok());
        let awake: usize = r.tag_stats.iter().map(|s| s.backscattered).sum();
        prop_assert!(awake <= r.transmitter_packets);
    }
}
