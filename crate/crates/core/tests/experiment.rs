use std::fs;

use phasescatter::experiment::*;
use phasescatter::link::LinkConfig;
use proptest::prelude::*;

fn field_of(e: ExperimentError) -> String {
    match e {
        ExperimentError::Config { field, .. } => field,
        other => panic!("expected config error, got {other}"),
    }
}

#[test]
fn sweep_errors_name_the_field() {
    let bad = [
        (Sweep::range(SweepAxis::Voltage, 0.0, 5.0, 0.0), "sweep.step"),
        (Sweep::range(SweepAxis::Voltage, 5.0, 0.0, 1.0), "sweep.stop"),
        (Sweep::list(SweepAxis::Voltage, vec![]), "sweep.values"),
        (Sweep::list(SweepAxis::Voltage, vec![1.0, 1.0]), "sweep.values"),
        (Sweep::range(SweepAxis::Voltage, 0.0, 1e9, 1.0), "sweep.step"),
    ];
    for (s, field) in bad {
        assert_eq!(field_of(s.points().unwrap_err()), field);
    }
    let pts = Sweep::list(SweepAxis::Voltage, vec![3.0, 1.0, 2.0]).points().unwrap();
    assert_eq!(pts, vec![1.0, 2.0, 3.0]);
    let r = Sweep::range(SweepAxis::Voltage, 0.0, 1.0, 0.1).points().unwrap();
    assert_eq!(r.len(), 11);
}

#[test]
fn config_validation() {
    let mut c = ExperimentConfig::new("x", Scenario::PhaseVoltage, None);
    assert_eq!(field_of(c.validate().unwrap_err()), "sweep");
    c.sweep = Some(Sweep::list(SweepAxis::Frequency, vec![2.4e9]));
    assert_eq!(field_of(c.validate().unwrap_err()), "sweep.axis");
    c.sweep = Some(Sweep::list(SweepAxis::Voltage, vec![1.0]));
    c.validate().unwrap();
    c.name = "bad name/".into();
    assert_eq!(field_of(c.validate().unwrap_err()), "name");

    let p = ExperimentConfig::new("p", Scenario::PowerBudget, Some(Sweep::list(SweepAxis::Voltage, vec![1.0])));
    assert_eq!(field_of(p.validate().unwrap_err()), "sweep");
    ExperimentConfig::new("p", Scenario::PowerBudget, None).validate().unwrap();
}

#[test]
fn unknown_json_field_rejected() {
    let e = ExperimentConfig::from_json(r#"{"name":"a","scenario":"power_budget","bogus":1}"#).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    assert!(e.to_string().contains("bogus"), "{e}");
    let nested = r#"{"name":"a","scenario":"link","sweep":{"axis":"voltage","values":[1]},"link":{"n_segmnts":4}}"#;
    assert_eq!(field_of(ExperimentConfig::from_json(nested).unwrap_err()), "link.n_segmnts");
    let axis = r#"{"name":"a","scenario":"link","sweep":{"axis":"volts","values":[1]}}"#;
    assert_eq!(field_of(ExperimentConfig::from_json(axis).unwrap_err()), "sweep.axis");
}

#[test]
fn config_json_roundtrip() {
    for name in preset_names() {
        let c = preset(name).unwrap();
        c.validate().unwrap();
        assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c, "{name}");
    }
    assert!(preset("nope").is_none());
}

#[test]
fn csv_roundtrip_at_nine_digits() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let vals = [1.0 / 3.0, -2.5e-7, 123456.789012345, 0.0];
    let table = ResultTable {
        columns: vec!["a".into(), "b".into()],
        rows: vals.iter().map(|&v| vec![Cell::Num(v), Cell::Text("x".into())]).chain([vec![Cell::Empty, Cell::Num(1.0)]]).collect(),
        provenance: Provenance {
            scenario: "test".into(),
            config_sha256: "0".into(),
            seed: 0,
            tool_version: "0".into(),
        },
    };
    emit_csv(&table, &path).unwrap();
    let (cols, rows) = read_csv(&path).unwrap();
    assert_eq!(cols, table.columns);
    for (v, row) in vals.iter().zip(&rows) {
        let got = row[0].as_f64().unwrap();
        assert!((got - v).abs() <= 5e-9 * v.abs(), "{got} {v}");
    }
    assert_eq!(rows[4][0], Cell::Empty);

    let empty = ResultTable { rows: vec![], ..table };
    emit_csv(&empty, &path).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap(), "a,b\n");
}

#[test]
fn reruns_are_byte_identical_and_hash_tracks_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig::new("csi", Scenario::CsiConsistency, Some(Sweep::list(SweepAxis::Snr, vec![10.0, 20.0])));
    c.packets_per_point = 20;
    let a = run_to_dir(&c, &dir.path().join("a")).unwrap();
    let b = run_to_dir(&c, &dir.path().join("b")).unwrap();
    assert_eq!(fs::read(&a.csv).unwrap(), fs::read(&b.csv).unwrap());
    assert_eq!(fs::read(&a.sidecar).unwrap(), fs::read(&b.sidecar).unwrap());
    assert_eq!(a.table.provenance.config_sha256.len(), 64);

    c.seed += 1;
    let t = run_experiment(&c).unwrap();
    assert_ne!(t.provenance.config_sha256, a.table.provenance.config_sha256);
    let side: serde_json::Value = serde_json::from_slice(&fs::read(&a.sidecar).unwrap()).unwrap();
    assert_eq!(side["provenance"]["scenario"], "csi_consistency");
}

#[test]
fn io_error_when_output_is_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("file");
    fs::write(&f, "x").unwrap();
    let c = ExperimentConfig::new("p", Scenario::PowerBudget, None);
    let e = run_to_dir(&c, &f).unwrap_err();
    assert_eq!(e.exit_code(), 4);
}

#[test]
fn trace_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("v.csv");
    fs::write(&p, "time_s,volts\n0,0\n1,5\n").unwrap();
    let t = ingest_voltage_trace(&p, 0.0, 5.0).unwrap();
    assert!((t.trace.value_at(0.5) - 2.5).abs() < 1e-12);
    assert_eq!(t.clamped, 0);

    fs::write(&p, "time_s,volts\n0,1\n1,6\n2,-1\n").unwrap();
    let t = ingest_voltage_trace(&p, 0.0, 5.0).unwrap();
    assert_eq!(t.clamped, 2);
    assert_eq!(t.trace.volts, vec![1.0, 5.0, 0.0]);

    fs::write(&p, "time_s,volts\n0,1\n2,1\n1,1\n").unwrap();
    match ingest_voltage_trace(&p, 0.0, 5.0).unwrap_err() {
        ExperimentError::Parse { line, .. } => assert_eq!(line, 4),
        e => panic!("{e}"),
    }
    fs::write(&p, "time_s,volts\n0,1\n1,abc\n").unwrap();
    match ingest_voltage_trace(&p, 0.0, 5.0).unwrap_err() {
        ExperimentError::Parse { line, reason, .. } => {
            assert_eq!(line, 3);
            assert!(reason.contains("volts"));
        }
        e => panic!("{e}"),
    }
    fs::write(&p, "t,v\n0,1\n").unwrap();
    assert_eq!(ingest_voltage_trace(&p, 0.0, 5.0).unwrap_err().exit_code(), 2);
}

#[test]
fn noiseless_chain_tracks_circuit_phase() {
    let mut c = ExperimentConfig::new("pv", Scenario::PhaseVoltage, Some(Sweep::range(SweepAxis::Voltage, 0.0, 5.0, 0.5)));
    c.packets_per_point = 3;
    let t = run_experiment(&c).unwrap();
    let rf = t.column("rf_phase_deg").unwrap();
    let chain = t.column("chain_phase_deg").unwrap();
    for (a, b) in rf.iter().zip(&chain) {
        assert!((a.unwrap() - b.unwrap()).to_radians().abs() < 1e-6, "{a:?} {b:?}");
    }
}

#[test]
fn sync_offsets_inside_gi_give_flat_der() {
    let mut c = preset("fig20_sync").unwrap();
    c.packets_per_point = 200;
    c.sweep = Some(Sweep::list(SweepAxis::SyncOffsetNs, vec![-300.0, 0.0, 150.0, 300.0, 600.0, 800.0]));
    let t = run_experiment(&c).unwrap();
    let der = t.column("der").unwrap();
    let inside: Vec<f64> = der[1..].iter().map(|d| d.unwrap()).collect();
    assert!(inside.iter().all(|&d| d == inside[0]), "{inside:?}");
    assert!(der[0].unwrap() > inside[0] + 0.3, "{der:?}");
}

#[test]
fn distance_model_snr() {
    let d = DistanceModel { tx_tag_m: 1.0, tag_rx_m: 10.0, exponent: 2.0, snr_at_1m_db: 40.0 };
    assert!((d.snr_db() - 20.0).abs() < 1e-12);
    assert!(LinkConfig::default().validate().is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sig9_keeps_nine_digits(x in -1e12f64..1e12) {
        let y: f64 = format_sig9(x).parse().unwrap();
        prop_assert!((x - y).abs() <= 5e-9 * x.abs());
    }

    #[test]
    fn range_points_are_sorted_and_bounded(a in -10.0f64..10.0, span in 0.0f64..10.0, step in 0.01f64..2.0) {
        let pts = Sweep::range(SweepAxis::Voltage, a, a + span, step).points().unwrap();
        prop_assert!(pts.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(*pts.last().unwrap() <= a + span + 1e-9);
        prop_assert_eq!(pts[0], a);
    }
}
