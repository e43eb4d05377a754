use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, Scenario, SweepAxis};
use super::table::{emit_csv, write_sidecar, Cell, Provenance, ResultTable};
use super::ExperimentError;
use crate::link::{summarize, LinkConfig, LinkSimulator, PacketOutcome};
use crate::mac::{
    carrier_throughput_ratio, default_power_components, power_budget, TransparencyModel, COMPARISON_POWER_UW,
};
use crate::rf::{band_flatness, circuit_s11, phase_voltage_curve, Branch, DEFAULT_BAND_HI_HZ, DEFAULT_BAND_LO_HZ};
use crate::scalar::unwrap_deg;
use crate::tag::{switching_contamination, SwitchModel, VoltageSource};

const VOLTAGE_STREAM_SALT: u64 = 0x766f_6c74_6167_6573;

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Link config at one sweep point, with distance and axis overrides.
fn link_at(cfg: &ExperimentConfig, axis: Option<SweepAxis>, x: f64) -> LinkConfig {
    let mut link = cfg.link.clone();
    if let Some(d) = &cfg.distance {
        link.channel.mean_snr_db = Some(d.snr_db());
    }
    match axis {
        Some(SweepAxis::SyncOffsetNs) => link.tag.extra_delay_ns = x,
        Some(SweepAxis::NSegments) => link.n_segments = x as usize,
        Some(SweepAxis::Snr) => link.channel.mean_snr_db = Some(x),
        Some(SweepAxis::Tl2Length) => link.tag.circuit = link.tag.circuit.with_tl2_length(x),
        _ => {}
    }
    link
}

fn packet_voltage(cfg: &ExperimentConfig, k: u64, t_s: f64) -> f64 {
    match &cfg.voltage {
        VoltageSource::Constant { volts } => *volts,
        VoltageSource::Uniform { min, max } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ VOLTAGE_STREAM_SALT);
            rng.set_stream(k);
            min + (max - min) * rng.random::<f64>()
        }
        VoltageSource::Steps {
            levels,
            packets_per_level,
        } => levels[(k as usize / packets_per_level) % levels.len()],
        VoltageSource::Trace { trace } => trace.value_at(t_s),
    }
}

/// Simulates `packets_per_point` packets; packet k uses the same random
/// stream at every sweep point.
fn run_packets(
    cfg: &ExperimentConfig,
    sim: &LinkSimulator,
    fixed_v: Option<f64>,
) -> Result<Vec<PacketOutcome>, ExperimentError> {
    let rate = sim.config.packet_rate_hz;
    (0..cfg.packets_per_point as u64)
        .into_par_iter()
        .map(|k| {
            let t = k as f64 / rate;
            let v = fixed_v.unwrap_or_else(|| packet_voltage(cfg, k, t));
            sim.simulate_packet(cfg.seed, k, t, v).map_err(Into::into)
        })
        .collect()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
    (m, v.sqrt())
}

/// Circular standard deviation, degrees.
fn circular_std_deg(deg: &[f64]) -> f64 {
    if deg.is_empty() {
        return f64::NAN;
    }
    let (s, c) = deg
        .iter()
        .fold((0.0, 0.0), |(s, c), d| (s + d.to_radians().sin(), c + d.to_radians().cos()));
    let r = (s * s + c * c).sqrt() / deg.len() as f64;
    (-2.0 * r.min(1.0).ln()).sqrt().to_degrees()
}

fn num_row(cells: impl IntoIterator<Item = f64>) -> Vec<Cell> {
    cells.into_iter().map(Cell::Num).collect()
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable, ExperimentError> {
    cfg.validate()?;
    let axis = cfg.sweep.as_ref().map(|s| s.axis);
    let points = match &cfg.sweep {
        Some(s) => s.points()?,
        None => Vec::new(),
    };
    let axis_col = axis.map(|a| a.column().to_string());
    let mut columns: Vec<String> = axis_col.into_iter().collect();
    let rows: Vec<Vec<Cell>> = match cfg.scenario {
        Scenario::PhaseVoltage => {
            columns.extend(
                ["rf_phase_deg", "chain_phase_deg", "chain_phase_std_deg", "magnitude", "residual_deg"].map(String::from),
            );
            let sim = LinkSimulator::new(link_at(cfg, None, 0.0))?;
            let fit = sim.digitizer.calibration();
            points
                .par_iter()
                .map(|&v| {
                    let out = run_packets(cfg, &sim, Some(v))?;
                    let phases: Vec<f64> = out.iter().filter(|o| o.received()).map(|o| o.measured_phase_deg).collect();
                    let (m, s) = mean_std(&phases);
                    let rf = sim.true_phase_deg(v)?;
                    let t = &sim.config.tag;
                    let mag = circuit_s11(&t.circuit, Branch::Embedding, v, t.carrier_hz)?.magnitude();
                    Ok(num_row([v, rf, m, s, mag, rf - fit.eval(v)]))
                })
                .collect::<Result<_, ExperimentError>>()?
        }
        Scenario::BandFlatness => {
            let levels = &cfg.bias_levels_v;
            columns.extend(levels.iter().map(|v| format!("rel_phase_deg_at_{v}v")));
            let c = &cfg.link.tag.circuit;
            let mut per_level: Vec<Vec<f64>> = levels
                .iter()
                .map(|&v| {
                    points
                        .iter()
                        .map(|&f| {
                            let e = circuit_s11(c, Branch::Embedding, v, f)?.value;
                            let r = circuit_s11(c, Branch::Reference, v, f)?.value;
                            Ok((e / r).arg().to_degrees())
                        })
                        .collect::<Result<Vec<f64>, ExperimentError>>()
                })
                .collect::<Result<_, _>>()?;
            per_level.iter_mut().for_each(|col| unwrap_deg(col));
            points
                .iter()
                .enumerate()
                .map(|(i, &f)| num_row(std::iter::once(f).chain(per_level.iter().map(|c| c[i]))))
                .collect()
        }
        Scenario::CsiConsistency => {
            columns.extend(
                [
                    "packets_rx",
                    "regular_phase_std_deg",
                    "ess_phase_std_deg",
                    "difference_mean_deg",
                    "difference_std_deg",
                ]
                .map(String::from),
            );
            points
                .par_iter()
                .map(|&snr| {
                    let sim = LinkSimulator::new(link_at(cfg, axis, snr))?;
                    let out = run_packets(cfg, &sim, None)?;
                    let rx: Vec<&PacketOutcome> = out.iter().filter(|o| o.received()).collect();
                    let reg: Vec<f64> = rx.iter().map(|o| o.regular_phase_deg).collect();
                    let ess: Vec<f64> = rx.iter().map(|o| o.ess_phase_deg).collect();
                    let diff: Vec<f64> = rx.iter().map(|o| o.measured_phase_deg - o.true_phase_deg).collect();
                    let (dm, ds) = mean_std(&diff);
                    Ok(num_row([
                        snr,
                        rx.len() as f64,
                        circular_std_deg(&reg),
                        circular_std_deg(&ess),
                        dm,
                        ds,
                    ]))
                })
                .collect::<Result<_, ExperimentError>>()?
        }
        Scenario::Transient => {
            columns.extend(
                [
                    "rf_switch_error_deg",
                    "lc_transient_error_deg",
                    "rf_switch_contaminated",
                    "lc_transient_contaminated",
                ]
                .map(String::from),
            );
            let rf_link = link_at(cfg, None, 0.0);
            let tau = match rf_link.tag.switch_model {
                SwitchModel::LcTransient { tau_us } => tau_us,
                SwitchModel::RfSwitch { .. } => 0.9,
            };
            let ts = match rf_link.tag.switch_model {
                SwitchModel::RfSwitch { t_switch_ns } => t_switch_ns,
                SwitchModel::LcTransient { .. } => 10.0,
            };
            let rf_model = SwitchModel::RfSwitch { t_switch_ns: ts };
            let lc_model = SwitchModel::LcTransient { tau_us: tau };
            let mut rf_cfg = rf_link.clone();
            rf_cfg.tag.switch_model = rf_model;
            let mut lc_cfg = rf_link;
            lc_cfg.tag.switch_model = lc_model;
            let rf_sim = LinkSimulator::new(rf_cfg)?;
            let lc_sim = LinkSimulator::new(lc_cfg)?;
            let rf_c = switching_contamination(&rf_model, 3.2, 0.95, 1.0);
            let lc_c = switching_contamination(&lc_model, 3.2, 0.95, 1.0);
            points
                .par_iter()
                .map(|&v| {
                    let err = |sim: &LinkSimulator| -> Result<f64, ExperimentError> {
                        let out = run_packets(cfg, sim, Some(v))?;
                        let e: Vec<f64> = out.iter().filter(|o| o.received()).map(|o| o.phase_error_deg()).collect();
                        Ok(mean_std(&e).0)
                    };
                    Ok(num_row([v, err(&rf_sim)?, err(&lc_sim)?, rf_c, lc_c]))
                })
                .collect::<Result<_, ExperimentError>>()?
        }
        Scenario::Link => {
            columns.extend(
                [
                    "packets_sent",
                    "packets_rx",
                    "bits_per_packet",
                    "der",
                    "throughput_bps",
                    "phase_err_p50_deg",
                    "phase_err_p95_deg",
                    "voltage_dev_p95_v",
                ]
                .map(String::from),
            );
            points
                .par_iter()
                .map(|&x| {
                    let sim = LinkSimulator::new(link_at(cfg, axis, x))?;
                    let fixed = (axis == Some(SweepAxis::Voltage)).then_some(x);
                    let out = run_packets(cfg, &sim, fixed)?;
                    let bits = sim.digitizer.bits_per_packet();
                    let s = summarize(&out, bits, cfg.packets_per_point as f64 / sim.config.packet_rate_hz);
                    Ok(num_row([
                        x,
                        s.packets_sent as f64,
                        s.packets_rx as f64,
                        bits,
                        s.der,
                        s.throughput_bps,
                        s.phase_err_p50,
                        s.phase_err_p95,
                        s.v_dev_p95,
                    ]))
                })
                .collect::<Result<_, ExperimentError>>()?
        }
        Scenario::Tl2Flatness => {
            columns.extend(["span_deg", "rms_residual_deg", "flatness_max_deg"].map(String::from));
            let vmax = cfg.link.tag.circuit.varactor.max_bias;
            let grid: Vec<f64> = (0..=50).map(|i| vmax * i as f64 / 50.0).collect();
            points
                .par_iter()
                .map(|&len| {
                    let c = cfg.link.tag.circuit.with_tl2_length(len);
                    let curve = phase_voltage_curve(&c, cfg.link.tag.carrier_hz, &grid)?;
                    let flat = cfg
                        .bias_levels_v
                        .iter()
                        .map(|&v| band_flatness(&c, v, DEFAULT_BAND_LO_HZ, DEFAULT_BAND_HI_HZ))
                        .collect::<Result<Vec<f64>, _>>()?
                        .into_iter()
                        .fold(0.0, f64::max);
                    Ok(num_row([len, curve.span_deg(), curve.rms_residual_deg, flat]))
                })
                .collect::<Result<_, ExperimentError>>()?
        }
        Scenario::Transparency => {
            let models = [
                TransparencyModel::EssEmbedding {
                    payload_us: cfg.link.n_data_symbols as f64 * crate::phy::SYMBOL_US,
                },
                TransparencyModel::witag_default(),
                TransparencyModel::wifi_backscatter_default(),
            ];
            columns.extend(models.iter().map(|m| m.name().to_string()));
            points
                .iter()
                .map(|&r| {
                    std::iter::once(Cell::Num(r))
                        .chain(models.iter().map(|m| carrier_throughput_ratio(m, r).map_or(Cell::Empty, Cell::Num)))
                        .collect()
                })
                .collect()
        }
        Scenario::PowerBudget => {
            columns.extend(["component", "microwatts", "ratio_to_total"].map(String::from));
            let comps = cfg.power_components.clone().unwrap_or_else(default_power_components);
            let b = power_budget(&comps)?;
            let mut rows: Vec<Vec<Cell>> = b
                .breakdown
                .iter()
                .map(|c| vec![Cell::Text(c.name.clone()), c.microwatts.into(), Cell::Empty])
                .collect();
            rows.push(vec!["total".into(), b.total_uw.into(), 1.0.into()]);
            for (name, uw) in COMPARISON_POWER_UW {
                rows.push(vec![name.into(), uw.into(), (uw / b.total_uw).into()]);
            }
            rows
        }
    };
    Ok(ResultTable {
        columns,
        rows,
        provenance: Provenance {
            scenario: serde_json::to_value(cfg.scenario).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default(),
            config_sha256: config_hash(cfg),
            seed: cfg.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        },
    })
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub table: ResultTable,
    pub csv: PathBuf,
    pub sidecar: PathBuf,
}

/// Runs and writes `<dir>/<name>.csv` plus its JSON sidecar.
pub fn run_to_dir(cfg: &ExperimentConfig, dir: &Path) -> Result<RunArtifacts, ExperimentError> {
    let table = run_experiment(cfg)?;
    std::fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    let csv = dir.join(format!("{}.csv", cfg.name));
    emit_csv(&table, &csv)?;
    let sidecar = write_sidecar(&table, cfg, &csv)?;
    Ok(RunArtifacts { table, csv, sidecar })
}
