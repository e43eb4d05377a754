use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use phasescatter::experiment::{
    ingest_voltage_trace, preset, run_to_dir, ExperimentConfig, ExperimentError, PRESETS,
};
use phasescatter::tag::VoltageSource;

const OUT_DIR_ENV: &str = "PHASESCATTER_OUT_DIR";

#[derive(Parser)]
#[command(name = "phasescatter", version, about = "Analog WiFi backscatter experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a JSON config or a named preset.
    Run {
        config: Option<PathBuf>,
        /// Output directory [env: PHASESCATTER_OUT_DIR, default: results].
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        preset: Option<String>,
        /// Replay a `time_s,volts` CSV as the sensor voltage.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// List the built-in presets.
    ListPresets,
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Print a preset as JSON, as a starting point for a config file.
    ShowPreset { name: String },
}

fn load(config: Option<PathBuf>, preset_name: Option<String>) -> Result<ExperimentConfig, ExperimentError> {
    match (config, preset_name) {
        (Some(path), None) => ExperimentConfig::load(&path),
        (None, Some(name)) => preset(&name).ok_or_else(|| ExperimentError::Config {
            field: "preset".into(),
            reason: format!("unknown preset `{name}`; see list-presets"),
        }),
        (Some(_), Some(_)) => Err(ExperimentError::Config {
            field: "preset".into(),
            reason: "give a config file or --preset, not both".into(),
        }),
        (None, None) => Err(ExperimentError::Config {
            field: "config".into(),
            reason: "a config file or --preset is required".into(),
        }),
    }
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            preset,
            trace,
        } => {
            let mut cfg = load(config, preset)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(path) = trace {
                let vmax = cfg.link.tag.circuit.varactor.max_bias;
                let t = ingest_voltage_trace(&path, 0.0, vmax)?;
                if t.clamped > 0 {
                    eprintln!("warning: {} trace samples clamped to [0, {vmax}] V", t.clamped);
                }
                cfg.voltage = VoltageSource::Trace { trace: t.trace };
            }
            cfg.validate()?;
            let dir = out
                .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("results"));
            let started = std::time::Instant::now();
            let art = run_to_dir(&cfg, &dir)?;
            log::info!("{} finished in {:.2?}", cfg.name, started.elapsed());
            println!("{}", art.csv.display());
            println!("{}", art.sidecar.display());
            Ok(())
        }
        Command::ListPresets => {
            for (name, about) in PRESETS {
                println!("{name:<24}{about}");
            }
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            println!("ok: {} ({:?})", cfg.name, cfg.scenario);
            Ok(())
        }
        Command::ShowPreset { name } => {
            let cfg = load(None, Some(name))?;
            println!("{}", cfg.to_json());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
