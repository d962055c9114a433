use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mcsm::harness::{self, ExperimentConfig};

#[derive(Parser)]
#[command(name = "mcsm", version, about = "MCSM uplink simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a config file.
    Run {
        config: PathBuf,
        /// Override a config key, e.g. `--set experiment.frames_per_point=500`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// CSV output path (overrides `experiment.output`).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Ideal-channel identity self-test.
    Loopback {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value_t = 200)]
        frames: usize,
    },
    /// Write one received frame as raw IQ samples plus a `.hdr` sidecar.
    DumpFrame {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn load(config: Option<&PathBuf>, overrides: &[String]) -> mcsm::Result<ExperimentConfig> {
    let mut cfg = match config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    for o in overrides {
        cfg.apply_override(o)?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> mcsm::Result<bool> {
    match cli.command {
        Command::Run {
            config,
            overrides,
            output,
        } => {
            let mut cfg = load(Some(&config), &overrides)?;
            if output.is_some() {
                cfg.output = output;
            }
            let rows = harness::run_sweep(&cfg)?;
            if cfg.output.is_none() {
                print!("{}", harness::csv_preamble(&cfg));
                print!("{}", harness::csv_body(&rows));
            }
            Ok(true)
        }
        Command::Loopback {
            config,
            overrides,
            frames,
        } => {
            let cfg = load(config.as_ref(), &overrides)?;
            let report = harness::loopback(&cfg, frames, 3, frames.min(8))?;
            println!(
                "loopback: {} frames ({} in time domain), {} node frames, {} frame errors, {} missed, {} false alarms: {}",
                report.frames,
                report.time_domain_frames,
                report.active_node_frames,
                report.frame_errors,
                report.missed,
                report.false_alarms,
                if report.passed() { "PASS" } else { "FAIL" }
            );
            Ok(report.passed())
        }
        Command::DumpFrame {
            seed,
            output,
            config,
            overrides,
        } => {
            let cfg = load(config.as_ref(), &overrides)?;
            let hdr = harness::dump_frame(&cfg, seed, &output)?;
            println!("wrote {} and {}", output.display(), hdr.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
