//! FER against the number of active nodes on a flat Rayleigh channel.
//! Usage: fer_vs_active_users [frames_per_point]

use mcsm::harness::{csv_body, run_sweep, ExperimentConfig, SweepAxis};
use mcsm::ChannelPreset;

fn main() -> mcsm::Result<()> {
    let frames = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(300);
    let cfg = ExperimentConfig {
        channel: ChannelPreset::LosFlat,
        snr_db: Some(30.0),
        sweep: SweepAxis::ActiveCount((1..=10).map(|i| 2 * i).collect()),
        frames_per_point: frames,
        ..ExperimentConfig::default()
    };
    let rows = run_sweep(&cfg)?;
    print!("{}", csv_body(&rows));
    for r in &rows {
        let fer = r.fer.unwrap_or(0.0);
        println!(
            "{:>3} {:<50} {:.4}",
            r.sweep_value,
            "#".repeat((fer * 50.0).round() as usize),
            fer
        );
    }
    Ok(())
}
