//! Full link on an ideal channel: transmit, OFDM in the time domain,
//! receive, decode and score.

use mcsm::harness::{loopback, ExperimentConfig, Simulation, SweepAxis};
use mcsm::{process_frame, ChannelPreset, ReceivedFrame};

fn main() -> mcsm::Result<()> {
    let cfg = ExperimentConfig {
        channel: ChannelPreset::Ideal,
        snr_db: None,
        sweep: SweepAxis::ActiveCount(vec![5]),
        ..ExperimentConfig::default()
    };
    let sim = Simulation::new(cfg.clone())?;
    let trial = sim.draw_trial(&sim.point(0), 0, 0)?;
    let frame = sim.receive_time_frame(&trial, 0, 0)?;
    let (rx, score) = process_frame(
        ReceivedFrame::Time(&frame),
        &sim.link,
        &sim.gomp_config(&trial),
        &trial.payloads,
        &trial.activity,
    )?;
    let truth: Vec<usize> = (0..trial.activity.len())
        .filter(|&k| trial.activity[k])
        .collect();
    println!(
        "active {truth:?}, declared {:?}",
        rx.detection.sorted_support()
    );
    println!(
        "frame errors {}, bit errors {}",
        score.frame_errors, score.bit_errors
    );

    let report = loopback(&cfg, 200, 3, 10)?;
    println!(
        "{report:?} -> {}",
        if report.passed() { "PASS" } else { "FAIL" }
    );
    Ok(())
}
