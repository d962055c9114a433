//! Per-node gains of each channel preset and the SNR to noise mapping.

use mcsm::channel::{cfo_phase_step, draw_channel};
use mcsm::{ChannelPreset, Link, LinkConfig, SnrSpec, TappedDelayLine};

fn main() -> mcsm::Result<()> {
    let link = Link::new(LinkConfig::default())?;
    let centers = link.schedule.center_bins();
    let tdl = TappedDelayLine::default();
    println!(
        "tdl: {} taps, rms delay {:.2} samples, coherence bandwidth ~{:.2} MHz",
        tdl.taps,
        tdl.rms_delay_samples(),
        tdl.coherence_bandwidth(link.config.ofdm.sample_rate) / 1e6
    );
    for preset in [
        ChannelPreset::Ideal,
        ChannelPreset::LosFlat,
        ChannelPreset::NlosSelective(tdl),
    ] {
        let r = draw_channel(&preset, 4, &centers, link.config.ofdm.fft_len, 9);
        let first: Vec<String> = (0..5)
            .map(|h| format!("{:.2}", r.gain(0, h).norm()))
            .collect();
        println!(
            "{:<15} node 0 |h| over first hops: {}",
            preset.name(),
            first.join(" ")
        );
    }
    for db in [0.0, 10.0, 30.0] {
        let snr = SnrSpec::new(db)?;
        println!(
            "SNR {db:>4} dB -> noise variance per subcarrier {:.2e}",
            snr.noise_variance(20)
        );
    }
    println!(
        "5 kHz carrier offset -> {:.4} rad per OFDM symbol",
        cfo_phase_step(5e3, &link.config.ofdm)
    );
    Ok(())
}
