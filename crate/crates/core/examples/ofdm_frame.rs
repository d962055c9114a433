//! OFDM timing and frame geometry, then one transmitted frame built from
//! three active nodes.

use mcsm::waveform::{assemble_frame, FrameLayout, FrameProfile, ReferenceMode};
use mcsm::{Link, LinkConfig, OfdmConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mcsm::Result<()> {
    let cfg = OfdmConfig::default();
    println!(
        "subcarrier spacing  {:.4} kHz",
        cfg.subcarrier_spacing() / 1e3
    );
    println!(
        "symbol / CP         {:.3} us / {:.3} us",
        cfg.symbol_duration() * 1e6,
        cfg.cp_duration() * 1e6
    );
    println!(
        "block bandwidth     {:.1} kHz",
        cfg.occupied_bandwidth() / 1e3
    );

    let link = Link::new(LinkConfig::default())?;
    for (label, reference, profile) in [
        (
            "self-consistent",
            ReferenceMode::Continuous,
            FrameProfile::SelfConsistent,
        ),
        (
            "per-hop reference",
            ReferenceMode::PerHop,
            FrameProfile::SelfConsistent,
        ),
        ("nominal", ReferenceMode::Continuous, FrameProfile::Nominal),
    ] {
        let l = FrameLayout::new(
            150,
            &link.config.code,
            &link.config.psk,
            cfg.hop_interval,
            reference,
            profile,
        )?;
        println!(
            "{label:<18} N_B={:3}  samples={}  duration={:.3} ms",
            l.num_symbols,
            cfg.frame_samples(l.num_symbols),
            cfg.frame_duration(l.num_symbols) * 1e3
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let k = link.config.num_nodes;
    let mut activity = vec![false; k];
    let mut streams = vec![Vec::new(); k];
    for node in [3, 17, 42] {
        activity[node] = true;
        streams[node] = link.modulate_node(&link.random_payload(&mut rng))?;
    }
    let frame = assemble_frame(
        &streams,
        &link.spreading,
        &activity,
        link.layout.num_symbols,
        &link.schedule,
        &cfg,
    )?;
    let power =
        frame.samples().iter().map(|z| z.norm_sqr()).sum::<f64>() / frame.samples().len() as f64;
    println!(
        "frame: {} symbols, {} samples, mean sample power {power:.2e}, first hops on blocks {:?}",
        frame.num_symbols(),
        frame.samples().len(),
        &link.schedule.blocks()[..4]
    );
    Ok(())
}
