//! Write one received frame as interleaved little-endian f64 IQ samples.
//! Usage: dump_iq [path] [seed]

use std::path::PathBuf;

use mcsm::harness::{dump_frame, ExperimentConfig};
use mcsm::waveform::read_iq;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = PathBuf::from(args.next().unwrap_or_else(|| "frame.iq".into()));
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let cfg = ExperimentConfig::from_text("sweep.values = 4\nchannel.snr_db = 20\n")?;
    let hdr = dump_frame(&cfg, seed, &path)?;
    let samples = read_iq(&path)?;
    println!(
        "{} samples -> {} (header {})",
        samples.len(),
        path.display(),
        hdr.display()
    );
    print!("{}", std::fs::read_to_string(hdr)?);
    Ok(())
}
