//! FER against SNR on the frequency-selective channel with sporadic
//! activity. Usage: fer_vs_snr [frames_per_point] [continuous|per_hop]

use mcsm::harness::{csv_body, run_sweep, ExperimentConfig};

fn main() -> mcsm::Result<()> {
    let mut args = std::env::args().skip(1);
    let frames = args.next().unwrap_or_else(|| "500".into());
    let reference = args.next().unwrap_or_else(|| "continuous".into());
    let mut cfg = ExperimentConfig::from_text(
        "channel.preset = nlos_selective\nactivity.p_a = 0.1\nsweep.axis = snr_db\nsweep.values = 0,5,10,15,20,25,30\n",
    )?;
    cfg.set("experiment.frames_per_point", &frames)?;
    cfg.set("link.reference", &reference)?;
    let rows = run_sweep(&cfg)?;
    print!("{}", csv_body(&rows));
    Ok(())
}
