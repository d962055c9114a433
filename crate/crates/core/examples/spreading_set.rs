//! Generate the node spreading sequences, inspect them and round-trip them
//! through the text format.

use mcsm::{generate_sequences, SequenceFamily, SpreadingSet};

fn main() -> mcsm::Result<()> {
    for family in [
        SequenceFamily::RandomQpskChips,
        SequenceFamily::RandomComplexGaussian,
    ] {
        let set = generate_sequences(60, 20, 1, family)?;
        println!(
            "{:<24} K={} N_S={} max coherence {:.3}",
            family.name(),
            set.num_nodes(),
            set.sequence_len(),
            set.max_coherence()
        );
    }

    let set = generate_sequences(60, 20, 1, SequenceFamily::RandomQpskChips)?;
    let path = std::env::temp_dir().join("mcsm_sequences.txt");
    set.save(&path)?;
    let loaded = SpreadingSet::load(&path)?;
    println!(
        "saved to {} and reloaded: identical = {}",
        path.display(),
        loaded.matrix() == set.matrix()
    );
    println!(
        "first chips of node 0: {:.3?}",
        &set.sequence(0).to_vec()[..3]
    );
    Ok(())
}
