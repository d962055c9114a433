//! Joint activity and data detection with GOMP on a planted frame.

use mcsm::csmud::{gomp_detect, DetectionProblem, GompConfig};
use mcsm::{generate_sequences, SequenceFamily};
use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> mcsm::Result<()> {
    let (n_sc, k, l) = (20, 60, 50);
    let set = generate_sequences(k, n_sc, 1, SequenceFamily::RandomQpskChips)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let active = [5, 19, 33, 58];
    let mut b = Array2::<Complex64>::zeros((k, l));
    for &node in &active {
        let gain = Complex64::from_polar(rng.random_range(0.3..1.5), rng.random_range(0.0..6.3));
        for j in 0..l {
            b[[node, j]] = gain * Complex64::i().powi(rng.random_range(0..4));
        }
    }
    let noise = 1e-4;
    let y = set
        .matrix()
        .dot(&b)
        .mapv(|z| z + mcsm::channel::complex_normal(&mut rng, noise));

    let cfg = GompConfig {
        noise_variance: Some(noise),
        ..GompConfig::default()
    };
    let r = gomp_detect(
        &DetectionProblem {
            y: &y,
            s: set.matrix(),
        },
        &cfg,
    )?;
    println!("planted nodes  {active:?}");
    println!(
        "selected order {:?} ({:?} after {} iterations)",
        r.support, r.stop, r.iterations
    );
    for (row, norm) in r.residual_history.iter().enumerate() {
        println!("  residual after {row} selections: {norm:.4}");
    }
    for &node in &active {
        let err = r.estimate(node).map(|est| {
            est.iter()
                .zip(b.row(node))
                .map(|(a, t)| (a - t).norm())
                .fold(0.0, f64::max)
        });
        println!("node {node}: max estimate error {err:?}");
    }
    Ok(())
}
