//! Encode a payload with the [5;7] convolutional code, corrupt it, decode.

use mcsm::{encode, viterbi_decode, CodeConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> mcsm::Result<()> {
    let code = CodeConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let u: Vec<u8> = (0..150).map(|_| rng.random_range(0..2)).collect();
    let c = encode(&u, &code)?;
    println!(
        "{} info bits -> {} coded bits (tail {})",
        u.len(),
        c.len(),
        code.tail_len()
    );

    let mut r = c.clone();
    for i in [10, 80, 200] {
        r[i] ^= 1;
    }
    let u_hat = viterbi_decode(&r, &code)?;
    let errors = u.iter().zip(&u_hat).filter(|(a, b)| a != b).count();
    println!("3 scattered channel bit errors -> {errors} decoded bit errors");

    let mut burst = c;
    for bit in burst.iter_mut().skip(40).take(6) {
        *bit ^= 1;
    }
    let errors = u
        .iter()
        .zip(&viterbi_decode(&burst, &code)?)
        .filter(|(a, b)| a != b)
        .count();
    println!("6-bit burst -> {errors} decoded bit errors");
    Ok(())
}
