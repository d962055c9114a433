//! Differential 4-PSK survives any unknown constant channel gain.

use mcsm::{demap_psk, diff_demodulate, diff_modulate, map_psk, PskConfig};
use num_complex::Complex64;

fn main() -> mcsm::Result<()> {
    let psk = PskConfig::default();
    let bits = [0, 0, 0, 1, 1, 1, 1, 0, 0, 1];
    let a = map_psk(&bits, &psk)?;
    let b = diff_modulate(&a)?;
    println!("symbols a: {a:?}");
    println!("differential b (b0 = 1): {b:?}");

    for h in [
        Complex64::new(1.0, 0.0),
        Complex64::from_polar(0.2, 2.0),
        Complex64::from_polar(7.0, -1.3),
    ] {
        let received: Vec<Complex64> = b.iter().map(|z| z * h).collect();
        let decided = demap_psk(&diff_demodulate(&received)?, &psk)?;
        println!("h = {h:.2}: bits {decided:?} (match: {})", decided == bits);
    }
    Ok(())
}
