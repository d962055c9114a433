//! Gray-labelled M-PSK mapping and differential (D-MPSK) modulation.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fec::check_bits;

const UNIT_TOLERANCE: f64 = 1e-9;
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PskConfig {
    order: usize,
    points: Vec<Complex64>,
}

impl Default for PskConfig {
    fn default() -> Self {
        PskConfig::new(4).expect("4-PSK is valid")
    }
}

impl PskConfig {
    /// Constellation point `m` sits at angle `2*pi*m/M` and carries the Gray
    /// label `m ^ (m >> 1)`, most significant bit first. For `M = 4`:
    /// `00 -> 1`, `01 -> j`, `11 -> -1`, `10 -> -j`.
    pub fn new(order: usize) -> Result<Self> {
        if order < 2 || !order.is_power_of_two() {
            return Err(Error::invalid(format!(
                "PSK order {order} is not a power of two >= 2"
            )));
        }
        let points = (0..order)
            .map(|m| match (4 * m) % order {
                // Quarter turns are written out so the axes are exact.
                0 => match 4 * m / order {
                    0 => Complex64::new(1.0, 0.0),
                    1 => Complex64::new(0.0, 1.0),
                    2 => Complex64::new(-1.0, 0.0),
                    _ => Complex64::new(0.0, -1.0),
                },
                _ => Complex64::from_polar(1.0, 2.0 * PI * m as f64 / order as f64),
            })
            .collect();
        Ok(PskConfig { order, points })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.order.trailing_zeros() as usize
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    fn label(&self, index: usize) -> usize {
        index ^ (index >> 1)
    }

    fn index_of_label(&self, label: usize) -> usize {
        // Inverse Gray code.
        let mut index = label;
        let mut shift = label >> 1;
        while shift != 0 {
            index ^= shift;
            shift >>= 1;
        }
        index
    }

    /// Index of the nearest constellation point; ties go to the smallest index.
    pub fn nearest_index(&self, z: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = (z - self.points[0]).norm_sqr();
        for (m, p) in self.points.iter().enumerate().skip(1) {
            let d = (z - p).norm_sqr();
            if d < best_d - TIE_TOLERANCE {
                best = m;
                best_d = d;
            }
        }
        best
    }
}

/// Modulation and differential symbols of one node frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolFrame {
    pub psk_symbols: Vec<Complex64>,
    /// Includes the reference `b(0) = 1`, so one longer than `psk_symbols`.
    pub diff_symbols: Vec<Complex64>,
}

impl SymbolFrame {
    pub fn from_bits(bits: &[u8], cfg: &PskConfig) -> Result<Self> {
        let psk_symbols = map_psk(bits, cfg)?;
        let diff_symbols = diff_modulate(&psk_symbols)?;
        Ok(SymbolFrame {
            psk_symbols,
            diff_symbols,
        })
    }
}

pub fn map_psk(bits: &[u8], cfg: &PskConfig) -> Result<Vec<Complex64>> {
    let bps = cfg.bits_per_symbol();
    if !bits.len().is_multiple_of(bps) {
        return Err(Error::invalid(format!(
            "{} bits do not divide into {bps}-bit symbols",
            bits.len()
        )));
    }
    check_bits(bits)?;
    Ok(bits
        .chunks(bps)
        .map(|chunk| {
            let label = chunk.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
            cfg.points[cfg.index_of_label(label)]
        })
        .collect())
}

/// `b(0) = 1`, `b(i) = a(i) * b(i-1)`.
pub fn diff_modulate(a: &[Complex64]) -> Result<Vec<Complex64>> {
    if let Some(i) = a
        .iter()
        .position(|z| (z.norm() - 1.0).abs() > UNIT_TOLERANCE)
    {
        return Err(Error::invalid(format!(
            "symbol {i} has magnitude {}, expected 1",
            a[i].norm()
        )));
    }
    let mut b = Vec::with_capacity(a.len() + 1);
    let mut prev = Complex64::new(1.0, 0.0);
    b.push(prev);
    for &ai in a {
        prev = ai * prev;
        b.push(prev);
    }
    Ok(b)
}

/// `a_hat(i) = b_hat(i) * conj(b_hat(i-1))`, unnormalized.
pub fn diff_demodulate(b_hat: &[Complex64]) -> Result<Vec<Complex64>> {
    if b_hat.len() < 2 {
        return Err(Error::invalid(
            "differential demodulation needs at least two symbols",
        ));
    }
    Ok(b_hat.windows(2).map(|w| w[1] * w[0].conj()).collect())
}

pub fn demap_psk(a_hat: &[Complex64], cfg: &PskConfig) -> Result<Vec<u8>> {
    if a_hat.is_empty() {
        return Err(Error::invalid("nothing to demap"));
    }
    let bps = cfg.bits_per_symbol();
    let mut bits = Vec::with_capacity(a_hat.len() * bps);
    for &z in a_hat {
        let label = cfg.label(cfg.nearest_index(z));
        bits.extend((0..bps).rev().map(|k| ((label >> k) & 1) as u8));
    }
    Ok(bits)
}
