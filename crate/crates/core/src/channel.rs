//! Sporadic activity and the frequency-domain uplink channel.
//!
//! Every node sees a single complex gain per hop across the whole block, so
//! the received block for symbol `i` is
//! `y(i) = e^{j phi i} * sum_k h_k(hop(i)) s_k b_k(i) + n(i)`.

use std::f64::consts::PI;
use std::str::FromStr;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::spread::SpreadingSet;
use crate::waveform::OfdmConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivityMode {
    /// Exactly `n` nodes, a uniformly drawn subset.
    FixedCount(usize),
    /// Each node independently active with probability `p_a`.
    Bernoulli(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivityModel {
    pub mode: ActivityMode,
    pub seed: u64,
}

impl ActivityMode {
    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        match *self {
            ActivityMode::FixedCount(n) if n > num_nodes => Err(Error::invalid(format!(
                "{n} active nodes requested out of {num_nodes}"
            ))),
            ActivityMode::Bernoulli(p) if !(0.0..=1.0).contains(&p) => Err(Error::invalid(
                format!("activity probability {p} outside [0, 1]"),
            )),
            _ => Ok(()),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, num_nodes: usize, rng: &mut R) -> Result<Vec<bool>> {
        self.validate(num_nodes)?;
        let mut active = vec![false; num_nodes];
        match *self {
            ActivityMode::FixedCount(n) => {
                for k in rand::seq::index::sample(rng, num_nodes, n) {
                    active[k] = true;
                }
            }
            ActivityMode::Bernoulli(p) => {
                for a in &mut active {
                    *a = rng.random_bool(p);
                }
            }
        }
        Ok(active)
    }
}

pub fn draw_activity(model: &ActivityModel, num_nodes: usize) -> Result<Vec<bool>> {
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    model.mode.draw(num_nodes, &mut rng)
}

/// Exponential power-delay profile with taps one sample apart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TappedDelayLine {
    pub taps: usize,
    /// Decay constant of the tap powers, in samples. Zero gives a single tap.
    pub delay_spread_samples: f64,
}

impl Default for TappedDelayLine {
    fn default() -> Self {
        TappedDelayLine {
            taps: 8,
            delay_spread_samples: 2.0,
        }
    }
}

impl TappedDelayLine {
    /// Tap powers, normalized to sum to one.
    pub fn tap_powers(&self) -> Vec<f64> {
        if self.taps <= 1 || self.delay_spread_samples <= 0.0 {
            return vec![1.0];
        }
        let raw: Vec<f64> = (0..self.taps)
            .map(|l| (-(l as f64) / self.delay_spread_samples).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|p| p / total).collect()
    }

    /// RMS delay spread of the profile in samples.
    pub fn rms_delay_samples(&self) -> f64 {
        let p = self.tap_powers();
        let mean: f64 = p.iter().enumerate().map(|(l, w)| l as f64 * w).sum();
        let second: f64 = p.iter().enumerate().map(|(l, w)| (l * l) as f64 * w).sum();
        (second - mean * mean).max(0.0).sqrt()
    }

    /// `B_c ~ 1 / tau_rms`, infinite for a single tap.
    pub fn coherence_bandwidth(&self, sample_rate: f64) -> f64 {
        let tau = self.rms_delay_samples() / sample_rate;
        if tau == 0.0 {
            f64::INFINITY
        } else {
            1.0 / tau
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelPreset {
    /// Unit gain for every node; loopback and oracle tests.
    Ideal,
    /// Rayleigh gain per node, constant over the frame.
    LosFlat,
    /// Per node, a random tapped delay line evaluated at each hop's block
    /// center.
    NlosSelective(TappedDelayLine),
}

impl ChannelPreset {
    pub fn name(&self) -> &'static str {
        match self {
            ChannelPreset::Ideal => "ideal",
            ChannelPreset::LosFlat => "los_flat",
            ChannelPreset::NlosSelective(_) => "nlos_selective",
        }
    }
}

impl FromStr for ChannelPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(ChannelPreset::Ideal),
            "los_flat" => Ok(ChannelPreset::LosFlat),
            "nlos_selective" => Ok(ChannelPreset::NlosSelective(TappedDelayLine::default())),
            other => Err(Error::Config(format!("unknown channel preset '{other}'"))),
        }
    }
}

/// Received-SNR convention: energy of one active node's spread symbol over
/// the noise energy summed across the `N_SC` occupied subcarriers. With unit
/// gain this equals the per-subcarrier signal-to-noise power ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrSpec {
    pub snr_db: f64,
}

impl SnrSpec {
    pub fn new(snr_db: f64) -> Result<Self> {
        if !snr_db.is_finite() {
            return Err(Error::invalid(format!("SNR {snr_db} dB is not finite")));
        }
        Ok(SnrSpec { snr_db })
    }

    pub fn linear(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    /// Noise variance per complex subcarrier sample.
    pub fn noise_variance(&self, num_subcarriers: usize) -> f64 {
        1.0 / (num_subcarriers as f64 * self.linear())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// `K x n_hops` complex gains.
    pub gains: Array2<Complex64>,
    pub noise_variance: f64,
    pub cfo_hz: f64,
    pub preset: ChannelPreset,
}

impl ChannelRealization {
    pub fn num_hops(&self) -> usize {
        self.gains.ncols()
    }

    pub fn gain(&self, node: usize, hop: usize) -> Complex64 {
        self.gains[[node, hop]]
    }

    pub fn with_snr(mut self, snr: Option<SnrSpec>, num_subcarriers: usize) -> Self {
        self.noise_variance = snr.map_or(0.0, |s| s.noise_variance(num_subcarriers));
        self
    }

    pub fn with_cfo(mut self, cfo_hz: f64) -> Self {
        self.cfo_hz = cfo_hz;
        self
    }
}

pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// Draws per-node, per-hop gains. `hop_centers` holds each hop's block
/// center as a (possibly fractional) FFT bin index. The result is noiseless
/// and CFO-free; see [`ChannelRealization::with_snr`].
pub fn draw_channel_with<R: Rng + ?Sized>(
    preset: &ChannelPreset,
    num_nodes: usize,
    hop_centers: &[f64],
    fft_len: usize,
    rng: &mut R,
) -> ChannelRealization {
    let n_hops = hop_centers.len();
    let mut gains = Array2::from_elem((num_nodes, n_hops), Complex64::new(1.0, 0.0));
    match preset {
        ChannelPreset::Ideal => {}
        ChannelPreset::LosFlat => {
            for k in 0..num_nodes {
                let h = complex_normal(rng, 1.0);
                gains.row_mut(k).fill(h);
            }
        }
        ChannelPreset::NlosSelective(tdl) => {
            let powers = tdl.tap_powers();
            for k in 0..num_nodes {
                let taps: Vec<Complex64> = powers.iter().map(|&p| complex_normal(rng, p)).collect();
                for (hop, &center) in hop_centers.iter().enumerate() {
                    gains[[k, hop]] = taps
                        .iter()
                        .enumerate()
                        .map(|(l, &h)| {
                            h * Complex64::from_polar(
                                1.0,
                                -2.0 * PI * center * l as f64 / fft_len as f64,
                            )
                        })
                        .sum();
                }
            }
        }
    }
    ChannelRealization {
        gains,
        noise_variance: 0.0,
        cfo_hz: 0.0,
        preset: *preset,
    }
}

pub fn draw_channel(
    preset: &ChannelPreset,
    num_nodes: usize,
    hop_centers: &[f64],
    fft_len: usize,
    seed: u64,
) -> ChannelRealization {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_channel_with(preset, num_nodes, hop_centers, fft_len, &mut rng)
}

/// Common phase advance per OFDM symbol caused by a carrier offset.
pub fn cfo_phase_step(cfo_hz: f64, cfg: &OfdmConfig) -> f64 {
    2.0 * PI * cfo_hz * cfg.symbol_period()
}

/// Frequency-domain multi-user transmission: each node's differential
/// symbol stream plus the activity pattern.
#[derive(Debug, Clone, Copy)]
pub struct UplinkTx<'a> {
    pub spreading: &'a SpreadingSet,
    /// Indexed by node; inactive entries are ignored.
    pub node_symbols: &'a [Vec<Complex64>],
    pub activity: &'a [bool],
    pub num_symbols: usize,
    pub hop_interval: usize,
}

/// Passes the transmission through `realization` and returns the received
/// `N_SC x N_B` block matrix `Y`.
pub fn apply_channel<R: Rng + ?Sized>(
    tx: &UplinkTx<'_>,
    realization: &ChannelRealization,
    cfg: &OfdmConfig,
    rng: &mut R,
) -> Result<Array2<Complex64>> {
    let k = tx.spreading.num_nodes();
    if tx.node_symbols.len() != k || tx.activity.len() != k {
        return Err(Error::invalid("symbol streams or activity do not match K"));
    }
    if realization.gains.nrows() != k {
        return Err(Error::invalid(format!(
            "realization covers {} nodes, expected {k}",
            realization.gains.nrows()
        )));
    }
    if tx.hop_interval == 0 || tx.num_symbols.div_ceil(tx.hop_interval) > realization.num_hops() {
        return Err(Error::invalid("realization does not cover every hop"));
    }
    let active: Vec<usize> = (0..k).filter(|&n| tx.activity[n]).collect();
    if let Some(&n) = active
        .iter()
        .find(|&&n| tx.node_symbols[n].len() != tx.num_symbols)
    {
        return Err(Error::invalid(format!(
            "node {n} has {} symbols, expected {}",
            tx.node_symbols[n].len(),
            tx.num_symbols
        )));
    }

    let n_sc = tx.spreading.sequence_len();
    let step = cfo_phase_step(realization.cfo_hz, cfg);
    let mut y = Array2::<Complex64>::zeros((n_sc, tx.num_symbols));
    for i in 0..tx.num_symbols {
        let hop = i / tx.hop_interval;
        let rot = if realization.cfo_hz == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::from_polar(1.0, step * i as f64)
        };
        let mut col = y.column_mut(i);
        for &n in &active {
            let coeff = rot * realization.gain(n, hop) * tx.node_symbols[n][i];
            for (acc, &s) in col.iter_mut().zip(tx.spreading.sequence(n)) {
                *acc += s * coeff;
            }
        }
        if realization.noise_variance > 0.0 {
            for acc in col.iter_mut() {
                *acc += complex_normal(rng, realization.noise_variance);
            }
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spread::{generate_sequences, SequenceFamily};

    #[test]
    fn fixed_count_extremes() {
        let none = draw_activity(
            &ActivityModel {
                mode: ActivityMode::FixedCount(0),
                seed: 1,
            },
            60,
        )
        .unwrap();
        assert!(none.iter().all(|a| !a));
        let all = draw_activity(
            &ActivityModel {
                mode: ActivityMode::FixedCount(60),
                seed: 1,
            },
            60,
        )
        .unwrap();
        assert!(all.iter().all(|&a| a));
        let six = draw_activity(
            &ActivityModel {
                mode: ActivityMode::FixedCount(6),
                seed: 3,
            },
            60,
        )
        .unwrap();
        assert_eq!(six.iter().filter(|&&a| a).count(), 6);
        assert!(ActivityMode::FixedCount(61).validate(60).is_err());
        assert!(ActivityMode::Bernoulli(1.5).validate(60).is_err());
    }

    #[test]
    fn activity_is_seeded() {
        let m = ActivityModel {
            mode: ActivityMode::Bernoulli(0.3),
            seed: 42,
        };
        assert_eq!(
            draw_activity(&m, 60).unwrap(),
            draw_activity(&m, 60).unwrap()
        );
    }

    #[test]
    fn single_tap_is_flat() {
        let tdl = TappedDelayLine {
            taps: 8,
            delay_spread_samples: 0.0,
        };
        assert_eq!(tdl.tap_powers(), vec![1.0]);
        assert_eq!(tdl.coherence_bandwidth(26e6), f64::INFINITY);
        let centers: Vec<f64> = (0..15).map(|h| 10.0 + 97.0 * h as f64).collect();
        let r = draw_channel(&ChannelPreset::NlosSelective(tdl), 4, &centers, 2048, 9);
        for row in r.gains.rows() {
            assert!(row.iter().all(|&g| g == row[0]));
        }
    }

    #[test]
    fn los_gain_constant_over_hops() {
        let centers = vec![0.0; 15];
        let r = draw_channel(&ChannelPreset::LosFlat, 60, &centers, 2048, 3);
        assert_eq!(r.num_hops(), 15);
        for row in r.gains.rows() {
            assert!(row.iter().all(|&g| g == row[0]));
        }
    }

    #[test]
    fn nlos_gains_vary_across_hops() {
        let centers: Vec<f64> = (0..15).map(|h| 10.5 + 83.0 * h as f64).collect();
        let preset: ChannelPreset = "nlos_selective".parse().unwrap();
        let r = draw_channel(&preset, 3, &centers, 2048, 3);
        for row in r.gains.rows() {
            assert!(row.iter().any(|&g| (g - row[0]).norm() > 1e-3));
        }
    }

    #[test]
    fn default_profile_is_flat_over_a_block() {
        let cfg = OfdmConfig::default();
        let bc = TappedDelayLine::default().coherence_bandwidth(cfg.sample_rate);
        assert!(cfg.occupied_bandwidth() <= bc);
    }

    #[test]
    fn cfo_rotation_at_five_khz() {
        let step = cfo_phase_step(5000.0, &OfdmConfig::default());
        assert!((step - 2.0 * PI * 5000.0 * 84.3077e-6).abs() < 1e-4);
        assert!((step - 2.649).abs() < 1e-3);
    }

    #[test]
    fn scalar_gain_noiseless() {
        let set = generate_sequences(4, 20, 1, SequenceFamily::RandomQpskChips).unwrap();
        let b: Vec<Complex64> = (0..5)
            .map(|i| Complex64::from_polar(1.0, i as f64))
            .collect();
        let streams = vec![vec![], b.clone(), vec![], vec![]];
        let activity = [false, true, false, false];
        let mut r = draw_channel(&ChannelPreset::Ideal, 4, &[0.0], 2048, 0);
        r.gains.fill(Complex64::new(2.0, 0.0));
        let tx = UplinkTx {
            spreading: &set,
            node_symbols: &streams,
            activity: &activity,
            num_symbols: 5,
            hop_interval: 10,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = apply_channel(&tx, &r, &OfdmConfig::default(), &mut rng).unwrap();
        for i in 0..5 {
            for n in 0..20 {
                let expected = set.sequence(1)[n] * b[i] * 2.0;
                assert!((y[[n, i]] - expected).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn snr_conversion() {
        let s = SnrSpec::new(10.0).unwrap();
        assert!((s.noise_variance(20) - 0.005).abs() < 1e-15);
        assert!(SnrSpec::new(f64::INFINITY).is_err());
    }
}
