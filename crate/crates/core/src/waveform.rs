//! OFDM subcarrier mapping, cyclic prefix, frequency hopping and frame
//! assembly.
//!
//! Both DFT directions use unitary `1/sqrt(N)` scaling, so a frequency-domain
//! block keeps its energy in the time domain.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};

use crate::dpsk::{self, PskConfig};
use crate::error::{Error, Result};
use crate::fec::{CodeConfig, Termination};
use crate::spread::{spread_symbol, SpreadingSet};

#[derive(Debug, Clone, PartialEq)]
pub struct OfdmConfig {
    /// IDFT length `N`.
    pub fft_len: usize,
    /// Cyclic prefix length `N_CP`.
    pub cp_len: usize,
    /// Subcarriers per MCSM block `N_SC`.
    pub num_subcarriers: usize,
    /// Samples per second.
    pub sample_rate: f64,
    /// OFDM symbols between hops.
    pub hop_interval: usize,
    pub hop_seed: u64,
    /// Number of non-overlapping blocks the hopping pattern may visit.
    pub usable_blocks: usize,
    /// First FFT bin of block 0 (bin 0 is DC).
    pub first_bin: usize,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        OfdmConfig {
            fft_len: 2048,
            cp_len: 144,
            num_subcarriers: 20,
            sample_rate: 26e6,
            hop_interval: 10,
            hop_seed: 7,
            usable_blocks: 64,
            first_bin: 1,
        }
    }
}

impl OfdmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fft_len == 0 || self.num_subcarriers == 0 || self.num_subcarriers > self.fft_len {
            return Err(Error::invalid(format!(
                "need 0 < N_SC <= N, got N_SC={}, N={}",
                self.num_subcarriers, self.fft_len
            )));
        }
        if self.cp_len >= self.fft_len {
            return Err(Error::invalid(format!(
                "cyclic prefix {} not shorter than N={}",
                self.cp_len, self.fft_len
            )));
        }
        if self.hop_interval == 0 || self.usable_blocks == 0 {
            return Err(Error::invalid(
                "hop interval and usable blocks must be >= 1",
            ));
        }
        if self.first_bin + self.usable_blocks * self.num_subcarriers > self.fft_len {
            return Err(Error::invalid(format!(
                "{} blocks of {} subcarriers from bin {} exceed N={}",
                self.usable_blocks, self.num_subcarriers, self.first_bin, self.fft_len
            )));
        }
        if self.sample_rate.is_nan() || self.sample_rate <= 0.0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        Ok(())
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.sample_rate
    }

    /// `Δf = f_s / N`.
    pub fn subcarrier_spacing(&self) -> f64 {
        self.sample_rate / self.fft_len as f64
    }

    /// Core symbol time without the prefix.
    pub fn symbol_duration(&self) -> f64 {
        self.fft_len as f64 / self.sample_rate
    }

    pub fn cp_duration(&self) -> f64 {
        self.cp_len as f64 / self.sample_rate
    }

    pub fn symbol_samples(&self) -> usize {
        self.fft_len + self.cp_len
    }

    /// Duration of one OFDM symbol including the prefix.
    pub fn symbol_period(&self) -> f64 {
        self.symbol_samples() as f64 / self.sample_rate
    }

    /// `B = N_SC * Δf`.
    pub fn occupied_bandwidth(&self) -> f64 {
        self.num_subcarriers as f64 * self.subcarrier_spacing()
    }

    pub fn frame_samples(&self, num_symbols: usize) -> usize {
        num_symbols * self.symbol_samples()
    }

    pub fn frame_duration(&self, num_symbols: usize) -> f64 {
        self.frame_samples(num_symbols) as f64 / self.sample_rate
    }

    pub fn block_bins(&self, block: usize) -> Range<usize> {
        let start = self.first_bin + block * self.num_subcarriers;
        start..start + self.num_subcarriers
    }
}

/// How the differential reference is laid out in the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceMode {
    /// One reference `b(0) = 1` at the start of the frame; differential
    /// decisions run straight across hop boundaries.
    Continuous,
    /// Every hop segment starts with its own reference symbol.
    PerHop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameProfile {
    /// Terminated code plus a transmitted reference: 153 symbols at defaults.
    SelfConsistent,
    /// Truncated code and no reference symbol: 150 symbols at defaults.
    /// Only used for frame-geometry arithmetic; it cannot be simulated
    /// because the receiver has no observed anchor for the first decision.
    Nominal,
}

/// Symbol budget of one node frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameLayout {
    pub info_len: usize,
    pub coded_len: usize,
    pub data_symbols: usize,
    /// `N_B`, the number of OFDM symbols in the frame.
    pub num_symbols: usize,
    pub reference: ReferenceMode,
    pub profile: FrameProfile,
    hop_interval: usize,
}

impl FrameLayout {
    pub fn new(
        info_len: usize,
        code: &CodeConfig,
        psk: &PskConfig,
        hop_interval: usize,
        reference: ReferenceMode,
        profile: FrameProfile,
    ) -> Result<Self> {
        if info_len == 0 {
            return Err(Error::invalid("frame needs at least one information bit"));
        }
        let code = match profile {
            FrameProfile::SelfConsistent => *code,
            FrameProfile::Nominal => code.with_termination(Termination::Truncated),
        };
        let coded_len = code.coded_len(info_len);
        let bps = psk.bits_per_symbol();
        if coded_len % bps != 0 {
            return Err(Error::invalid(format!(
                "{coded_len} coded bits do not fill whole {bps}-bit symbols"
            )));
        }
        let data_symbols = coded_len / bps;
        let num_symbols = match (profile, reference) {
            (FrameProfile::Nominal, _) => data_symbols,
            (FrameProfile::SelfConsistent, ReferenceMode::Continuous) => data_symbols + 1,
            (FrameProfile::SelfConsistent, ReferenceMode::PerHop) => {
                if hop_interval < 2 {
                    return Err(Error::invalid(
                        "per-hop references need a hop interval of at least 2",
                    ));
                }
                data_symbols + data_symbols.div_ceil(hop_interval - 1)
            }
        };
        Ok(FrameLayout {
            info_len,
            coded_len,
            data_symbols,
            num_symbols,
            reference,
            profile,
            hop_interval,
        })
    }

    pub fn hop_interval(&self) -> usize {
        self.hop_interval
    }

    pub fn num_hops(&self) -> usize {
        self.num_symbols.div_ceil(self.hop_interval)
    }

    /// Differential symbol stream for a node's PSK symbols.
    pub fn node_symbols(&self, psk_symbols: &[Complex64]) -> Result<Vec<Complex64>> {
        if self.profile == FrameProfile::Nominal {
            return Err(Error::invalid(
                "the nominal profile is geometry-only and carries no reference",
            ));
        }
        if psk_symbols.len() != self.data_symbols {
            return Err(Error::invalid(format!(
                "{} PSK symbols, layout expects {}",
                psk_symbols.len(),
                self.data_symbols
            )));
        }
        match self.reference {
            ReferenceMode::Continuous => dpsk::diff_modulate(psk_symbols),
            ReferenceMode::PerHop => {
                let mut out = Vec::with_capacity(self.num_symbols);
                for chunk in psk_symbols.chunks(self.hop_interval - 1) {
                    out.extend(dpsk::diff_modulate(chunk)?);
                }
                Ok(out)
            }
        }
    }

    /// Inverse of [`FrameLayout::node_symbols`] up to the decision stage:
    /// conjugate-product differential demodulation per reference segment.
    pub fn differential_decisions(&self, b_hat: &[Complex64]) -> Result<Vec<Complex64>> {
        if b_hat.len() != self.num_symbols {
            return Err(Error::invalid(format!(
                "{} received symbols, layout expects {}",
                b_hat.len(),
                self.num_symbols
            )));
        }
        match self.reference {
            ReferenceMode::Continuous => dpsk::diff_demodulate(b_hat),
            ReferenceMode::PerHop => {
                let mut out = Vec::with_capacity(self.data_symbols);
                for seg in b_hat.chunks(self.hop_interval) {
                    out.extend(dpsk::diff_demodulate(seg)?);
                }
                Ok(out)
            }
        }
    }
}

/// The hop-by-hop block placement known to both ends of the link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubcarrierAllocation {
    blocks: Vec<usize>,
    bins: Vec<Range<usize>>,
    hop_interval: usize,
}

impl SubcarrierAllocation {
    pub fn num_hops(&self) -> usize {
        self.blocks.len()
    }

    pub fn hop_interval(&self) -> usize {
        self.hop_interval
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn hop_of_symbol(&self, symbol: usize) -> usize {
        symbol / self.hop_interval
    }

    /// Contiguous bins occupied during `hop`.
    pub fn bins(&self, hop: usize) -> Range<usize> {
        self.bins[hop].clone()
    }

    pub fn symbol_bins(&self, symbol: usize) -> Range<usize> {
        self.bins(self.hop_of_symbol(symbol))
    }

    pub fn covers(&self, num_symbols: usize) -> bool {
        num_symbols <= self.blocks.len() * self.hop_interval
    }

    /// Center bin of each hop's block.
    pub fn center_bins(&self) -> Vec<f64> {
        self.bins
            .iter()
            .map(|r| (r.start + r.end - 1) as f64 / 2.0)
            .collect()
    }
}

pub fn hop_schedule(
    num_symbols: usize,
    cfg: &OfdmConfig,
    usable_blocks: usize,
) -> Result<SubcarrierAllocation> {
    let cfg = OfdmConfig {
        usable_blocks,
        ..cfg.clone()
    };
    cfg.validate()?;
    let hops = num_symbols.div_ceil(cfg.hop_interval);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.hop_seed);
    let blocks: Vec<usize> = (0..hops)
        .map(|_| rng.random_range(0..usable_blocks))
        .collect();
    let bins = blocks.iter().map(|&b| cfg.block_bins(b)).collect();
    Ok(SubcarrierAllocation {
        blocks,
        bins,
        hop_interval: cfg.hop_interval,
    })
}

/// Places `block` on `bins` of an otherwise empty `fft_len` spectrum.
pub fn subcarrier_map(
    block: &[Complex64],
    bins: Range<usize>,
    fft_len: usize,
) -> Result<Vec<Complex64>> {
    if bins.end > fft_len || bins.start > bins.end {
        return Err(Error::invalid(format!(
            "bins {bins:?} outside 0..{fft_len}"
        )));
    }
    if bins.len() != block.len() {
        return Err(Error::invalid(format!(
            "{} values for {} bins",
            block.len(),
            bins.len()
        )));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); fft_len];
    out[bins].copy_from_slice(block);
    Ok(out)
}

pub fn subcarrier_demap(spectrum: &[Complex64], bins: Range<usize>) -> Result<Vec<Complex64>> {
    spectrum
        .get(bins.clone())
        .map(<[Complex64]>::to_vec)
        .ok_or_else(|| Error::invalid(format!("bins {bins:?} outside 0..{}", spectrum.len())))
}

/// Planned unitary OFDM modulator/demodulator.
#[derive(Clone)]
pub struct Ofdm {
    fft_len: usize,
    cp_len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl std::fmt::Debug for Ofdm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ofdm")
            .field("fft_len", &self.fft_len)
            .field("cp_len", &self.cp_len)
            .finish()
    }
}

impl Ofdm {
    pub fn new(cfg: &OfdmConfig) -> Result<Self> {
        cfg.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Ofdm {
            fft_len: cfg.fft_len,
            cp_len: cfg.cp_len,
            forward: planner.plan_fft_forward(cfg.fft_len),
            inverse: planner.plan_fft_inverse(cfg.fft_len),
            scale: 1.0 / (cfg.fft_len as f64).sqrt(),
        })
    }

    pub fn modulate(&self, spectrum: &[Complex64]) -> Result<Vec<Complex64>> {
        if spectrum.len() != self.fft_len {
            return Err(Error::invalid(format!(
                "spectrum has {} bins, expected {}",
                spectrum.len(),
                self.fft_len
            )));
        }
        let mut body: Vec<Complex64> = spectrum.to_vec();
        self.inverse.process(&mut body);
        let mut out = Vec::with_capacity(self.fft_len + self.cp_len);
        out.extend(
            body[self.fft_len - self.cp_len..]
                .iter()
                .map(|z| z * self.scale),
        );
        out.extend(body.iter().map(|z| z * self.scale));
        Ok(out)
    }

    pub fn demodulate(&self, symbol: &[Complex64]) -> Result<Vec<Complex64>> {
        if symbol.len() != self.fft_len + self.cp_len {
            return Err(Error::invalid(format!(
                "time symbol has {} samples, expected {}",
                symbol.len(),
                self.fft_len + self.cp_len
            )));
        }
        let mut body: Vec<Complex64> = symbol[self.cp_len..].to_vec();
        self.forward.process(&mut body);
        for z in &mut body {
            *z *= self.scale;
        }
        Ok(body)
    }
}

pub fn ofdm_modulate(spectrum: &[Complex64], cfg: &OfdmConfig) -> Result<Vec<Complex64>> {
    Ofdm::new(cfg)?.modulate(spectrum)
}

pub fn ofdm_demodulate(symbol: &[Complex64], cfg: &OfdmConfig) -> Result<Vec<Complex64>> {
    Ofdm::new(cfg)?.demodulate(symbol)
}

/// Baseband samples of a whole frame, `N_B * (N + N_CP)` long.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeFrame {
    samples: Vec<Complex64>,
    symbol_samples: usize,
}

impl TimeFrame {
    pub fn from_samples(samples: Vec<Complex64>, cfg: &OfdmConfig) -> Result<Self> {
        let symbol_samples = cfg.symbol_samples();
        if !samples.len().is_multiple_of(symbol_samples) {
            return Err(Error::invalid(format!(
                "{} samples is not a whole number of {symbol_samples}-sample symbols",
                samples.len()
            )));
        }
        Ok(TimeFrame {
            samples,
            symbol_samples,
        })
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn num_symbols(&self) -> usize {
        self.samples.len() / self.symbol_samples
    }

    pub fn symbol(&self, i: usize) -> &[Complex64] {
        &self.samples[i * self.symbol_samples..(i + 1) * self.symbol_samples]
    }
}

/// Builds the superimposed transmit frame of all active nodes.
///
/// `node_symbols[k]` is node `k`'s differential symbol stream; entries of
/// inactive nodes are ignored and may be empty.
#[allow(clippy::needless_range_loop)]
pub fn assemble_frame(
    node_symbols: &[Vec<Complex64>],
    spreading: &SpreadingSet,
    activity: &[bool],
    num_symbols: usize,
    schedule: &SubcarrierAllocation,
    cfg: &OfdmConfig,
) -> Result<TimeFrame> {
    let k = spreading.num_nodes();
    if node_symbols.len() != k || activity.len() != k {
        return Err(Error::invalid(format!(
            "{} symbol streams and {} activity flags for {k} nodes",
            node_symbols.len(),
            activity.len()
        )));
    }
    if spreading.sequence_len() != cfg.num_subcarriers {
        return Err(Error::invalid(format!(
            "sequence length {} differs from N_SC={}",
            spreading.sequence_len(),
            cfg.num_subcarriers
        )));
    }
    if let Some(n) = (0..k).find(|&i| activity[i] && node_symbols[i].len() != num_symbols) {
        return Err(Error::invalid(format!(
            "node {n} has {} symbols, frame has {num_symbols}",
            node_symbols[n].len()
        )));
    }
    if !schedule.covers(num_symbols) {
        return Err(Error::invalid(format!(
            "schedule of {} hops does not cover {num_symbols} symbols",
            schedule.num_hops()
        )));
    }

    let ofdm = Ofdm::new(cfg)?;
    let mut samples = Vec::with_capacity(cfg.frame_samples(num_symbols));
    let mut block = vec![Complex64::new(0.0, 0.0); cfg.num_subcarriers];
    for i in 0..num_symbols {
        block.fill(Complex64::new(0.0, 0.0));
        for node in (0..k).filter(|&n| activity[n]) {
            let spread = spread_symbol(spreading.sequence(node), node_symbols[node][i]);
            for (acc, v) in block.iter_mut().zip(spread) {
                *acc += v;
            }
        }
        let spectrum = subcarrier_map(&block, schedule.symbol_bins(i), cfg.fft_len)?;
        samples.extend(ofdm.modulate(&spectrum)?);
    }
    TimeFrame::from_samples(samples, cfg)
}

/// Sidecar metadata for an IQ dump.
#[derive(Debug, Clone, PartialEq)]
pub struct IqHeader {
    pub sample_rate: f64,
    pub fft_len: usize,
    pub cp_len: usize,
    pub num_symbols: usize,
    pub seed: u64,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".hdr");
    PathBuf::from(name)
}

/// Writes interleaved little-endian `f64` re/im samples to `path` and a
/// `key=value` header to `path` + `.hdr`. Returns the header path.
pub fn write_iq(frame: &TimeFrame, header: &IqHeader, path: &Path) -> Result<PathBuf> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for z in frame.samples() {
        w.write_all(&z.re.to_le_bytes())
            .and_then(|_| w.write_all(&z.im.to_le_bytes()))
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;

    let hdr = sidecar_path(path);
    let text = format!(
        "format=complex_f64_le_interleaved\nsample_rate={}\nfft_len={}\ncp_len={}\nnum_symbols={}\nnum_samples={}\nseed={}\n",
        header.sample_rate,
        header.fft_len,
        header.cp_len,
        header.num_symbols,
        frame.samples().len(),
        header.seed
    );
    std::fs::write(&hdr, text).map_err(|e| Error::io(&hdr, e))?;
    Ok(hdr)
}

pub fn read_iq(path: &Path) -> Result<Vec<Complex64>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() % 16 != 0 {
        return Err(Error::invalid(format!(
            "{}: {} bytes is not a whole number of complex samples",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spread::{generate_sequences, SequenceFamily};

    fn zero() -> Complex64 {
        Complex64::new(0.0, 0.0)
    }

    fn ramp(n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()))
            .collect()
    }

    #[test]
    fn default_timing() {
        let cfg = OfdmConfig::default();
        assert!((cfg.subcarrier_spacing() - 12_695.312_5).abs() < 1e-9);
        assert!((cfg.symbol_duration() * 1e6 - 78.769).abs() < 1e-3);
        assert!((cfg.cp_duration() * 1e6 - 5.538).abs() < 1e-3);
        assert_eq!(cfg.frame_samples(150), 328_800);
        assert!((cfg.frame_duration(150) * 1e3 - 12.646).abs() < 1e-3);
        assert!((cfg.occupied_bandwidth() / 1e3 - 253.9).abs() < 0.1);
    }

    #[test]
    fn frame_budget_profiles() {
        let psk = PskConfig::default();
        let code = CodeConfig::default();
        let layout = FrameLayout::new(
            150,
            &code,
            &psk,
            10,
            ReferenceMode::Continuous,
            FrameProfile::SelfConsistent,
        )
        .unwrap();
        assert_eq!(
            (layout.coded_len, layout.data_symbols, layout.num_symbols),
            (304, 152, 153)
        );
        let exact = FrameLayout::new(
            150,
            &code,
            &psk,
            10,
            ReferenceMode::Continuous,
            FrameProfile::Nominal,
        )
        .unwrap();
        assert_eq!(exact.num_symbols, 150);
        assert!(exact.node_symbols(&[]).is_err());
        let per_hop = FrameLayout::new(
            150,
            &code,
            &psk,
            10,
            ReferenceMode::PerHop,
            FrameProfile::SelfConsistent,
        )
        .unwrap();
        // 152 data symbols in segments of 9 plus one reference each.
        assert_eq!(per_hop.num_symbols, 152 + 17);
    }

    #[test]
    fn per_hop_references_restart_each_segment() {
        let psk = PskConfig::default();
        let layout = FrameLayout::new(
            30,
            &CodeConfig::default(),
            &psk,
            4,
            ReferenceMode::PerHop,
            FrameProfile::SelfConsistent,
        )
        .unwrap();
        let a: Vec<Complex64> = (0..layout.data_symbols)
            .map(|i| psk.points()[(i * 3 + 1) % 4])
            .collect();
        let b = layout.node_symbols(&a).unwrap();
        assert_eq!(b.len(), layout.num_symbols);
        for seg in b.chunks(4) {
            assert_eq!(seg[0], Complex64::new(1.0, 0.0));
        }
        assert_eq!(layout.differential_decisions(&b).unwrap(), a);
    }

    #[test]
    fn mapping_places_block() {
        let x = ramp(8);
        assert_eq!(subcarrier_map(&x, 0..8, 8).unwrap(), x);
        let mapped = subcarrier_map(&x[..3], 4..7, 8).unwrap();
        assert_eq!(&mapped[4..7], &x[..3]);
        assert!(mapped[..4].iter().chain(&mapped[7..]).all(|z| *z == zero()));
        assert_eq!(subcarrier_demap(&mapped, 4..7).unwrap(), x[..3].to_vec());
        assert!(subcarrier_map(&x[..3], 6..9, 8).is_err());
        assert!(subcarrier_demap(&mapped, 6..9).is_err());
    }

    #[test]
    fn ofdm_basics() {
        let cfg = OfdmConfig::default();
        let ofdm = Ofdm::new(&cfg).unwrap();
        let silent = ofdm.modulate(&vec![zero(); 2048]).unwrap();
        assert_eq!(silent.len(), 2192);
        assert!(silent.iter().all(|z| *z == zero()));

        let mut tone = vec![zero(); 2048];
        tone[0] = Complex64::new(1.0, 0.0);
        let t = ofdm.modulate(&tone).unwrap();
        let expected = 1.0 / 2048f64.sqrt();
        assert!(t.iter().all(|z| (z - expected).norm() < 1e-15));
        assert_eq!(&t[..144], &t[2048..]);

        let x = ramp(2048);
        let back = ofdm.demodulate(&ofdm.modulate(&x).unwrap()).unwrap();
        let err = x
            .iter()
            .zip(&back)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-10);
        assert!(ofdm.demodulate(&x).is_err());
    }

    #[test]
    fn hopping_schedule() {
        let cfg = OfdmConfig::default();
        let s = hop_schedule(150, &cfg, 64).unwrap();
        assert_eq!(s.num_hops(), 15);
        assert_eq!(s, hop_schedule(150, &cfg, 64).unwrap());
        assert!(s.blocks().iter().all(|&b| b < 64));
        let flat = hop_schedule(153, &cfg, 1).unwrap();
        assert_eq!(flat.num_hops(), 16);
        assert!(flat.blocks().iter().all(|&b| b == 0));
        assert!(hop_schedule(150, &cfg, 200).is_err());
        assert_eq!(s.bins(0).len(), 20);
    }

    #[test]
    fn assembled_frame_is_linear_in_nodes() {
        let cfg = OfdmConfig {
            fft_len: 64,
            cp_len: 8,
            num_subcarriers: 8,
            usable_blocks: 4,
            hop_interval: 3,
            ..OfdmConfig::default()
        };
        let set = generate_sequences(5, 8, 3, SequenceFamily::RandomQpskChips).unwrap();
        let sched = hop_schedule(7, &cfg, 4).unwrap();
        let streams: Vec<Vec<Complex64>> = (0..5).map(|k| ramp(7 + k)[k..].to_vec()).collect();
        let both = assemble_frame(
            &streams,
            &set,
            &[false, true, false, true, false],
            7,
            &sched,
            &cfg,
        )
        .unwrap();
        let one = assemble_frame(
            &streams,
            &set,
            &[false, true, false, false, false],
            7,
            &sched,
            &cfg,
        )
        .unwrap();
        let other = assemble_frame(
            &streams,
            &set,
            &[false, false, false, true, false],
            7,
            &sched,
            &cfg,
        )
        .unwrap();
        assert_eq!(both.num_symbols(), 7);
        for ((a, b), c) in both
            .samples()
            .iter()
            .zip(one.samples())
            .zip(other.samples())
        {
            assert!((a - b - c).norm() < 1e-12);
        }
        let none = assemble_frame(&streams, &set, &[false; 5], 7, &sched, &cfg).unwrap();
        assert!(none.samples().iter().all(|z| *z == zero()));

        let mut bad = streams.clone();
        bad[3].pop();
        assert!(assemble_frame(
            &bad,
            &set,
            &[false, true, false, true, false],
            7,
            &sched,
            &cfg
        )
        .is_err());
    }

    #[test]
    fn iq_dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frame.iq");
        let cfg = OfdmConfig {
            fft_len: 16,
            cp_len: 4,
            num_subcarriers: 4,
            usable_blocks: 2,
            ..OfdmConfig::default()
        };
        let frame = TimeFrame::from_samples(ramp(40), &cfg).unwrap();
        let header = IqHeader {
            sample_rate: cfg.sample_rate,
            fft_len: 16,
            cp_len: 4,
            num_symbols: 2,
            seed: 5,
        };
        let hdr = write_iq(&frame, &header, &path).unwrap();
        assert_eq!(read_iq(&path).unwrap(), frame.samples());
        let text = std::fs::read_to_string(hdr).unwrap();
        assert!(text.contains("num_symbols=2"));
        assert!(text.contains("seed=5"));
    }
}
