//! Monte Carlo experiment engine: configuration, deterministic per-trial
//! seeding, sweeps and CSV output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{
    apply_channel, complex_normal, draw_channel_with, ActivityMode, ChannelPreset,
    ChannelRealization, SnrSpec, TappedDelayLine, UplinkTx,
};
use crate::csmud::GompConfig;
use crate::dpsk::PskConfig;
use crate::error::{Error, Result};
use crate::fec::{CodeConfig, Termination};
use crate::link::{Link, LinkConfig};
use crate::rxchain::{process_frame, FrameScore, ReceivedFrame};
use crate::spread::SpreadingSet;
use crate::waveform::{assemble_frame, write_iq, FrameProfile, IqHeader, ReferenceMode, TimeFrame};

#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    /// Fixed number of active nodes per frame.
    ActiveCount(Vec<usize>),
    /// Received SNR in dB; activity follows the configured model.
    SnrDb(Vec<f64>),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::ActiveCount(_) => "active_count",
            SweepAxis::SnrDb(_) => "snr_db",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepAxis::ActiveCount(v) => v.len(),
            SweepAxis::SnrDb(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn value(&self, i: usize) -> f64 {
        match self {
            SweepAxis::ActiveCount(v) => v[i] as f64,
            SweepAxis::SnrDb(v) => v[i],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub link: LinkConfig,
    pub channel: ChannelPreset,
    /// SNR for active-count sweeps; `None` is noiseless.
    pub snr_db: Option<f64>,
    pub cfo_hz: f64,
    /// Activity model for SNR sweeps.
    pub activity: ActivityMode,
    pub sweep: SweepAxis,
    pub frames_per_point: usize,
    pub master_seed: u64,
    /// Give GOMP the true noise variance for its noise-floor stop.
    pub noise_aware: bool,
    pub spreading_file: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Include wall-clock time per point in the CSV (breaks byte-identical
    /// reruns).
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            link: LinkConfig::default(),
            channel: ChannelPreset::LosFlat,
            snr_db: Some(30.0),
            cfo_hz: 0.0,
            activity: ActivityMode::Bernoulli(0.1),
            sweep: SweepAxis::ActiveCount(vec![2, 4, 6, 8, 10, 12, 14, 16, 18, 20]),
            frames_per_point: 100,
            master_seed: 1,
            noise_aware: true,
            spreading_file: None,
            output: None,
            record_timing: false,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected a boolean, got '{value}'"
        ))),
    }
}

fn fmt_list<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment. Unset keys keep
    /// their defaults, so an empty file gives the reference parametrization.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut sweep_axis: Option<String> = None;
        let mut sweep_values: Option<String> = None;
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            pairs.push((key.trim(), value.trim()));
        }
        // Tap settings refine the preset, so the preset goes first.
        pairs.sort_by_key(|(k, _)| *k != "channel.preset");
        for (key, value) in pairs {
            match key {
                "sweep.axis" => sweep_axis = Some(value.to_string()),
                "sweep.values" => sweep_values = Some(value.to_string()),
                _ => cfg.set(key, value)?,
            }
        }
        if sweep_axis.is_some() || sweep_values.is_some() {
            let axis = sweep_axis.unwrap_or_else(|| cfg.sweep.name().to_string());
            let values = sweep_values
                .ok_or_else(|| Error::Config("sweep.axis given without sweep.values".into()))?;
            cfg.set_sweep(&axis, &values)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::from_text(&text)
    }

    pub fn set_sweep(&mut self, axis: &str, values: &str) -> Result<()> {
        self.sweep = match axis {
            "active_count" => SweepAxis::ActiveCount(parse_list("sweep.values", values)?),
            "snr_db" => SweepAxis::SnrDb(parse_list("sweep.values", values)?),
            other => return Err(Error::Config(format!("unknown sweep axis '{other}'"))),
        };
        Ok(())
    }

    /// Applies one setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let link = &mut self.link;
        match key {
            "sweep.axis" => {
                let values = match &self.sweep {
                    SweepAxis::ActiveCount(v) => fmt_list(v),
                    SweepAxis::SnrDb(v) => fmt_list(v),
                };
                self.set_sweep(value, &values)?;
            }
            "sweep.values" => {
                let axis = self.sweep.name();
                self.set_sweep(axis, value)?;
            }
            "experiment.frames_per_point" => self.frames_per_point = parse_num(key, value)?,
            "experiment.master_seed" => self.master_seed = parse_num(key, value)?,
            "experiment.output" => self.output = Some(PathBuf::from(value)),
            "experiment.record_timing" => self.record_timing = parse_bool(key, value)?,
            "link.num_nodes" => link.num_nodes = parse_num(key, value)?,
            "link.info_bits" => link.info_bits = parse_num(key, value)?,
            "link.reference" => {
                link.reference = match value {
                    "continuous" => ReferenceMode::Continuous,
                    "per_hop" => ReferenceMode::PerHop,
                    _ => return Err(Error::Config(format!("{key}: unknown mode '{value}'"))),
                }
            }
            "link.profile" => {
                link.profile = match value {
                    "self_consistent" => FrameProfile::SelfConsistent,
                    "nominal" => FrameProfile::Nominal,
                    _ => return Err(Error::Config(format!("{key}: unknown profile '{value}'"))),
                }
            }
            "fec.generators" => {
                let g: Vec<&str> = value.split(',').map(str::trim).collect();
                let parse_octal = |s: &str| {
                    u32::from_str_radix(s, 8)
                        .map_err(|_| Error::Config(format!("{key}: '{s}' is not octal")))
                };
                if g.len() != 2 {
                    return Err(Error::Config(format!("{key}: expected two generators")));
                }
                link.code = CodeConfig::new(
                    [parse_octal(g[0])?, parse_octal(g[1])?],
                    link.code.constraint_length(),
                    link.code.termination(),
                )?;
            }
            "fec.constraint_length" => {
                link.code = CodeConfig::new(
                    link.code.generators(),
                    parse_num(key, value)?,
                    link.code.termination(),
                )?
            }
            "fec.termination" => {
                let t = match value {
                    "terminated" => Termination::Terminated,
                    "truncated" => Termination::Truncated,
                    _ => return Err(Error::Config(format!("{key}: unknown '{value}'"))),
                };
                link.code = link.code.with_termination(t);
            }
            "psk.order" => link.psk = PskConfig::new(parse_num(key, value)?)?,
            "ofdm.fft_len" => link.ofdm.fft_len = parse_num(key, value)?,
            "ofdm.cp_len" => link.ofdm.cp_len = parse_num(key, value)?,
            "ofdm.num_subcarriers" => link.ofdm.num_subcarriers = parse_num(key, value)?,
            "ofdm.sample_rate" => link.ofdm.sample_rate = parse_num(key, value)?,
            "ofdm.hop_interval" => link.ofdm.hop_interval = parse_num(key, value)?,
            "ofdm.hop_seed" => link.ofdm.hop_seed = parse_num(key, value)?,
            "ofdm.usable_blocks" => link.ofdm.usable_blocks = parse_num(key, value)?,
            "ofdm.first_bin" => link.ofdm.first_bin = parse_num(key, value)?,
            "spreading.family" => link.spreading_family = value.parse()?,
            "spreading.seed" => link.spreading_seed = parse_num(key, value)?,
            "spreading.file" => self.spreading_file = Some(PathBuf::from(value)),
            "channel.preset" => {
                let tdl = match self.channel {
                    ChannelPreset::NlosSelective(t) => t,
                    _ => TappedDelayLine::default(),
                };
                self.channel = match value.parse()? {
                    ChannelPreset::NlosSelective(_) => ChannelPreset::NlosSelective(tdl),
                    other => other,
                };
            }
            "channel.taps" | "channel.delay_spread_samples" => {
                let mut tdl = match self.channel {
                    ChannelPreset::NlosSelective(t) => t,
                    _ => TappedDelayLine::default(),
                };
                if key == "channel.taps" {
                    tdl.taps = parse_num(key, value)?;
                } else {
                    tdl.delay_spread_samples = parse_num(key, value)?;
                }
                if let ChannelPreset::NlosSelective(_) = self.channel {
                    self.channel = ChannelPreset::NlosSelective(tdl);
                } else {
                    return Err(Error::Config(format!(
                        "{key} only applies to the nlos_selective preset; set channel.preset first"
                    )));
                }
            }
            "channel.snr_db" => {
                self.snr_db = match value {
                    "inf" | "none" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "channel.cfo_hz" => self.cfo_hz = parse_num(key, value)?,
            "activity.mode" => {
                self.activity = match value {
                    "fixed_count" => ActivityMode::FixedCount(match self.activity {
                        ActivityMode::FixedCount(n) => n,
                        ActivityMode::Bernoulli(_) => 6,
                    }),
                    "bernoulli" => ActivityMode::Bernoulli(match self.activity {
                        ActivityMode::Bernoulli(p) => p,
                        ActivityMode::FixedCount(_) => 0.1,
                    }),
                    _ => return Err(Error::Config(format!("{key}: unknown mode '{value}'"))),
                }
            }
            "activity.n_active" => self.activity = ActivityMode::FixedCount(parse_num(key, value)?),
            "activity.p_a" => self.activity = ActivityMode::Bernoulli(parse_num(key, value)?),
            "gomp.max_active" => link.gomp.max_active = parse_num(key, value)?,
            "gomp.residual_threshold" => link.gomp.residual_threshold = parse_num(key, value)?,
            "gomp.noise_margin" => link.gomp.noise_margin = parse_num(key, value)?,
            "gomp.noise_aware" => self.noise_aware = parse_bool(key, value)?,
            _ => return Err(Error::Config(format!("unknown configuration key '{key}'"))),
        }
        Ok(())
    }

    /// Applies a `key=value` override as given on the command line.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{spec}' is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    /// Effective settings in the same `key = value` form the parser reads.
    pub fn to_text(&self) -> String {
        let l = &self.link;
        let mut m: BTreeMap<&str, String> = BTreeMap::new();
        m.insert(
            "experiment.frames_per_point",
            self.frames_per_point.to_string(),
        );
        m.insert("experiment.master_seed", self.master_seed.to_string());
        m.insert("experiment.record_timing", self.record_timing.to_string());
        m.insert("sweep.axis", self.sweep.name().into());
        m.insert(
            "sweep.values",
            match &self.sweep {
                SweepAxis::ActiveCount(v) => fmt_list(v),
                SweepAxis::SnrDb(v) => fmt_list(v),
            },
        );
        m.insert("link.num_nodes", l.num_nodes.to_string());
        m.insert("link.info_bits", l.info_bits.to_string());
        m.insert(
            "link.reference",
            match l.reference {
                ReferenceMode::Continuous => "continuous",
                ReferenceMode::PerHop => "per_hop",
            }
            .into(),
        );
        m.insert(
            "link.profile",
            match l.profile {
                FrameProfile::SelfConsistent => "self_consistent",
                FrameProfile::Nominal => "nominal",
            }
            .into(),
        );
        let [g1, g2] = l.code.generators();
        m.insert("fec.generators", format!("{g1:o},{g2:o}"));
        m.insert(
            "fec.constraint_length",
            l.code.constraint_length().to_string(),
        );
        m.insert(
            "fec.termination",
            match l.code.termination() {
                Termination::Terminated => "terminated",
                Termination::Truncated => "truncated",
            }
            .into(),
        );
        m.insert("psk.order", l.psk.order().to_string());
        m.insert("ofdm.fft_len", l.ofdm.fft_len.to_string());
        m.insert("ofdm.cp_len", l.ofdm.cp_len.to_string());
        m.insert("ofdm.num_subcarriers", l.ofdm.num_subcarriers.to_string());
        m.insert("ofdm.sample_rate", l.ofdm.sample_rate.to_string());
        m.insert("ofdm.hop_interval", l.ofdm.hop_interval.to_string());
        m.insert("ofdm.hop_seed", l.ofdm.hop_seed.to_string());
        m.insert("ofdm.usable_blocks", l.ofdm.usable_blocks.to_string());
        m.insert("ofdm.first_bin", l.ofdm.first_bin.to_string());
        m.insert("spreading.family", l.spreading_family.name().into());
        m.insert("spreading.seed", l.spreading_seed.to_string());
        if let Some(p) = &self.spreading_file {
            m.insert("spreading.file", p.display().to_string());
        }
        m.insert("channel.preset", self.channel.name().into());
        if let ChannelPreset::NlosSelective(t) = self.channel {
            m.insert("channel.taps", t.taps.to_string());
            m.insert(
                "channel.delay_spread_samples",
                t.delay_spread_samples.to_string(),
            );
        }
        m.insert(
            "channel.snr_db",
            self.snr_db.map_or("inf".into(), |s| s.to_string()),
        );
        m.insert("channel.cfo_hz", self.cfo_hz.to_string());
        match self.activity {
            ActivityMode::FixedCount(n) => {
                m.insert("activity.mode", "fixed_count".into());
                m.insert("activity.n_active", n.to_string());
            }
            ActivityMode::Bernoulli(p) => {
                m.insert("activity.mode", "bernoulli".into());
                m.insert("activity.p_a", p.to_string());
            }
        }
        m.insert("gomp.max_active", l.gomp.max_active.to_string());
        m.insert(
            "gomp.residual_threshold",
            l.gomp.residual_threshold.to_string(),
        );
        m.insert("gomp.noise_margin", l.gomp.noise_margin.to_string());
        m.insert("gomp.noise_aware", self.noise_aware.to_string());
        m.iter().fold(String::new(), |mut s, (k, v)| {
            let _ = writeln!(s, "{k} = {v}");
            s
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames_per_point == 0 {
            return Err(Error::Config("frames_per_point must be at least 1".into()));
        }
        if self.sweep.is_empty() {
            return Err(Error::Config("sweep has no points".into()));
        }
        if let Some(s) = self.snr_db {
            SnrSpec::new(s)?;
        }
        match &self.sweep {
            SweepAxis::ActiveCount(v) => {
                for &n in v {
                    ActivityMode::FixedCount(n).validate(self.link.num_nodes)?;
                }
            }
            SweepAxis::SnrDb(v) => {
                for &s in v {
                    SnrSpec::new(s)?;
                }
                self.activity.validate(self.link.num_nodes)?;
            }
        }
        self.link.gomp.validate()
    }
}

/// `splitmix64` finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for one random stream of one trial; a pure function of its
/// inputs, so results do not depend on scheduling.
pub fn trial_seed(master: u64, point: usize, trial: usize, stream: Stream) -> u64 {
    let mut h = mix(master);
    h = mix(h ^ point as u64);
    h = mix(h ^ trial as u64);
    mix(h ^ stream as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Activity = 1,
    Payload = 2,
    Channel = 3,
    Noise = 4,
}

/// Operating point of one sweep entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSpec {
    pub activity: ActivityMode,
    pub snr: Option<SnrSpec>,
}

/// One realized frame: truth plus channel.
#[derive(Debug, Clone)]
pub struct Trial {
    pub activity: Vec<bool>,
    /// Empty for inactive nodes.
    pub payloads: Vec<Vec<u8>>,
    pub node_symbols: Vec<Vec<Complex64>>,
    pub channel: ChannelRealization,
}

/// A configured experiment with its link state built once.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: ExperimentConfig,
    pub link: Link,
}

impl Simulation {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let mut link = Link::new(config.link.clone())?;
        if let Some(path) = &config.spreading_file {
            link = link.with_spreading(SpreadingSet::load(path)?)?;
        }
        Ok(Simulation { config, link })
    }

    pub fn point(&self, index: usize) -> PointSpec {
        let snr = |db: f64| SnrSpec::new(db).expect("validated");
        match &self.config.sweep {
            SweepAxis::ActiveCount(v) => PointSpec {
                activity: ActivityMode::FixedCount(v[index]),
                snr: self.config.snr_db.map(snr),
            },
            SweepAxis::SnrDb(v) => PointSpec {
                activity: self.config.activity,
                snr: Some(snr(v[index])),
            },
        }
    }

    pub fn draw_trial(&self, spec: &PointSpec, point: usize, trial: usize) -> Result<Trial> {
        let seed = |s| trial_seed(self.config.master_seed, point, trial, s);
        let link = &self.link;
        let k = link.config.num_nodes;

        let mut rng = ChaCha8Rng::seed_from_u64(seed(Stream::Activity));
        let activity = spec.activity.draw(k, &mut rng)?;

        let mut rng = ChaCha8Rng::seed_from_u64(seed(Stream::Payload));
        let mut payloads = vec![Vec::new(); k];
        let mut node_symbols = vec![Vec::new(); k];
        for n in (0..k).filter(|&n| activity[n]) {
            payloads[n] = link.random_payload(&mut rng);
            node_symbols[n] = link.modulate_node(&payloads[n])?;
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed(Stream::Channel));
        let channel = draw_channel_with(
            &self.config.channel,
            k,
            &link.schedule.center_bins(),
            link.config.ofdm.fft_len,
            &mut rng,
        )
        .with_snr(spec.snr, link.config.ofdm.num_subcarriers)
        .with_cfo(self.config.cfo_hz);

        Ok(Trial {
            activity,
            payloads,
            node_symbols,
            channel,
        })
    }

    /// Received `Y` for a trial via the frequency-domain channel.
    pub fn receive_blocks(
        &self,
        trial: &Trial,
        point: usize,
        index: usize,
    ) -> Result<Array2<Complex64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(
            self.config.master_seed,
            point,
            index,
            Stream::Noise,
        ));
        apply_channel(
            &UplinkTx {
                spreading: &self.link.spreading,
                node_symbols: &trial.node_symbols,
                activity: &trial.activity,
                num_symbols: self.link.layout.num_symbols,
                hop_interval: self.link.config.ofdm.hop_interval,
            },
            &trial.channel,
            &self.link.config.ofdm,
            &mut rng,
        )
    }

    /// Time-domain rendering of a trial: per-hop gains applied to each
    /// node's symbols, OFDM frame assembled, white noise added per sample.
    /// CFO is not rendered.
    pub fn receive_time_frame(
        &self,
        trial: &Trial,
        point: usize,
        index: usize,
    ) -> Result<TimeFrame> {
        let hop = self.link.config.ofdm.hop_interval;
        let faded: Vec<Vec<Complex64>> = trial
            .node_symbols
            .iter()
            .enumerate()
            .map(|(k, b)| {
                b.iter()
                    .enumerate()
                    .map(|(i, &s)| s * trial.channel.gain(k, i / hop))
                    .collect()
            })
            .collect();
        let frame = assemble_frame(
            &faded,
            &self.link.spreading,
            &trial.activity,
            self.link.layout.num_symbols,
            &self.link.schedule,
            &self.link.config.ofdm,
        )?;
        if trial.channel.noise_variance == 0.0 {
            return Ok(frame);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(
            self.config.master_seed,
            point,
            index,
            Stream::Noise,
        ));
        let noisy = frame
            .samples()
            .iter()
            .map(|&z| z + complex_normal(&mut rng, trial.channel.noise_variance))
            .collect();
        TimeFrame::from_samples(noisy, &self.link.config.ofdm)
    }

    pub fn gomp_config(&self, trial: &Trial) -> GompConfig {
        let mut g = self.link.config.gomp;
        if self.config.noise_aware && trial.channel.noise_variance > 0.0 {
            g.noise_variance = Some(trial.channel.noise_variance);
        }
        g
    }

    pub fn run_trial(&self, point: usize, index: usize) -> Result<TrialOutcome> {
        let spec = self.point(point);
        let trial = self.draw_trial(&spec, point, index)?;
        let y = self.receive_blocks(&trial, point, index)?;
        let (reception, score) = process_frame(
            ReceivedFrame::Freq(&y),
            &self.link,
            &self.gomp_config(&trial),
            &trial.payloads,
            &trial.activity,
        )?;
        Ok(TrialOutcome {
            score,
            iterations: reception.detection.iterations,
        })
    }

    pub fn run_point(&self, point: usize) -> Result<ResultRow> {
        let start = Instant::now();
        let tally = (0..self.config.frames_per_point)
            .into_par_iter()
            .map(|t| self.run_trial(point, t).map(|o| Tally::from_outcome(&o)))
            .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))?;
        let elapsed = start.elapsed().as_secs_f64();
        Ok(tally.into_row(
            self.config.sweep.value(point),
            self.config.record_timing.then_some(elapsed),
        ))
    }

    pub fn run(&self) -> Result<Vec<ResultRow>> {
        (0..self.config.sweep.len())
            .map(|p| self.run_point(p))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub score: FrameScore,
    pub iterations: usize,
}

/// Order-independent per-point counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Tally {
    frames: usize,
    active: usize,
    inactive: usize,
    frame_errors: usize,
    missed: usize,
    false_alarms: usize,
    iterations: usize,
}

impl Tally {
    fn from_outcome(o: &TrialOutcome) -> Self {
        Tally {
            frames: 1,
            active: o.score.active_nodes,
            inactive: o.score.inactive_nodes,
            frame_errors: o.score.frame_errors,
            missed: o.score.missed_detections,
            false_alarms: o.score.false_alarms,
            iterations: o.iterations,
        }
    }

    fn merge(self, o: Tally) -> Tally {
        Tally {
            frames: self.frames + o.frames,
            active: self.active + o.active,
            inactive: self.inactive + o.inactive,
            frame_errors: self.frame_errors + o.frame_errors,
            missed: self.missed + o.missed,
            false_alarms: self.false_alarms + o.false_alarms,
            iterations: self.iterations + o.iterations,
        }
    }

    fn into_row(self, sweep_value: f64, wall_time_s: Option<f64>) -> ResultRow {
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        let fer = ratio(self.frame_errors, self.active);
        ResultRow {
            sweep_value,
            frames: self.frames,
            active_node_frames: self.active,
            frame_errors: self.frame_errors,
            fer,
            fer_ci95: fer.map(|p| 1.96 * (p * (1.0 - p) / self.active as f64).sqrt()),
            missed_detection_rate: ratio(self.missed, self.active),
            false_alarm_rate: ratio(self.false_alarms, self.inactive),
            mean_iterations: self.iterations as f64 / self.frames as f64,
            low_confidence: self.frame_errors < LOW_CONFIDENCE_EVENTS,
            wall_time_s,
        }
    }
}

/// Rows with fewer error events than this are flagged.
pub const LOW_CONFIDENCE_EVENTS: usize = 10;

/// Aggregate of one sweep point. Rates are `None` when their denominator is
/// zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub sweep_value: f64,
    pub frames: usize,
    pub active_node_frames: usize,
    pub frame_errors: usize,
    pub fer: Option<f64>,
    /// Normal-approximation binomial 95% half-width.
    pub fer_ci95: Option<f64>,
    pub missed_detection_rate: Option<f64>,
    pub false_alarm_rate: Option<f64>,
    pub mean_iterations: f64,
    pub low_confidence: bool,
    pub wall_time_s: Option<f64>,
}

const CSV_HEADER: &str = "sweep_value,frames,active_node_frames,frame_errors,fer,fer_ci95,\
missed_detection_rate,false_alarm_rate,mean_iterations,low_confidence,wall_time_s";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Header plus one line per row. Floats use Rust's shortest round-trip
/// decimal form; missing values are `NA`.
pub fn csv_body(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.sweep_value,
            r.frames,
            r.active_node_frames,
            r.frame_errors,
            opt(r.fer),
            opt(r.fer_ci95),
            opt(r.missed_detection_rate),
            opt(r.false_alarm_rate),
            r.mean_iterations,
            r.low_confidence,
            opt(r.wall_time_s),
        );
    }
    out
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::invalid("no rows to write"));
    }
    fs::write(path, csv_body(rows)).map_err(|e| Error::io(path, e))
}

/// Parses CSV text produced by [`csv_body`]; `#` lines are skipped.
pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        _ => return Err(Error::invalid("missing or unexpected CSV header")),
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 11 {
                return Err(Error::invalid(format!("expected 11 fields in '{line}'")));
            }
            let num = |s: &str| -> Result<f64> {
                s.parse()
                    .map_err(|_| Error::invalid(format!("bad number '{s}'")))
            };
            let int = |s: &str| -> Result<usize> {
                s.parse()
                    .map_err(|_| Error::invalid(format!("bad count '{s}'")))
            };
            let maybe = |s: &str| -> Result<Option<f64>> {
                if s == "NA" {
                    Ok(None)
                } else {
                    num(s).map(Some)
                }
            };
            Ok(ResultRow {
                sweep_value: num(f[0])?,
                frames: int(f[1])?,
                active_node_frames: int(f[2])?,
                frame_errors: int(f[3])?,
                fer: maybe(f[4])?,
                fer_ci95: maybe(f[5])?,
                missed_detection_rate: maybe(f[6])?,
                false_alarm_rate: maybe(f[7])?,
                mean_iterations: num(f[8])?,
                low_confidence: parse_bool("low_confidence", f[9])
                    .map_err(|_| Error::invalid(format!("bad flag '{}'", f[9])))?,
                wall_time_s: maybe(f[10])?,
            })
        })
        .collect()
}

/// Comment preamble recording the configuration and axis convention.
pub fn csv_preamble(cfg: &ExperimentConfig) -> String {
    let mut out = String::from("# mcsm sweep results\n");
    if let SweepAxis::SnrDb(_) = cfg.sweep {
        out.push_str(
            "# axis snr_db stands in for transmit power: under a fixed path loss the two differ by a constant offset\n",
        );
    }
    for line in cfg.to_text().lines() {
        let _ = writeln!(out, "# {line}");
    }
    out
}

pub fn write_results(rows: &[ResultRow], cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    let text = csv_preamble(cfg) + &csv_body(rows);
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs every sweep point. When an output path is configured it is created
/// before any simulation, and the results are written there.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    if let Some(path) = &cfg.output {
        File::create(path).map_err(|e| Error::io(path, e))?;
    }
    let sim = Simulation::new(cfg.clone())?;
    let rows = sim.run()?;
    if let Some(path) = &cfg.output {
        write_results(&rows, cfg, path)?;
    }
    Ok(rows)
}

/// True when FER never drops by more than the two points' combined
/// confidence half-widths, and at most one step drops at all.
pub fn nondecreasing_within_ci(rows: &[ResultRow]) -> bool {
    let mut drops = 0;
    for w in rows.windows(2) {
        let (Some(a), Some(b)) = (w[0].fer, w[1].fer) else {
            continue;
        };
        if b < a {
            drops += 1;
            let slack = w[0].fer_ci95.unwrap_or(0.0) + w[1].fer_ci95.unwrap_or(0.0);
            if a - b > slack {
                return false;
            }
        }
    }
    drops <= 1
}

/// Mirror of [`nondecreasing_within_ci`] for curves that should fall.
pub fn nonincreasing_within_ci(rows: &[ResultRow]) -> bool {
    let flipped: Vec<ResultRow> = rows
        .iter()
        .map(|r| ResultRow {
            fer: r.fer.map(|p| -p),
            ..r.clone()
        })
        .collect();
    nondecreasing_within_ci(&flipped)
}

/// Outcome of the ideal-channel identity suite.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopbackReport {
    pub frames: usize,
    pub active_node_frames: usize,
    pub frame_errors: usize,
    pub missed: usize,
    pub false_alarms: usize,
    pub time_domain_frames: usize,
}

impl LoopbackReport {
    pub fn passed(&self) -> bool {
        self.frame_errors == 0 && self.missed == 0 && self.false_alarms == 0
    }
}

/// Ideal unit channel without noise, `0..=max_active` active nodes per
/// frame. The first `time_domain` frames additionally run through the full
/// OFDM modulator and demodulator.
pub fn loopback(
    base: &ExperimentConfig,
    frames: usize,
    max_active: usize,
    time_domain: usize,
) -> Result<LoopbackReport> {
    let mut cfg = base.clone();
    cfg.channel = ChannelPreset::Ideal;
    cfg.snr_db = None;
    cfg.cfo_hz = 0.0;
    cfg.sweep = SweepAxis::ActiveCount((0..=max_active).collect());
    let sim = Simulation::new(cfg)?;
    let points = max_active + 1;
    let outcomes: Vec<(FrameScore, bool)> = (0..frames)
        .into_par_iter()
        .map(|f| {
            let point = f % points;
            let index = f / points;
            let trial = sim.draw_trial(&sim.point(point), point, index)?;
            let gomp = sim.gomp_config(&trial);
            let timed = f < time_domain;
            let (_, score) = if timed {
                let frame = sim.receive_time_frame(&trial, point, index)?;
                process_frame(
                    ReceivedFrame::Time(&frame),
                    &sim.link,
                    &gomp,
                    &trial.payloads,
                    &trial.activity,
                )?
            } else {
                let y = sim.receive_blocks(&trial, point, index)?;
                process_frame(
                    ReceivedFrame::Freq(&y),
                    &sim.link,
                    &gomp,
                    &trial.payloads,
                    &trial.activity,
                )?
            };
            Ok((score, timed))
        })
        .collect::<Result<_>>()?;
    Ok(LoopbackReport {
        frames,
        active_node_frames: outcomes.iter().map(|(s, _)| s.active_nodes).sum(),
        frame_errors: outcomes.iter().map(|(s, _)| s.frame_errors).sum(),
        missed: outcomes.iter().map(|(s, _)| s.missed_detections).sum(),
        false_alarms: outcomes.iter().map(|(s, _)| s.false_alarms).sum(),
        time_domain_frames: outcomes.iter().filter(|(_, t)| *t).count(),
    })
}

/// Renders one received frame (first sweep point, trial 0, master seed
/// `seed`) in the time domain and writes it as an IQ dump.
pub fn dump_frame(base: &ExperimentConfig, seed: u64, path: &Path) -> Result<PathBuf> {
    File::create(path).map_err(|e| Error::io(path, e))?;
    let cfg = ExperimentConfig {
        master_seed: seed,
        ..base.clone()
    };
    let sim = Simulation::new(cfg)?;
    let trial = sim.draw_trial(&sim.point(0), 0, 0)?;
    let frame = sim.receive_time_frame(&trial, 0, 0)?;
    let ofdm = &sim.link.config.ofdm;
    write_iq(
        &frame,
        &IqHeader {
            sample_rate: ofdm.sample_rate,
            fft_len: ofdm.fft_len,
            cp_len: ofdm.cp_len,
            num_symbols: frame.num_symbols(),
            seed,
        },
        path,
    )
}
