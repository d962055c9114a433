//! Shared link parameters and the per-node transmit chain
//! (encode, map, differential modulation).

use num_complex::Complex64;
use rand::Rng;

use crate::csmud::GompConfig;
use crate::dpsk::{self, PskConfig};
use crate::error::{Error, Result};
use crate::fec::{self, CodeConfig};
use crate::spread::{generate_sequences, SequenceFamily, SpreadingSet};
use crate::waveform::{
    hop_schedule, FrameLayout, FrameProfile, OfdmConfig, ReferenceMode, SubcarrierAllocation,
};

/// Everything transmitter and receiver must agree on.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    /// `K`, nodes per MCSM block.
    pub num_nodes: usize,
    /// `N_U`, information bits per node frame.
    pub info_bits: usize,
    pub code: CodeConfig,
    pub psk: PskConfig,
    pub ofdm: OfdmConfig,
    pub reference: ReferenceMode,
    pub profile: FrameProfile,
    pub spreading_family: SequenceFamily,
    pub spreading_seed: u64,
    pub gomp: GompConfig,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            num_nodes: 60,
            info_bits: 150,
            code: CodeConfig::default(),
            psk: PskConfig::default(),
            ofdm: OfdmConfig::default(),
            reference: ReferenceMode::Continuous,
            profile: FrameProfile::SelfConsistent,
            spreading_family: SequenceFamily::RandomQpskChips,
            spreading_seed: 1,
            gomp: GompConfig::default(),
        }
    }
}

impl LinkConfig {
    pub fn layout(&self) -> Result<FrameLayout> {
        FrameLayout::new(
            self.info_bits,
            &self.code,
            &self.psk,
            self.ofdm.hop_interval,
            self.reference,
            self.profile,
        )
    }

    /// Code actually used on the air, after the profile's termination rule.
    pub fn effective_code(&self) -> CodeConfig {
        match self.profile {
            FrameProfile::SelfConsistent => self.code,
            FrameProfile::Nominal => self.code.with_termination(fec::Termination::Truncated),
        }
    }
}

/// Immutable per-experiment link state: configuration plus the spreading
/// set and hopping schedule derived from it.
#[derive(Debug, Clone)]
pub struct Link {
    pub config: LinkConfig,
    pub layout: FrameLayout,
    pub spreading: SpreadingSet,
    pub schedule: SubcarrierAllocation,
}

impl Link {
    pub fn new(config: LinkConfig) -> Result<Self> {
        config.ofdm.validate()?;
        let layout = config.layout()?;
        if layout.profile == FrameProfile::Nominal {
            return Err(Error::Config(
                "the nominal frame profile is geometry-only and cannot be simulated".into(),
            ));
        }
        let spreading = generate_sequences(
            config.num_nodes,
            config.ofdm.num_subcarriers,
            config.spreading_seed,
            config.spreading_family,
        )?;
        let schedule = hop_schedule(layout.num_symbols, &config.ofdm, config.ofdm.usable_blocks)?;
        Ok(Link {
            config,
            layout,
            spreading,
            schedule,
        })
    }

    /// Replaces the generated spreading set, e.g. with one loaded from file.
    pub fn with_spreading(mut self, spreading: SpreadingSet) -> Result<Self> {
        if spreading.num_nodes() != self.config.num_nodes
            || spreading.sequence_len() != self.config.ofdm.num_subcarriers
        {
            return Err(Error::invalid(format!(
                "spreading set is {}x{}, link needs {}x{}",
                spreading.sequence_len(),
                spreading.num_nodes(),
                self.config.ofdm.num_subcarriers,
                self.config.num_nodes
            )));
        }
        self.spreading = spreading;
        Ok(self)
    }

    /// Differential symbol stream for one node's information bits.
    pub fn modulate_node(&self, info_bits: &[u8]) -> Result<Vec<Complex64>> {
        if info_bits.len() != self.layout.info_len {
            return Err(Error::invalid(format!(
                "{} information bits, link carries {}",
                info_bits.len(),
                self.layout.info_len
            )));
        }
        let coded = fec::encode(info_bits, &self.config.effective_code())?;
        let psk = dpsk::map_psk(&coded, &self.config.psk)?;
        self.layout.node_symbols(&psk)
    }

    pub fn random_payload<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u8> {
        (0..self.layout.info_len)
            .map(|_| rng.random_range(0..2u8))
            .collect()
    }
}
