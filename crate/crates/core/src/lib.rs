//! Baseband simulator for a multi-carrier compressed-sensing multi-user
//! detection (MCSM) uplink.
//!
//! Many low-rate nodes share one hopping block of OFDM subcarriers. Each
//! node spreads differential PSK symbols with its own sequence; the base
//! station jointly detects which nodes are active and what they sent with
//! group orthogonal matching pursuit, then decodes every declared node.
//!
//! ```
//! use mcsm::{Link, LinkConfig};
//! let link = Link::new(LinkConfig::default()).unwrap();
//! assert_eq!(link.layout.coded_len, 304);
//! ```

pub mod channel;
pub mod csmud;
pub mod dpsk;
pub mod error;
pub mod fec;
pub mod harness;
pub mod link;
pub mod rxchain;
pub mod spread;
pub mod waveform;

pub use channel::{
    apply_channel, draw_activity, draw_channel, ActivityMode, ActivityModel, ChannelPreset,
    ChannelRealization, SnrSpec, TappedDelayLine,
};
pub use csmud::{
    gomp_detect, omp_reference, DetectionProblem, DetectionResult, GompConfig, StopReason,
};
pub use dpsk::{demap_psk, diff_demodulate, diff_modulate, map_psk, PskConfig};
pub use error::{Error, Result};
pub use fec::{encode, viterbi_decode, CodeConfig, Termination};
pub use harness::{
    emit_csv, parse_csv, run_sweep, ExperimentConfig, ResultRow, Simulation, SweepAxis,
};
pub use link::{Link, LinkConfig};
pub use rxchain::{process_frame, receive_frame, ReceivedFrame};
pub use spread::{generate_sequences, SequenceFamily, SpreadingSet};
pub use waveform::{
    assemble_frame, hop_schedule, ofdm_demodulate, ofdm_modulate, FrameLayout, FrameProfile,
    OfdmConfig, ReferenceMode, TimeFrame,
};
