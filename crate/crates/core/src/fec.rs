//! Rate-1/2 feedforward convolutional code with hard-decision Viterbi decoding.
//!
//! Generators are given in octal, most significant tap first. The most
//! significant tap multiplies the newest input bit, so with the default
//! `[5; 7]` pair the outputs at time `t` are
//!
//! ```text
//! c1(t) = u(t) ^ u(t-2)
//! c2(t) = u(t) ^ u(t-1) ^ u(t-2)
//! ```
//!
//! and the coded stream interleaves them as `c1(0), c2(0), c1(1), c2(1), ...`.

use crate::error::{Error, Result};

/// How the encoder leaves the trellis at the end of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// `constraint_length - 1` zero tail bits flush the register to state 0.
    Terminated,
    /// The frame simply stops; the decoder may end in any state.
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeConfig {
    generators: [u32; 2],
    constraint_length: usize,
    termination: Termination,
}

impl Default for CodeConfig {
    fn default() -> Self {
        CodeConfig {
            generators: [0o5, 0o7],
            constraint_length: 3,
            termination: Termination::Terminated,
        }
    }
}

impl CodeConfig {
    pub fn new(
        generators: [u32; 2],
        constraint_length: usize,
        termination: Termination,
    ) -> Result<Self> {
        if !(2..=16).contains(&constraint_length) {
            return Err(Error::invalid(format!(
                "constraint length {constraint_length} outside 2..=16"
            )));
        }
        for g in generators {
            if g == 0 {
                return Err(Error::invalid("generator polynomial must be nonzero"));
            }
            if g >> constraint_length != 0 {
                return Err(Error::invalid(format!(
                    "generator {g:o} has more than {constraint_length} taps"
                )));
            }
        }
        Ok(CodeConfig {
            generators,
            constraint_length,
            termination,
        })
    }

    pub fn with_termination(mut self, termination: Termination) -> Self {
        self.termination = termination;
        self
    }

    pub fn generators(&self) -> [u32; 2] {
        self.generators
    }

    pub fn constraint_length(&self) -> usize {
        self.constraint_length
    }

    pub fn termination(&self) -> Termination {
        self.termination
    }

    /// Number of tail bits appended by the encoder.
    pub fn tail_len(&self) -> usize {
        match self.termination {
            Termination::Terminated => self.constraint_length - 1,
            Termination::Truncated => 0,
        }
    }

    /// Coded length `N_C` for `info_len` information bits.
    pub fn coded_len(&self, info_len: usize) -> usize {
        2 * (info_len + self.tail_len())
    }

    /// Information length recovered from a coded length, if consistent.
    pub fn info_len(&self, coded_len: usize) -> Option<usize> {
        if !coded_len.is_multiple_of(2) {
            return None;
        }
        (coded_len / 2)
            .checked_sub(self.tail_len())
            .filter(|&n| n > 0)
    }

    fn num_states(&self) -> usize {
        1 << (self.constraint_length - 1)
    }

    /// Output pair when `bit` enters a register currently holding `state`
    /// (the `K - 1` previous bits, newest in the most significant position).
    fn output(&self, state: usize, bit: u8) -> [u8; 2] {
        let reg = ((bit as u32) << (self.constraint_length - 1)) | state as u32;
        [
            ((reg & self.generators[0]).count_ones() & 1) as u8,
            ((reg & self.generators[1]).count_ones() & 1) as u8,
        ]
    }

    fn next_state(&self, state: usize, bit: u8) -> usize {
        ((bit as usize) << (self.constraint_length - 2)) | (state >> 1)
    }
}

/// Information and coded bits for a single node frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitFrame {
    pub info_bits: Vec<u8>,
    pub coded_bits: Vec<u8>,
}

impl BitFrame {
    pub fn encode(info_bits: Vec<u8>, cfg: &CodeConfig) -> Result<Self> {
        let coded_bits = encode(&info_bits, cfg)?;
        Ok(BitFrame {
            info_bits,
            coded_bits,
        })
    }
}

pub(crate) fn check_bits(bits: &[u8]) -> Result<()> {
    match bits.iter().position(|&b| b > 1) {
        Some(i) => Err(Error::invalid(format!(
            "bit {i} has value {}, expected 0 or 1",
            bits[i]
        ))),
        None => Ok(()),
    }
}

pub fn encode(u: &[u8], cfg: &CodeConfig) -> Result<Vec<u8>> {
    if u.is_empty() {
        return Err(Error::invalid("cannot encode an empty bit sequence"));
    }
    check_bits(u)?;

    let mut out = Vec::with_capacity(cfg.coded_len(u.len()));
    let mut state = 0usize;
    let tail = std::iter::repeat_n(0u8, cfg.tail_len());
    for bit in u.iter().copied().chain(tail) {
        out.extend_from_slice(&cfg.output(state, bit));
        state = cfg.next_state(state, bit);
    }
    Ok(out)
}

/// Hard-decision maximum-likelihood decoding.
///
/// Returns the information sequence whose codeword is nearest in Hamming
/// distance to `c_hat`. Equal-distance candidates resolve to the
/// lexicographically smallest information sequence: every state keeps a
/// strict lexicographic rank of its survivor, and add-compare-select prefers
/// the lower-ranked predecessor on equal metrics.
pub fn viterbi_decode(c_hat: &[u8], cfg: &CodeConfig) -> Result<Vec<u8>> {
    let info_len = cfg.info_len(c_hat.len()).ok_or_else(|| {
        Error::invalid(format!(
            "coded length {} inconsistent with a rate-1/2 code with {} tail bits",
            c_hat.len(),
            cfg.tail_len()
        ))
    })?;
    check_bits(c_hat)?;

    let n_states = cfg.num_states();
    let steps = c_hat.len() / 2;
    let unreachable = u32::MAX;

    // Branch labels depend only on (state, bit); precompute them.
    let labels: Vec<[[u8; 2]; 2]> = (0..n_states)
        .map(|s| [cfg.output(s, 0), cfg.output(s, 1)])
        .collect();

    let mut metric = vec![unreachable; n_states];
    metric[0] = 0;
    let mut rank: Vec<usize> = (0..n_states).collect();
    let mut new_metric = vec![unreachable; n_states];
    let mut chosen = vec![0usize; n_states];
    let mut order: Vec<usize> = (0..n_states).collect();
    let mut new_rank = vec![0usize; n_states];
    let mut decisions: Vec<usize> = Vec::with_capacity(steps * n_states);

    let shift = cfg.constraint_length - 2;
    for t in 0..steps {
        let rx = [c_hat[2 * t], c_hat[2 * t + 1]];
        for ns in 0..n_states {
            let bit = (ns >> shift) as u8;
            let low = (ns << 1) & (n_states - 1);
            let mut best: Option<(u32, usize)> = None;
            for pred in [low, low | 1] {
                if metric[pred] == unreachable {
                    continue;
                }
                let label = labels[pred][bit as usize];
                let d = (label[0] ^ rx[0]) as u32 + (label[1] ^ rx[1]) as u32;
                let m = metric[pred] + d;
                best = match best {
                    None => Some((m, pred)),
                    Some((bm, bp)) if m < bm || (m == bm && rank[pred] < rank[bp]) => {
                        Some((m, pred))
                    }
                    keep => keep,
                };
            }
            match best {
                Some((m, pred)) => {
                    new_metric[ns] = m;
                    chosen[ns] = pred;
                }
                None => {
                    new_metric[ns] = unreachable;
                    chosen[ns] = low;
                }
            }
        }
        // Survivors of equal length compare by predecessor rank, then by the
        // appended bit.
        order.sort_by_key(|&ns| (rank[chosen[ns]], ns >> shift));
        for (r, &ns) in order.iter().enumerate() {
            new_rank[ns] = r;
        }
        std::mem::swap(&mut rank, &mut new_rank);
        std::mem::swap(&mut metric, &mut new_metric);
        decisions.extend_from_slice(&chosen);
    }

    let end = match cfg.termination {
        Termination::Terminated => 0,
        Termination::Truncated => (0..n_states)
            .filter(|&s| metric[s] != unreachable)
            .min_by_key(|&s| (metric[s], rank[s]))
            .expect("at least one reachable state"),
    };

    let mut bits = vec![0u8; steps];
    let mut state = end;
    for t in (0..steps).rev() {
        bits[t] = (state >> shift) as u8;
        state = decisions[t * n_states + state];
    }
    bits.truncate(info_len);
    Ok(bits)
}
