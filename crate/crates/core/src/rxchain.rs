//! Base-station processing: DFT and hop de-mapping, GOMP activity and data
//! detection, differential demodulation, demapping, decoding and scoring.

use ndarray::Array2;
use num_complex::Complex64;

use crate::csmud::{activity_metrics, gomp_detect, DetectionProblem, DetectionResult, GompConfig};
use crate::dpsk;
use crate::error::{Error, Result};
use crate::fec;
use crate::link::Link;
use crate::waveform::{subcarrier_demap, Ofdm, TimeFrame};

/// What the base station hands to the detector.
#[derive(Debug, Clone, Copy)]
pub enum ReceivedFrame<'a> {
    /// Raw baseband samples, symbol-synchronous.
    Time(&'a TimeFrame),
    /// Block matrix `Y` (`N_SC x N_B`), already de-hopped.
    Freq(&'a Array2<Complex64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reception {
    pub detection: DetectionResult,
    /// `(node, b_hat)` per declared node, in selection order; each stream
    /// has `N_B` symbols including references.
    pub streams: Vec<(usize, Vec<Complex64>)>,
}

/// Collects the allocated block of every OFDM symbol into `Y`.
pub fn extract_blocks(frame: &TimeFrame, link: &Link) -> Result<Array2<Complex64>> {
    let cfg = &link.config.ofdm;
    let n_b = link.layout.num_symbols;
    if frame.num_symbols() != n_b {
        return Err(Error::invalid(format!(
            "frame has {} OFDM symbols, link expects {n_b}",
            frame.num_symbols()
        )));
    }
    let ofdm = Ofdm::new(cfg)?;
    let mut y = Array2::zeros((cfg.num_subcarriers, n_b));
    for i in 0..n_b {
        let spectrum = ofdm.demodulate(frame.symbol(i))?;
        let block = subcarrier_demap(&spectrum, link.schedule.symbol_bins(i))?;
        y.column_mut(i).assign(&ndarray::Array1::from(block));
    }
    Ok(y)
}

pub fn receive_frame(
    frame: ReceivedFrame<'_>,
    link: &Link,
    gomp: &GompConfig,
) -> Result<Reception> {
    let n_sc = link.config.ofdm.num_subcarriers;
    if link.spreading.sequence_len() != n_sc {
        return Err(Error::invalid("spreading length differs from N_SC"));
    }
    if !link.schedule.covers(link.layout.num_symbols) {
        return Err(Error::invalid("hopping schedule does not cover the frame"));
    }
    let owned;
    let y = match frame {
        ReceivedFrame::Time(t) => {
            owned = extract_blocks(t, link)?;
            &owned
        }
        ReceivedFrame::Freq(y) => {
            if y.dim() != (n_sc, link.layout.num_symbols) {
                return Err(Error::invalid(format!(
                    "Y is {:?}, link expects ({n_sc}, {})",
                    y.dim(),
                    link.layout.num_symbols
                )));
            }
            y
        }
    };
    let detection = gomp_detect(
        &DetectionProblem {
            y,
            s: link.spreading.matrix(),
        },
        gomp,
    )?;
    let streams = detection
        .support
        .iter()
        .zip(detection.b_hat.rows())
        .map(|(&k, row)| (k, row.to_vec()))
        .collect();
    Ok(Reception { detection, streams })
}

/// Differential demodulation, demapping and Viterbi decoding of one node.
pub fn decode_node(b_hat: &[Complex64], link: &Link) -> Result<Vec<u8>> {
    let a_hat = link.layout.differential_decisions(b_hat)?;
    let c_hat = dpsk::demap_psk(&a_hat, &link.config.psk)?;
    let u_hat = fec::viterbi_decode(&c_hat, &link.config.effective_code())?;
    debug_assert_eq!(u_hat.len(), link.layout.info_len);
    Ok(u_hat)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeScore {
    pub node: usize,
    pub active: bool,
    pub declared: bool,
    /// Bit errors against the transmitted payload, for declared active nodes.
    pub bit_errors: Option<usize>,
    /// Missed, or decoded with at least one bit error. Never set for
    /// inactive nodes.
    pub frame_error: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameScore {
    /// Active or declared nodes only, ordered by node index.
    pub nodes: Vec<NodeScore>,
    pub active_nodes: usize,
    pub inactive_nodes: usize,
    pub frame_errors: usize,
    pub bit_errors: usize,
    pub missed_detections: usize,
    pub false_alarms: usize,
}

/// Scores decoded payloads against the truth.
///
/// `payloads[k]` holds node `k`'s transmitted bits (ignored when inactive);
/// `decoded` lists every declared node with its decoded bits.
pub fn score_frame(
    payloads: &[Vec<u8>],
    activity: &[bool],
    decoded: &[(usize, Vec<u8>)],
) -> Result<FrameScore> {
    if payloads.len() != activity.len() {
        return Err(Error::invalid("payloads and activity differ in length"));
    }
    let declared: Vec<usize> = decoded.iter().map(|(k, _)| *k).collect();
    let metrics = activity_metrics(&declared, activity)?;

    let mut nodes = Vec::new();
    let mut frame_errors = 0;
    let mut bit_errors = 0;
    for (k, &active) in activity.iter().enumerate() {
        let found = decoded.iter().find(|(d, _)| *d == k);
        if !active && found.is_none() {
            continue;
        }
        let errors = match (active, found) {
            (true, Some((_, bits))) => {
                if bits.len() != payloads[k].len() {
                    return Err(Error::invalid(format!(
                        "node {k}: decoded {} bits, sent {}",
                        bits.len(),
                        payloads[k].len()
                    )));
                }
                Some(
                    bits.iter()
                        .zip(&payloads[k])
                        .filter(|(a, b)| a != b)
                        .count(),
                )
            }
            _ => None,
        };
        let frame_error = active && errors.is_none_or(|e| e > 0);
        if frame_error {
            frame_errors += 1;
        }
        bit_errors += errors.unwrap_or(0);
        nodes.push(NodeScore {
            node: k,
            active,
            declared: found.is_some(),
            bit_errors: errors,
            frame_error,
        });
    }
    Ok(FrameScore {
        nodes,
        active_nodes: metrics.active,
        inactive_nodes: metrics.inactive,
        frame_errors,
        bit_errors,
        missed_detections: metrics.missed,
        false_alarms: metrics.false_alarms,
    })
}

/// Receives, decodes every declared node and scores the frame.
pub fn process_frame(
    frame: ReceivedFrame<'_>,
    link: &Link,
    gomp: &GompConfig,
    payloads: &[Vec<u8>],
    activity: &[bool],
) -> Result<(Reception, FrameScore)> {
    let reception = receive_frame(frame, link, gomp)?;
    let decoded = reception
        .streams
        .iter()
        .map(|(k, b)| decode_node(b, link).map(|u| (*k, u)))
        .collect::<Result<Vec<_>>>()?;
    let score = score_frame(payloads, activity, &decoded)?;
    Ok((reception, score))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_frame_scores_clean() {
        let payloads = vec![vec![1, 0, 1], vec![], vec![0, 0, 1]];
        let activity = [true, false, true];
        let decoded = vec![(0, vec![1, 0, 1]), (2, vec![0, 0, 1])];
        let s = score_frame(&payloads, &activity, &decoded).unwrap();
        assert_eq!(
            (
                s.frame_errors,
                s.bit_errors,
                s.missed_detections,
                s.false_alarms
            ),
            (0, 0, 0, 0)
        );
        assert_eq!(s.active_nodes, 2);
    }

    #[test]
    fn missed_node_is_a_frame_error() {
        let payloads = vec![vec![1, 0, 1], vec![], vec![0, 0, 1]];
        let activity = [true, false, true];
        let s = score_frame(&payloads, &activity, &[(2, vec![0, 0, 1])]).unwrap();
        assert_eq!(s.missed_detections, 1);
        assert_eq!(s.frame_errors, 1);
        assert!(s.nodes[0].frame_error && !s.nodes[0].declared);
    }

    #[test]
    fn false_alarm_does_not_count_as_frame_error() {
        let payloads = vec![vec![1, 0, 1], vec![], vec![0, 0, 1]];
        let activity = [true, false, true];
        let decoded = vec![(0, vec![1, 0, 1]), (1, vec![1, 1, 1]), (2, vec![0, 0, 1])];
        let s = score_frame(&payloads, &activity, &decoded).unwrap();
        assert_eq!((s.frame_errors, s.false_alarms), (0, 1));
        let fa = s.nodes.iter().find(|n| n.node == 1).unwrap();
        assert!(!fa.frame_error && fa.declared && !fa.active);
    }

    #[test]
    fn bit_errors_are_counted() {
        let payloads = vec![vec![1, 0, 1, 1]];
        let s = score_frame(&payloads, &[true], &[(0, vec![0, 0, 1, 0])]).unwrap();
        assert_eq!((s.frame_errors, s.bit_errors), (1, 2));
        assert!(score_frame(&payloads, &[true], &[(0, vec![0])]).is_err());
    }
}
