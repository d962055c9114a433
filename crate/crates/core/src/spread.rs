//! Node-specific spreading sequences and the stacked sensing matrix `S`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SequenceFamily {
    /// Unit-magnitude QPSK chips `(±1 ± j)/sqrt(2)`, column-normalized.
    RandomQpskChips,
    /// I.i.d. circular Gaussian entries, column-normalized.
    RandomComplexGaussian,
    /// Columns of the identity; requires `K <= N_S`.
    Canonical,
    /// Loaded from a matrix file.
    Imported,
}

impl SequenceFamily {
    pub fn name(&self) -> &'static str {
        match self {
            SequenceFamily::RandomQpskChips => "random_qpsk_chips",
            SequenceFamily::RandomComplexGaussian => "random_complex_gaussian_normalized",
            SequenceFamily::Canonical => "canonical",
            SequenceFamily::Imported => "imported",
        }
    }
}

impl FromStr for SequenceFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random_qpsk_chips" | "qpsk" => Ok(SequenceFamily::RandomQpskChips),
            "random_complex_gaussian_normalized" | "gaussian" => {
                Ok(SequenceFamily::RandomComplexGaussian)
            }
            "canonical" | "identity" => Ok(SequenceFamily::Canonical),
            "imported" => Ok(SequenceFamily::Imported),
            other => Err(Error::Config(format!("unknown sequence family '{other}'"))),
        }
    }
}

/// The `K` spreading sequences of one MCSM block, stored as the columns of
/// the `N_S x K` matrix `S`. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadingSet {
    matrix: Array2<Complex64>,
    seed: u64,
    family: SequenceFamily,
}

impl SpreadingSet {
    /// Wraps an explicit matrix after checking unit-norm, distinct columns.
    pub fn from_matrix(matrix: Array2<Complex64>) -> Result<Self> {
        let (rows, cols) = matrix.dim();
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("spreading matrix must be nonempty"));
        }
        for (k, col) in matrix.columns().into_iter().enumerate() {
            let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::invalid(format!(
                    "spreading column {k} has norm {norm}, expected 1"
                )));
            }
        }
        let mut seen = HashSet::new();
        for (k, col) in matrix.columns().into_iter().enumerate() {
            let key: Vec<(u64, u64)> = col
                .iter()
                .map(|z| (z.re.to_bits(), z.im.to_bits()))
                .collect();
            if !seen.insert(key) {
                return Err(Error::invalid(format!(
                    "spreading column {k} is a duplicate"
                )));
            }
        }
        Ok(SpreadingSet {
            matrix,
            seed: 0,
            family: SequenceFamily::Imported,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn sequence_len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn family(&self) -> SequenceFamily {
        self.family
    }

    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.matrix
    }

    pub fn sequence(&self, k: usize) -> ArrayView1<'_, Complex64> {
        self.matrix.column(k)
    }

    /// Largest `|s_j^H s_k|` over distinct column pairs.
    pub fn max_coherence(&self) -> f64 {
        let gram = self.matrix.t().mapv(|z| z.conj()).dot(&self.matrix);
        let k = self.num_nodes();
        let mut worst: f64 = 0.0;
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    worst = worst.max(gram[[i, j]].norm());
                }
            }
        }
        worst
    }

    /// `S * b`, the noiseless superposition of all nodes' spread symbols.
    pub fn superpose(&self, symbols: &[Complex64]) -> Result<Array1<Complex64>> {
        if symbols.len() != self.num_nodes() {
            return Err(Error::invalid(format!(
                "{} symbols for {} nodes",
                symbols.len(),
                self.num_nodes()
            )));
        }
        Ok(self.matrix.dot(&ArrayView1::from(symbols)))
    }

    /// Writes the matrix as text: one row per subcarrier, entries as
    /// `re+imj` separated by spaces, preceded by `#` comment lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# mcsm spreading set rows={} cols={} family={} seed={}",
            self.sequence_len(),
            self.num_nodes(),
            self.family.name(),
            self.seed
        );
        for row in self.matrix.rows() {
            let line: Vec<String> = row.iter().map(|&z| format_complex(z)).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<Complex64>> = Vec::new();
        let mut family = SequenceFamily::Imported;
        let mut seed = 0;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(comment) = line.strip_prefix('#') {
                for field in comment.split_whitespace() {
                    match field.split_once('=') {
                        Some(("family", v)) => family = v.parse().unwrap_or(family),
                        Some(("seed", v)) => seed = v.parse().unwrap_or(seed),
                        _ => {}
                    }
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(parse_complex)
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| {
                    Error::invalid(format!("line {}: malformed complex entry", lineno + 1))
                })?;
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(Error::invalid(format!(
                        "line {}: {} entries, expected {}",
                        lineno + 1,
                        row.len(),
                        first.len()
                    )));
                }
            }
            rows.push(row);
        }
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let flat: Vec<Complex64> = rows.into_iter().flatten().collect();
        let matrix = Array2::from_shape_vec((n_rows, n_cols), flat)
            .map_err(|e| Error::invalid(e.to_string()))?;
        let mut set = SpreadingSet::from_matrix(matrix)?;
        set.family = family;
        set.seed = seed;
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SpreadingSet::from_text(&text)
    }
}

pub fn generate_sequences(
    num_nodes: usize,
    len: usize,
    seed: u64,
    family: SequenceFamily,
) -> Result<SpreadingSet> {
    if num_nodes == 0 || len == 0 {
        return Err(Error::invalid(format!(
            "need at least one node and one chip, got K={num_nodes}, N_S={len}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut matrix = Array2::<Complex64>::zeros((len, num_nodes));
    match family {
        SequenceFamily::Canonical => {
            if num_nodes > len {
                return Err(Error::invalid(format!(
                    "canonical family needs K <= N_S, got K={num_nodes}, N_S={len}"
                )));
            }
            for k in 0..num_nodes {
                matrix[[k, k]] = Complex64::new(1.0, 0.0);
            }
        }
        SequenceFamily::RandomQpskChips => {
            // 4^len distinct chip patterns exist.
            if len < 32 && (num_nodes as u128) > 4u128.pow(len as u32) {
                return Err(Error::invalid(format!(
                    "cannot draw {num_nodes} distinct QPSK sequences of length {len}"
                )));
            }
            let amp = 1.0 / (2.0 * len as f64).sqrt();
            let mut seen = HashSet::new();
            for k in 0..num_nodes {
                loop {
                    let chips: Vec<u8> = (0..len).map(|_| rng.random_range(0..4u8)).collect();
                    if seen.insert(chips.clone()) {
                        for (n, c) in chips.into_iter().enumerate() {
                            let re = if c & 1 == 0 { amp } else { -amp };
                            let im = if c & 2 == 0 { amp } else { -amp };
                            matrix[[n, k]] = Complex64::new(re, im);
                        }
                        break;
                    }
                }
            }
        }
        SequenceFamily::RandomComplexGaussian => {
            for k in 0..num_nodes {
                let mut col: Vec<Complex64> = (0..len)
                    .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                    .collect();
                let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                for z in &mut col {
                    *z /= norm;
                }
                matrix.column_mut(k).assign(&Array1::from(col));
            }
        }
        SequenceFamily::Imported => {
            return Err(Error::invalid(
                "imported sequences are loaded, not generated",
            ));
        }
    }
    Ok(SpreadingSet {
        matrix,
        seed,
        family,
    })
}

/// `s_k * b`; a zero symbol models an inactive node.
pub fn spread_symbol(sequence: ArrayView1<'_, Complex64>, symbol: Complex64) -> Vec<Complex64> {
    sequence.iter().map(|&s| s * symbol).collect()
}

pub(crate) fn format_complex(z: Complex64) -> String {
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("{}{}{}j", z.re, sign, z.im.abs())
}

pub(crate) fn parse_complex(s: &str) -> Option<Complex64> {
    let body = s.strip_suffix('j')?;
    let bytes = body.as_bytes();
    let split = (1..bytes.len()).rev().find(|&i| {
        (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E')
    })?;
    let re: f64 = body[..split].parse().ok()?;
    let im: f64 = body[split..].parse().ok()?;
    Some(Complex64::new(re, im))
}
