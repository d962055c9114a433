//! Compressed-sensing multi-user detection by Group Orthogonal Matching
//! Pursuit.
//!
//! The received frame `Y = S B` (`N_SC x L`) is row-group sparse in `B`: an
//! inactive node contributes an all-zero row. GOMP picks one node per
//! iteration by the energy of its correlation with the residual across the
//! whole frame, then re-solves the least-squares fit over the full support.
//! The support basis is kept as an incrementally built QR factorization, so
//! the residual after each step is the exact orthogonal projection of `Y`.

use ndarray::{Array1, Array2, ArrayView1};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Remaining norm below which a new column counts as linearly dependent on
/// the current support.
const RANK_TOLERANCE: f64 = 1e-10;

/// Correlation energies closer than this fraction of the residual energy
/// count as tied, so rounding cannot override the smallest-index rule.
const TIE_TOLERANCE: f64 = 1e-9;

fn beats(candidate: f64, incumbent: f64, residual_energy: f64) -> bool {
    candidate > incumbent + TIE_TOLERANCE * residual_energy
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GompConfig {
    /// Iteration cap; clamped to `min(N_SC, K)` at run time.
    pub max_active: usize,
    /// Stop once `||R||_F / ||Y||_F` falls to this value.
    pub residual_threshold: f64,
    /// Per-entry noise variance, if the receiver knows it. Enables the
    /// noise-floor stop below.
    pub noise_variance: Option<f64>,
    /// Stop once `||R||_F^2 <= noise_margin * sigma^2 * (N_SC - |support|) * L`,
    /// i.e. when the residual is no larger than the noise left after a
    /// correct projection.
    pub noise_margin: f64,
}

impl Default for GompConfig {
    fn default() -> Self {
        GompConfig {
            max_active: 20,
            residual_threshold: 0.01,
            noise_variance: None,
            noise_margin: 1.2,
        }
    }
}

impl GompConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.residual_threshold > 0.0 && self.residual_threshold <= 1.0) {
            return Err(Error::invalid(format!(
                "residual threshold {} outside (0, 1]",
                self.residual_threshold
            )));
        }
        if let Some(v) = self.noise_variance {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!("noise variance {v} is invalid")));
            }
        }
        if self.noise_margin.is_nan() || self.noise_margin <= 0.0 {
            return Err(Error::invalid("noise margin must be positive"));
        }
        Ok(())
    }
}

/// `Y = S B` with `Y` of shape `N_SC x L` and `S` of shape `N_SC x K`.
#[derive(Debug, Clone, Copy)]
pub struct DetectionProblem<'a> {
    pub y: &'a Array2<Complex64>,
    pub s: &'a Array2<Complex64>,
}

impl DetectionProblem<'_> {
    fn validate(&self) -> Result<()> {
        if self.y.nrows() != self.s.nrows() {
            return Err(Error::invalid(format!(
                "Y has {} rows but S has {}",
                self.y.nrows(),
                self.s.nrows()
            )));
        }
        if self.s.ncols() == 0 || self.s.nrows() == 0 {
            return Err(Error::invalid("empty sensing matrix"));
        }
        if self
            .y
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::invalid("Y contains non-finite entries"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Relative residual reached the threshold.
    ResidualThreshold,
    /// Residual reached the noise floor.
    NoiseFloor,
    /// Support reached the iteration cap.
    IterationCap,
    /// The newest column was linearly dependent on the support and was
    /// dropped.
    RankDeficient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// Declared-active nodes in selection order.
    pub support: Vec<usize>,
    /// `|support| x L` least-squares estimates; row `j` belongs to
    /// `support[j]`.
    pub b_hat: Array2<Complex64>,
    pub iterations: usize,
    /// `||R||_F / ||Y||_F` at exit (zero for an all-zero `Y`).
    pub final_residual: f64,
    /// `||R||_F` before the first and after every iteration.
    pub residual_history: Vec<f64>,
    pub stop: StopReason,
}

impl DetectionResult {
    pub fn sorted_support(&self) -> Vec<usize> {
        let mut s = self.support.clone();
        s.sort_unstable();
        s
    }

    pub fn estimate(&self, node: usize) -> Option<ArrayView1<'_, Complex64>> {
        self.support
            .iter()
            .position(|&k| k == node)
            .map(|row| self.b_hat.row(row))
    }

    pub fn is_declared(&self, node: usize) -> bool {
        self.support.contains(&node)
    }
}

fn frobenius(m: &Array2<Complex64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dot_conj(a: ArrayView1<'_, Complex64>, b: ArrayView1<'_, Complex64>) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub(crate) struct StopRule {
    threshold: f64,
    noise: Option<(f64, f64)>,
    rows: usize,
    cols: usize,
}

impl StopRule {
    pub(crate) fn new(cfg: &GompConfig, rows: usize, cols: usize) -> Self {
        StopRule {
            threshold: cfg.residual_threshold,
            noise: cfg.noise_variance.map(|v| (v, cfg.noise_margin)),
            rows,
            cols,
        }
    }

    pub(crate) fn check(&self, residual: f64, y_norm: f64, support: usize) -> Option<StopReason> {
        if residual <= self.threshold * y_norm {
            return Some(StopReason::ResidualThreshold);
        }
        if let Some((var, margin)) = self.noise {
            let floor = margin * var * (self.rows.saturating_sub(support) * self.cols) as f64;
            if residual * residual <= floor {
                return Some(StopReason::NoiseFloor);
            }
        }
        None
    }
}

pub fn gomp_detect(problem: &DetectionProblem<'_>, cfg: &GompConfig) -> Result<DetectionResult> {
    problem.validate()?;
    cfg.validate()?;
    let (rows, cols) = problem.y.dim();
    let k = problem.s.ncols();
    let cap = cfg.max_active.min(rows).min(k);
    let rule = StopRule::new(cfg, rows, cols);

    let y_norm = frobenius(problem.y);
    let s_herm: Array2<Complex64> = problem.s.t().mapv(|z| z.conj());
    let mut residual = problem.y.clone();
    let mut res_norm = y_norm;
    let mut history = vec![y_norm];

    let mut support: Vec<usize> = Vec::new();
    let mut selected = vec![false; k];
    let mut q_basis: Vec<Array1<Complex64>> = Vec::new();
    // Upper-triangular factor, column j holds the coefficients of support[j].
    let mut r_factor: Vec<Vec<Complex64>> = Vec::new();

    let stop = loop {
        if y_norm == 0.0 {
            break StopReason::ResidualThreshold;
        }
        if let Some(reason) = rule.check(res_norm, y_norm, support.len()) {
            break reason;
        }
        if support.len() >= cap {
            break StopReason::IterationCap;
        }

        let corr = s_herm.dot(&residual);
        let res_energy = res_norm * res_norm;
        let mut best: Option<(usize, f64)> = None;
        for node in (0..k).filter(|&n| !selected[n]) {
            let energy: f64 = corr.row(node).iter().map(|z| z.norm_sqr()).sum();
            if best.is_none_or(|(_, e)| beats(energy, e, res_energy)) {
                best = Some((node, energy));
            }
        }
        let Some((node, _)) = best else {
            break StopReason::IterationCap;
        };

        // Two passes of modified Gram-Schmidt against the current basis.
        let mut v = problem.s.column(node).to_owned();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); q_basis.len() + 1];
        for _ in 0..2 {
            for (j, q) in q_basis.iter().enumerate() {
                let c = dot_conj(q.view(), v.view());
                v.scaled_add(-c, q);
                coeffs[j] += c;
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let col_norm = problem
            .s
            .column(node)
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt();
        if norm <= RANK_TOLERANCE * col_norm.max(1.0) {
            break StopReason::RankDeficient;
        }
        v.mapv_inplace(|z| z / norm);
        coeffs[q_basis.len()] = Complex64::new(norm, 0.0);

        // R <- R - q (q^H R)
        let proj: Array1<Complex64> = v.mapv(|z| z.conj()).dot(&residual);
        for (mut col, &p) in residual.columns_mut().into_iter().zip(proj.iter()) {
            col.scaled_add(-p, &v);
        }

        selected[node] = true;
        support.push(node);
        q_basis.push(v);
        r_factor.push(coeffs);
        res_norm = frobenius(&residual);
        history.push(res_norm);
    };

    // B = R_qr^{-1} Q^H Y by back substitution.
    let m = support.len();
    let mut b_hat = Array2::<Complex64>::zeros((m, cols));
    if m > 0 {
        let mut qhy = Array2::<Complex64>::zeros((m, cols));
        for (j, q) in q_basis.iter().enumerate() {
            qhy.row_mut(j).assign(&q.mapv(|z| z.conj()).dot(problem.y));
        }
        for j in (0..m).rev() {
            let mut row = qhy.row(j).to_owned();
            for (l, col) in r_factor.iter().enumerate().skip(j + 1) {
                row.scaled_add(-col[j], &b_hat.row(l));
            }
            let diag = r_factor[j][j];
            b_hat.row_mut(j).assign(&row.mapv(|z| z / diag));
        }
    }

    Ok(DetectionResult {
        iterations: support.len(),
        support,
        b_hat,
        final_residual: if y_norm == 0.0 {
            0.0
        } else {
            res_norm / y_norm
        },
        residual_history: history,
        stop,
    })
}

/// Textbook OMP on a single measurement vector, solving the normal
/// equations directly. Shares only the stopping rule with [`gomp_detect`]
/// and serves as its reference for `L = 1`.
pub fn omp_reference(problem: &DetectionProblem<'_>, cfg: &GompConfig) -> Result<DetectionResult> {
    problem.validate()?;
    cfg.validate()?;
    if problem.y.ncols() != 1 {
        return Err(Error::invalid(format!(
            "OMP reference takes one measurement column, got {}",
            problem.y.ncols()
        )));
    }
    let (n, k) = problem.s.dim();
    let cap = cfg.max_active.min(n).min(k);
    let rule = StopRule::new(cfg, n, 1);
    let y: Vec<Complex64> = problem.y.column(0).to_vec();
    let col = |j: usize| problem.s.column(j);

    let y_norm = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut r = y.clone();
    let mut r_norm = y_norm;
    let mut history = vec![y_norm];
    let mut support: Vec<usize> = Vec::new();
    let mut x: Vec<Complex64> = Vec::new();

    let stop = loop {
        if y_norm == 0.0 {
            break StopReason::ResidualThreshold;
        }
        if let Some(reason) = rule.check(r_norm, y_norm, support.len()) {
            break reason;
        }
        if support.len() >= cap {
            break StopReason::IterationCap;
        }
        let mut best = None;
        let mut best_val = f64::NEG_INFINITY;
        let r_energy = r_norm * r_norm;
        for j in (0..k).filter(|j| !support.contains(j)) {
            let c: Complex64 = col(j).iter().zip(&r).map(|(s, v)| s.conj() * v).sum();
            if best.is_none() || beats(c.norm_sqr(), best_val, r_energy) {
                best_val = c.norm_sqr();
                best = Some(j);
            }
        }
        let Some(j) = best else {
            break StopReason::IterationCap;
        };
        support.push(j);

        let m = support.len();
        let mut gram = vec![vec![Complex64::new(0.0, 0.0); m]; m];
        let mut rhs = vec![Complex64::new(0.0, 0.0); m];
        for (a, &ja) in support.iter().enumerate() {
            for (b, &jb) in support.iter().enumerate() {
                gram[a][b] = col(ja).iter().zip(col(jb)).map(|(u, v)| u.conj() * v).sum();
            }
            rhs[a] = col(ja).iter().zip(&y).map(|(u, v)| u.conj() * v).sum();
        }
        match solve_dense(gram, rhs) {
            Some(sol) => x = sol,
            None => {
                support.pop();
                break StopReason::RankDeficient;
            }
        }
        r = y.clone();
        for (&j, &xj) in support.iter().zip(&x) {
            for (ri, s) in r.iter_mut().zip(col(j)) {
                *ri -= s * xj;
            }
        }
        r_norm = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        history.push(r_norm);
    };
    x.truncate(support.len());

    let b_hat = Array2::from_shape_vec((support.len(), 1), x).expect("one column per node");
    Ok(DetectionResult {
        iterations: support.len(),
        support,
        b_hat,
        final_residual: if y_norm == 0.0 { 0.0 } else { r_norm / y_norm },
        residual_history: history,
        stop,
    })
}

/// Gaussian elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
fn solve_dense(mut a: Vec<Vec<Complex64>>, mut b: Vec<Complex64>) -> Option<Vec<Complex64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flatten()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].norm().total_cmp(&a[j][c].norm()))?;
        if a[p][c].norm() <= 1e-14 * scale {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for cc in c..n {
                let v = a[c][cc];
                a[r][cc] -= f * v;
            }
            let v = b[c];
            b[r] -= f * v;
        }
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for r in (0..n).rev() {
        let mut acc = b[r];
        for c in r + 1..n {
            acc -= a[r][c] * x[c];
        }
        x[r] = acc / a[r][r];
    }
    Some(x)
}

/// Activity detection quality for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivityMetrics {
    pub active: usize,
    pub inactive: usize,
    pub missed: usize,
    pub false_alarms: usize,
}

impl ActivityMetrics {
    /// `None` when no node was active.
    pub fn missed_detection_rate(&self) -> Option<f64> {
        (self.active > 0).then(|| self.missed as f64 / self.active as f64)
    }

    /// `None` when every node was active.
    pub fn false_alarm_rate(&self) -> Option<f64> {
        (self.inactive > 0).then(|| self.false_alarms as f64 / self.inactive as f64)
    }
}

pub fn activity_metrics(declared: &[usize], truth: &[bool]) -> Result<ActivityMetrics> {
    let mut flagged = vec![false; truth.len()];
    for &d in declared {
        *flagged.get_mut(d).ok_or_else(|| {
            Error::invalid(format!("declared node {d} outside 0..{}", truth.len()))
        })? = true;
    }
    let mut m = ActivityMetrics {
        active: 0,
        inactive: 0,
        missed: 0,
        false_alarms: 0,
    };
    for (&t, &f) in truth.iter().zip(&flagged) {
        match (t, f) {
            (true, true) => m.active += 1,
            (true, false) => {
                m.active += 1;
                m.missed += 1;
            }
            (false, true) => {
                m.inactive += 1;
                m.false_alarms += 1;
            }
            (false, false) => m.inactive += 1,
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spread::{generate_sequences, SequenceFamily};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zero_observation_gives_empty_support() {
        let set = generate_sequences(60, 20, 1, SequenceFamily::RandomQpskChips).unwrap();
        let y = Array2::zeros((20, 12));
        let res = gomp_detect(
            &DetectionProblem {
                y: &y,
                s: set.matrix(),
            },
            &GompConfig::default(),
        )
        .unwrap();
        assert!(res.support.is_empty());
        assert_eq!(res.iterations, 0);
        assert_eq!(res.b_hat.dim(), (0, 12));
    }

    #[test]
    fn single_node_recovered_exactly() {
        let set = generate_sequences(60, 20, 1, SequenceFamily::RandomQpskChips).unwrap();
        let row: Vec<Complex64> = (0..9)
            .map(|i| Complex64::from_polar(1.3, 0.7 * i as f64))
            .collect();
        let mut y = Array2::zeros((20, 9));
        for (i, &b) in row.iter().enumerate() {
            y.column_mut(i).assign(&set.sequence(17).mapv(|s| s * b));
        }
        let res = gomp_detect(
            &DetectionProblem {
                y: &y,
                s: set.matrix(),
            },
            &GompConfig::default(),
        )
        .unwrap();
        assert_eq!(res.support, vec![17]);
        for (est, truth) in res.b_hat.row(0).iter().zip(&row) {
            assert!((est - truth).norm() < 1e-8);
        }
    }

    #[test]
    fn identity_dictionary_picks_nonzero_entries() {
        let set = generate_sequences(6, 6, 0, SequenceFamily::Canonical).unwrap();
        let y = Array2::from_shape_vec(
            (6, 1),
            vec![
                c(0.0, 0.0),
                c(3.0, 0.0),
                c(0.0, 0.0),
                c(0.0, -2.0),
                c(0.0, 0.0),
                c(0.0, 0.0),
            ],
        )
        .unwrap();
        let p = DetectionProblem {
            y: &y,
            s: set.matrix(),
        };
        let res = omp_reference(&p, &GompConfig::default()).unwrap();
        assert_eq!(res.support, vec![1, 3]);
        assert_eq!(
            gomp_detect(&p, &GompConfig::default()).unwrap().support,
            vec![1, 3]
        );
    }

    #[test]
    fn duplicate_column_is_dropped() {
        // Columns 0 and 2 are parallel.
        let mut s = Array2::zeros((2, 3));
        s[[0, 0]] = c(1.0, 0.0);
        s[[1, 1]] = c(1.0, 0.0);
        s[[0, 2]] = c(0.0, 1.0);
        let y = Array2::from_shape_vec((2, 1), vec![c(1.0, 0.0), c(1e-3, 0.0)]).unwrap();
        let cfg = GompConfig {
            residual_threshold: 1e-9,
            ..GompConfig::default()
        };
        // Pick order: 0 (or its twin 2 by tie -> 0), then 1; a third
        // selection would have to be the dependent twin.
        let res = gomp_detect(&DetectionProblem { y: &y, s: &s }, &cfg).unwrap();
        assert_eq!(res.support, vec![0, 1]);
        let y3 = Array2::from_shape_vec((2, 1), vec![c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let mut s3 = Array2::zeros((2, 2));
        s3[[0, 0]] = c(1.0, 0.0);
        s3[[0, 1]] = c(-1.0, 0.0);
        let cfg_deep = GompConfig {
            residual_threshold: 1e-12,
            ..GompConfig::default()
        };
        let res = gomp_detect(
            &DetectionProblem {
                y: &(y3.clone()
                    + &Array2::from_shape_vec((2, 1), vec![c(0.0, 0.0), c(0.5, 0.0)]).unwrap()),
                s: &s3,
            },
            &cfg_deep,
        )
        .unwrap();
        assert_eq!(res.stop, StopReason::RankDeficient);
        assert_eq!(res.support, vec![0]);
        let omp = omp_reference(
            &DetectionProblem {
                y: &(y3 + &Array2::from_shape_vec((2, 1), vec![c(0.0, 0.0), c(0.5, 0.0)]).unwrap()),
                s: &s3,
            },
            &cfg_deep,
        )
        .unwrap();
        assert_eq!(omp.stop, StopReason::RankDeficient);
        assert_eq!(omp.support, vec![0]);
    }

    #[test]
    fn noise_floor_stops_on_pure_noise() {
        let set = generate_sequences(60, 20, 1, SequenceFamily::RandomQpskChips).unwrap();
        let mut y = Array2::zeros((20, 50));
        let mut seed = 1u64;
        for z in y.iter_mut() {
            seed = seed
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let a = (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
            let b = ((seed >> 7) & 0xffff) as f64 / 65536.0 - 0.5;
            *z = c(a, b) * 0.01;
        }
        let var = y.iter().map(|z| z.norm_sqr()).sum::<f64>() / y.len() as f64;
        let cfg = GompConfig {
            noise_variance: Some(var),
            ..GompConfig::default()
        };
        let res = gomp_detect(
            &DetectionProblem {
                y: &y,
                s: set.matrix(),
            },
            &cfg,
        )
        .unwrap();
        assert!(res.support.is_empty());
        assert_eq!(res.stop, StopReason::NoiseFloor);
    }

    #[test]
    fn metrics_by_count() {
        let truth = [
            false, false, true, true, true, false, false, false, false, false,
        ];
        let m = activity_metrics(&[1, 2, 3], &truth).unwrap();
        assert_eq!(m.missed_detection_rate(), Some(1.0 / 3.0));
        assert_eq!(m.false_alarm_rate(), Some(1.0 / 7.0));
        let m = activity_metrics(&[2, 3, 4], &truth).unwrap();
        assert_eq!(
            (m.missed_detection_rate(), m.false_alarm_rate()),
            (Some(0.0), Some(0.0))
        );
        let six: Vec<bool> = (0..60).map(|k| k % 10 == 0).collect();
        let m = activity_metrics(&[], &six).unwrap();
        assert_eq!(
            (m.missed_detection_rate(), m.false_alarm_rate()),
            (Some(1.0), Some(0.0))
        );
        let idle = activity_metrics(&[], &[false; 4]).unwrap();
        assert_eq!(idle.missed_detection_rate(), None);
        assert!(activity_metrics(&[9], &[false; 4]).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = GompConfig {
            residual_threshold: 0.0,
            ..GompConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = GompConfig {
            noise_variance: Some(f64::NAN),
            ..GompConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
