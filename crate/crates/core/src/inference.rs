//! Blind recovery of the user count and the sorted cross-gain magnitudes from the power
//! levels of the interference-plus-noise mixture.
//!
//! [`solve_case`] peels subset sums off the full level set and refines by least squares;
//! [`solve_top_levels`] solves the n−1 equations built from the largest levels only, which is
//! exact as long as no multi-gain drop falls among those levels.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::codebook::{normalization, SignatureDistribution};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphabetInfo {
    /// At least two distinct magnitudes (ascending); the last two are the two largest.
    Multi { magnitudes: Vec<f64>, masking: bool },
    /// Alphabet {-a, a}.
    Binary { a: f64, masking: bool },
    /// No spreading: every active slot carries unit amplitude.
    MaskingOnly,
}

impl AlphabetInfo {
    /// Per-slot squared amplitudes an interferer can contribute.
    fn slot_values(&self) -> Vec<f64> {
        let (mags, masking): (Vec<f64>, bool) = match self {
            Self::Multi { magnitudes, masking } => (magnitudes.clone(), *masking),
            Self::Binary { a, masking } => (vec![*a], *masking),
            Self::MaskingOnly => (vec![1.0], true),
        };
        let mut v: Vec<f64> = Vec::new();
        if masking {
            v.push(0.0);
        }
        v.extend(mags.iter().map(|m| m * m));
        v
    }

    fn pairwise_only(&self) -> bool {
        matches!(self, Self::Binary { masking: false, .. })
    }

    /// Number of mixture components per additional user.
    pub fn base(&self) -> usize {
        match self {
            Self::Multi { magnitudes, masking } => magnitudes.len() + usize::from(*masking),
            Self::Binary { masking: true, .. } | Self::MaskingOnly => 2,
            Self::Binary { masking: false, .. } => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelObservation {
    /// Distinct per-slot interference-plus-noise powers, ascending.
    pub levels: Vec<f64>,
    /// Distinct two-slot covariance off-diagonals, ascending (binary alphabet without masking).
    pub offdiag: Option<Vec<f64>>,
    pub gamma: f64,
    pub beta_sq: f64,
    pub alphabet_info: AlphabetInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainEstimate {
    pub gains_sq_sorted: Vec<f64>,
    pub n_users: usize,
    /// Relative least-squares residual ‖Mg − y‖ / ‖y‖.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    /// At least four symbols: uses the two largest magnitudes.
    One,
    /// Masking only.
    Two,
    /// Binary alphabet with masking.
    Three,
    /// Binary alphabet without masking: two-slot covariances.
    Four,
}

impl TryFrom<u8> for Case {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Self::One),
            2 => Ok(Self::Two),
            3 => Ok(Self::Three),
            4 => Ok(Self::Four),
            _ => Err(Error::InvalidArgument(format!("unknown case {v}"))),
        }
    }
}

/// Default relative residual above which an observation is rejected.
pub const RESIDUAL_TOL: f64 = 1e-4;

fn sorted_distinct(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Every component power β²γ Σ a_j² g_j + 1 generated by the given gains.
pub fn forward_levels(gains_sq: &[f64], dist: &SignatureDistribution, gamma: f64) -> Result<LevelObservation> {
    if gains_sq.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
        return Err(Error::InvalidArgument("gains must be finite and positive".into()));
    }
    let mut sorted = gains_sq.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Unsupported("coinciding gain magnitudes are not identifiable".into()));
    }
    let mags: Vec<f64> = dist.alphabet().iter().filter(|&&a| a > 0).map(|&a| a as f64).collect();
    let masking = dist.is_masked();
    let info = if mags.len() >= 2 {
        AlphabetInfo::Multi { magnitudes: mags, masking }
    } else {
        AlphabetInfo::Binary { a: mags[0], masking }
    };
    let beta_sq = normalization(dist).beta_sq;
    let c = beta_sq * gamma;
    let levels = sorted_distinct(combos(&info.slot_values(), gains_sq).into_iter().map(|s| 1.0 + c * s).collect());
    let offdiag = info.pairwise_only().then(|| {
        let a2 = mags_sq_top(&info);
        sorted_distinct(combos(&[-1.0, 1.0], gains_sq).into_iter().map(|s| c * a2 * s).collect())
    });
    Ok(LevelObservation { levels, offdiag, gamma, beta_sq, alphabet_info: info })
}

fn mags_sq_top(info: &AlphabetInfo) -> f64 {
    info.slot_values().into_iter().fold(0.0, f64::max)
}

/// Σ_j x_{choice_j} g_j over every choice vector.
fn combos(values: &[f64], gains: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0];
    for &g in gains {
        out = out.iter().flat_map(|s| values.iter().map(move |x| s + x * g)).collect();
    }
    out
}

/// n = 1 + log_base(count); the count must be an exact power of the base.
pub fn count_users(count: usize, info: &AlphabetInfo) -> Result<usize> {
    let base = info.base();
    if base < 2 {
        return Err(Error::Inconsistent("a single-symbol slot alphabet carries no user count".into()));
    }
    let mut n = 1;
    let mut p = 1usize;
    while p < count {
        p = p.checked_mul(base).ok_or(Error::Overflow("count_users"))?;
        n += 1;
    }
    if p != count || count == 0 {
        return Err(Error::Inconsistent(format!("{count} components is not a power of {base}")));
    }
    Ok(n)
}

impl LevelObservation {
    /// Mixture components that identify n: pairwise ones for the unmasked binary alphabet.
    pub fn component_count(&self) -> usize {
        match (&self.offdiag, self.alphabet_info.pairwise_only()) {
            (Some(o), true) => o.len(),
            _ => self.levels.len(),
        }
    }

    pub fn count_users(&self) -> Result<usize> {
        count_users(self.component_count(), &self.alphabet_info)
    }
}

fn check_case(obs: &LevelObservation, case: Case) -> Result<()> {
    let ok = match (case, &obs.alphabet_info) {
        (Case::One, AlphabetInfo::Multi { .. }) => true,
        (Case::Two, AlphabetInfo::MaskingOnly) => true,
        (Case::Three, AlphabetInfo::Binary { masking: true, .. }) => true,
        (Case::Four, AlphabetInfo::Binary { masking: false, .. }) => obs.offdiag.is_some(),
        _ => false,
    };
    if !ok {
        return Err(Error::Inconsistent(format!("observation does not match {case:?}")));
    }
    if !(obs.gamma > 0.0 && obs.beta_sq > 0.0) {
        return Err(Error::InvalidArgument("gamma and beta_sq must be positive".into()));
    }
    Ok(())
}

pub fn solve_case(obs: &LevelObservation, case: Case) -> Result<GainEstimate> {
    solve_case_with_tol(obs, case, RESIDUAL_TOL)
}

pub fn solve_case_with_tol(obs: &LevelObservation, case: Case, tol: f64) -> Result<GainEstimate> {
    check_case(obs, case)?;
    let n = obs.count_users()?;
    let m = n - 1;
    if m == 0 {
        return Ok(GainEstimate { gains_sq_sorted: vec![], n_users: 1, residual: 0.0 });
    }
    let c = obs.beta_sq * obs.gamma;
    let values = obs.alphabet_info.slot_values();
    let top = mags_sq_top(&obs.alphabet_info);

    // Observed values, per-gain coefficient choices, and the constant offset of each row.
    let (observed, choices, offset): (Vec<f64>, Vec<f64>, f64) = if case == Case::Four {
        (obs.offdiag.clone().unwrap_or_default(), vec![-top, top], 0.0)
    } else {
        (obs.levels.clone(), values, 1.0)
    };
    let peak = observed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let drops_of: Vec<f64> = choices.iter().map(|x| top - x).collect();
    let q_min = drops_of.iter().copied().filter(|&d| d > 0.0).fold(f64::INFINITY, f64::min);

    let mut remaining: Vec<(f64, usize)> = observed.iter().enumerate().map(|(i, &v)| (peak - v, i)).collect();
    remaining.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut assign: Vec<Option<Vec<usize>>> = vec![None; observed.len()];
    let top_idx = choices.iter().position(|&x| x == top).unwrap_or(0);
    if let Some(i) = take_nearest(&mut remaining, 0.0) {
        assign[i] = Some(vec![top_idx; m]);
    }

    let mut gains: Vec<f64> = Vec::with_capacity(m);
    while gains.len() < m {
        let Some(&(d_min, _)) = remaining.first() else {
            return Err(Error::Inconsistent("too few levels for the user count".into()));
        };
        let g = d_min / (c * q_min);
        let j = gains.len();
        gains.push(g);
        // Remove every drop in which gain j takes a non-top coefficient.
        let mut patterns: Vec<Vec<usize>> = vec![vec![]];
        for _ in 0..j {
            patterns = patterns
                .into_iter()
                .flat_map(|p| (0..choices.len()).map(move |ci| [p.clone(), vec![ci]].concat()))
                .collect();
        }
        for p in patterns {
            for (cj, &dq) in drops_of.iter().enumerate() {
                if dq == 0.0 {
                    continue;
                }
                let drop = c * (p.iter().zip(&gains).map(|(&ci, g)| drops_of[ci] * g).sum::<f64>() + dq * g);
                if let Some(i) = take_nearest(&mut remaining, drop) {
                    let mut full = p.clone();
                    full.push(cj);
                    full.resize(m, top_idx);
                    assign[i] = Some(full);
                }
            }
        }
    }
    if !remaining.is_empty() {
        return Err(Error::Inconsistent(format!("{} levels left unexplained", remaining.len())));
    }

    // Least squares over every assigned level (plus the diagonal in the pairwise case).
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for (i, a) in assign.iter().enumerate() {
        if let Some(p) = a {
            rows.push((p.iter().map(|&ci| c * choices[ci]).collect(), observed[i] - offset));
        }
    }
    if case == Case::Four {
        rows.push((vec![c * top; m], obs.levels[obs.levels.len() - 1] - 1.0));
    }
    let mat = DMatrix::from_fn(rows.len(), m, |r, col| rows[r].0[col]);
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    let svd = mat.clone().svd(true, true);
    let sol = svd.solve(&y, 1e-14).map_err(|e| Error::Inconsistent(e.to_string()))?;
    let residual = (&mat * &sol - &y).norm() / y.norm().max(f64::MIN_POSITIVE);
    if residual > tol {
        return Err(Error::Residual { residual });
    }
    let mut g: Vec<f64> = sol.iter().copied().collect();
    g.sort_by(f64::total_cmp);
    Ok(GainEstimate { gains_sq_sorted: g, n_users: n, residual })
}

/// Removes and returns the observation index whose drop is nearest to `target`.
fn take_nearest(remaining: &mut Vec<(f64, usize)>, target: f64) -> Option<usize> {
    if remaining.is_empty() {
        return None;
    }
    let pos = remaining.partition_point(|e| e.0 < target);
    let mut best = pos.min(remaining.len() - 1);
    if pos > 0 && (remaining[pos - 1].0 - target).abs() <= (remaining[best].0 - target).abs() {
        best = pos - 1;
    }
    Some(remaining.remove(best).1)
}

/// The literal system built from the n−1 largest levels (or, pairwise, the diagonal plus the
/// n−2 largest off-diagonals below the peak).
pub fn solve_top_levels(obs: &LevelObservation, case: Case, n: usize) -> Result<GainEstimate> {
    check_case(obs, case)?;
    if n < 2 {
        return Err(Error::InvalidArgument("n must be at least 2".into()));
    }
    let m = n - 1;
    let c = obs.beta_sq * obs.gamma;
    let top = mags_sq_top(&obs.alphabet_info);
    let total;
    let mut gains = Vec::with_capacity(m);
    if case == Case::Four {
        let off = obs.offdiag.as_ref().ok_or_else(|| Error::Inconsistent("missing off-diagonals".into()))?;
        if off.len() < m {
            return Err(Error::Inconsistent("too few off-diagonals".into()));
        }
        let diag = obs.levels[obs.levels.len() - 1];
        total = (diag - 1.0) / (c * top);
        for l in 1..m {
            gains.push((diag - 1.0 - off[off.len() - 1 - l]) / (2.0 * c * top));
        }
    } else {
        let lv = &obs.levels;
        if lv.len() < m {
            return Err(Error::Inconsistent("too few levels".into()));
        }
        let second = match &obs.alphabet_info {
            AlphabetInfo::Multi { magnitudes, .. } => {
                let b = magnitudes[magnitudes.len() - 2];
                b * b
            }
            _ => 0.0,
        };
        let peak = lv[lv.len() - 1];
        total = (peak - 1.0) / (c * top);
        for l in 1..m {
            gains.push((peak - lv[lv.len() - 1 - l]) / (c * (top - second)));
        }
    }
    let rest: f64 = gains.iter().sum();
    gains.push(total - rest);
    gains.sort_by(f64::total_cmp);
    Ok(GainEstimate { gains_sq_sorted: gains, n_users: n, residual: 0.0 })
}
