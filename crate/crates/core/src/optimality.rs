//! Masking versus spreading with masking for two users: the masking-capacity pre-log bound,
//! optimal Gaussian powers, and the ε ranges where spreading wins.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codebook::SignatureDistribution;
use crate::design::epsilon_hat;
use crate::rate::{scheme_a_rate, scheme_b_rate, snr_scaling_slope, ChannelDraw};
use crate::{db_to_linear, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonInterval {
    pub lo: f64,
    pub hi: f64,
    pub alphabet_size: usize,
}

/// Pre-log of the masking-capacity upper bound.
pub fn masking_prelog_upper(epsilon: f64) -> f64 {
    if epsilon >= 0.5 {
        epsilon * epsilon
    } else {
        epsilon * (1.0 - epsilon)
    }
}

/// Power v of the Gaussian input maximizing the difference-of-entropies term.
pub fn optimal_gaussian_power(epsilon: f64, h11: f64, h21: f64, gamma: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1.0) || !(h11 > 0.0 && h21 > 0.0) || gamma.is_nan() || gamma <= 0.0 {
        return Err(Error::InvalidArgument("need epsilon in (0,1] and positive gains and gamma".into()));
    }
    let eb = 1.0 - epsilon;
    let ratio = h11 / h21;
    let thr = (epsilon / eb).sqrt();
    if epsilon >= 0.5 && ratio < thr {
        return Ok(0.0);
    }
    if epsilon > 0.5 && ratio > thr {
        let v = epsilon * eb / (2.0 * epsilon - 1.0) * (1.0 / (h21 * h21) - epsilon / (eb * h11 * h11));
        if gamma > epsilon * v {
            return Ok(v);
        }
        return Err(Error::CaseNotCovered(format!("gamma {gamma} below the interior threshold {}", epsilon * v)));
    }
    if epsilon <= 0.5 && ratio > 1.0 {
        return Ok(gamma / epsilon);
    }
    Err(Error::CaseNotCovered(format!("epsilon {epsilon}, h11/h21 {ratio}")))
}

/// Two-user span-avoid probability at K = 2 for a uniform alphabet of size 2 or 4.
pub fn span_avoid_k2(epsilon: f64, alphabet_size: usize) -> Result<f64> {
    let e = epsilon;
    let eb = 1.0 - e;
    let last = match alphabet_size {
        2 => e.powi(4) / 2.0,
        4 => 3.0 * e.powi(4) / 16.0,
        _ => return Err(Error::Unsupported("alphabet size must be 2 or 4".into())),
    };
    Ok(1.0 - eb * eb - 2.0 * (e * eb).powi(2) - last)
}

/// ½·span_avoid_k2(ε) − max{ε², εε̄}: positive where spreading plus masking has the
/// larger pre-log.
pub fn spreading_margin(epsilon: f64, alphabet_size: usize) -> Result<f64> {
    let e = epsilon;
    Ok(0.5 * span_avoid_k2(e, alphabet_size)? - (e * e).max(e * (1.0 - e)))
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if (f(m) > 0.0) == (fa > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

type Poly = fn(f64) -> f64;

/// Polynomials whose roots bound the ε range, on [0, ½) and [½, 1].
pub fn interval_polynomials(alphabet_size: usize) -> Result<(Poly, Poly)> {
    match alphabet_size {
        2 => Ok((|e| 5.0 * e * e - 8.0 * e + 2.0, |e| 5.0 * e.powi(3) - 8.0 * e * e + 10.0 * e - 4.0)),
        4 => Ok((|e| 35.0 * e * e - 64.0 * e + 16.0, |e| 35.0 * e.powi(3) - 64.0 * e * e + 80.0 * e - 32.0)),
        _ => Err(Error::Unsupported("alphabet size must be 2 or 4".into())),
    }
}

pub fn beating_interval(alphabet_size: usize) -> Result<EpsilonInterval> {
    let (low, high) = interval_polynomials(alphabet_size)?;
    Ok(EpsilonInterval { lo: bisect(low, 0.0, 0.5), hi: bisect(high, 0.5, 1.0), alphabet_size })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrelogRow {
    pub gamma_db: f64,
    pub epsilon_hat: f64,
    pub in_interval: bool,
    pub slope_spread_mask: f64,
    pub prelog_upper: f64,
    pub spreading_wins: bool,
    pub scheme_b_slope: f64,
    /// |scheme_b_slope − ε̂(1−ε̂)| ≤ 0.02, checked only for ε̂ ≤ ½.
    pub masking_slope_ok: Option<bool>,
    /// Finite-SNR rates at 60 dB with unit gains (reported only).
    pub rate_spread_mask_60db: f64,
    pub rate_masking_60db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrelogReport {
    pub interval: EpsilonInterval,
    pub rows: Vec<PrelogRow>,
}

impl PrelogReport {
    pub fn all_hold(&self) -> bool {
        self.rows.iter().all(|r| r.in_interval && r.spreading_wins && r.masking_slope_ok.unwrap_or(true))
    }
}

/// For each SNR (dB): ε̂, its membership in the binary interval, and the pre-log comparison.
pub fn prelog_advantage_check<R: Rng + ?Sized>(gamma_db_list: &[f64], mc_draws: usize, rng: &mut R) -> Result<PrelogReport> {
    let interval = beating_interval(2)?;
    let unit = ChannelDraw::new(1.0, vec![1.0])?;
    let (lo, hi): (f64, f64) = (1e8, 1e11);
    let span = hi.log2() - lo.log2();
    let mut rows = Vec::with_capacity(gamma_db_list.len());
    for &db in gamma_db_list {
        if db < 30.0 {
            return Err(Error::InvalidArgument("pre-log check needs gamma >= 30 dB".into()));
        }
        let e = epsilon_hat(db_to_linear(db), mc_draws, rng)?;
        let slope = snr_scaling_slope(&SignatureDistribution::binary(0.5, e, 2)?, 2, &unit, lo, hi)?;
        let b_slope = (scheme_b_rate(e, hi, 1.0, 1.0).rate - scheme_b_rate(e, lo, 1.0, 1.0).rate) / span;
        let prelog = masking_prelog_upper(e);
        rows.push(PrelogRow {
            gamma_db: db,
            epsilon_hat: e,
            in_interval: interval.lo < e && e < interval.hi,
            slope_spread_mask: slope,
            prelog_upper: prelog,
            spreading_wins: slope > prelog,
            scheme_b_slope: b_slope,
            masking_slope_ok: (e <= 0.5).then(|| (b_slope - e * (1.0 - e)).abs() <= 0.02),
            rate_spread_mask_60db: scheme_a_rate(e, 1e6, 1.0, 1.0).rate,
            rate_masking_60db: scheme_b_rate(e, 1e6, 1.0, 1.0).rate,
        });
    }
    Ok(PrelogReport { interval, rows })
}
