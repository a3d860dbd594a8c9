//! Achievable-rate lower bound, its high-SNR decomposition, closed forms for the two-user
//! schemes, and the Gaussian-bounding baseline.

use nalgebra::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codebook::{
    gram_entropy, normalization, sample_signature_into, sign_class_vectors, sign_class_weights, GramMethod,
    SignatureDistribution, SupportAtom,
};
use crate::numeric::{h2, log2_1p_exp2, log2det_identity_plus, Moments};
use crate::smg::{span_avoid_exact, span_avoid_monte_carlo};
use crate::{Error, Result, ENUMERATION_CAP};

/// Squared channel magnitudes seen by one receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDraw {
    pub own_gain_sq: f64,
    pub cross_gains_sq: Vec<f64>,
}

impl ChannelDraw {
    pub fn new(own_gain_sq: f64, cross_gains_sq: Vec<f64>) -> Result<Self> {
        let ok = |g: f64| g.is_finite() && g >= 0.0;
        if !ok(own_gain_sq) || !cross_gains_sq.iter().all(|&g| ok(g)) {
            return Err(Error::InvalidArgument("channel gains must be finite and nonnegative".into()));
        }
        Ok(Self { own_gain_sq, cross_gains_sq })
    }

    /// Reduces complex gains to squared magnitudes.
    pub fn from_complex(own: Complex<f64>, cross: &[Complex<f64>]) -> Result<Self> {
        Self::new(own.norm_sqr(), cross.iter().map(|h| h.norm_sqr()).collect())
    }

    /// Number of users, the receiver's own transmitter included.
    pub fn n(&self) -> usize {
        self.cross_gains_sq.len() + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBreakdown {
    pub rate_bits_per_slot: f64,
    pub mg: f64,
    pub ief_bits_per_slot: f64,
    pub csf_bits_per_slot: f64,
    pub gamma: f64,
    /// Monte-Carlo standard error of the rate (0 in exact mode).
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Exact,
    Sampled { trials: usize, seed: u64 },
}

/// Closed-form rate with its pre-log and interference-entropy terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeRate {
    pub rate: f64,
    pub mg: f64,
    pub ief: f64,
}

/// E_S[log2 det(I + c P_s A P_s) − log2 det(I + c A)] for every sign class s, tabulated
/// over interferer configurations. A configuration is either an ordered tuple of classes
/// (exact) or a sampled frame (sampled).
///
/// The table does not depend on the pmf, so one table serves a whole sweep over pmfs of
/// the same alphabet, ε and K.
pub(crate) struct DetTable {
    classes: usize,
    configs: usize,
    /// diff[s * configs + t]
    diff: Vec<f64>,
    /// Class indices per configuration in exact mode, used to weight tuples.
    tuple_classes: Option<Vec<u32>>,
    slots: usize,
}

fn zero(v: &[i64]) -> bool {
    v.iter().all(|&a| a == 0)
}

/// Fills `diff_out[s]` with num − den for interference covariance `a` (k×k row-major).
fn diffs_for(a: &[f64], reps: &[Vec<i64>], k: usize, scratch: &mut Vec<f64>, diff_out: &mut [f64]) {
    scratch.clear();
    scratch.extend_from_slice(a);
    let den = log2det_identity_plus(scratch, k);
    let mut au = vec![0.0; k];
    for (s, v) in reps.iter().enumerate() {
        if zero(v) {
            diff_out[s] = 0.0;
            continue;
        }
        let nrm = v.iter().map(|&x| (x * x) as f64).sum::<f64>().sqrt();
        let u: Vec<f64> = v.iter().map(|&x| x as f64 / nrm).collect();
        for i in 0..k {
            au[i] = (0..k).map(|j| a[i * k + j] * u[j]).sum();
        }
        let uau: f64 = (0..k).map(|i| u[i] * au[i]).sum();
        scratch.clear();
        for i in 0..k {
            for j in 0..k {
                scratch.push(a[i * k + j] - u[i] * au[j] - au[i] * u[j] + uau * u[i] * u[j]);
            }
        }
        diff_out[s] = log2det_identity_plus(scratch, k) - den;
    }
}

fn add_outer(a: &mut [f64], v: &[i64], w: f64, k: usize) {
    for i in 0..k {
        if v[i] == 0 {
            continue;
        }
        for j in 0..k {
            a[i * k + j] += w * (v[i] * v[j]) as f64;
        }
    }
}

impl DetTable {
    pub(crate) fn exact(reps: &[Vec<i64>], k: usize, cross: &[f64], c: f64) -> Result<Self> {
        let classes = reps.len();
        let slots = cross.len();
        let configs = (classes as u128).checked_pow(slots as u32).unwrap_or(u128::MAX);
        let work = configs.saturating_mul(classes as u128);
        if work > ENUMERATION_CAP {
            return Err(Error::EnumerationTooLarge { size: work, cap: ENUMERATION_CAP });
        }
        let configs = configs as usize;
        let mut diff = vec![0.0; classes * configs];
        let mut tuple_classes = vec![0u32; configs * slots];
        let mut idx = vec![0usize; slots];
        let mut a = vec![0.0; k * k];
        let mut scratch = Vec::with_capacity(k * k);
        let mut col = vec![0.0; classes];
        for t in 0..configs {
            a.iter_mut().for_each(|x| *x = 0.0);
            for (j, &ci) in idx.iter().enumerate() {
                tuple_classes[t * slots + j] = ci as u32;
                add_outer(&mut a, &reps[ci], c * cross[j], k);
            }
            diffs_for(&a, reps, k, &mut scratch, &mut col);
            for s in 0..classes {
                diff[s * configs + t] = col[s];
            }
            for j in (0..slots).rev() {
                idx[j] += 1;
                if idx[j] < classes {
                    break;
                }
                idx[j] = 0;
            }
        }
        Ok(Self { classes, configs, diff, tuple_classes: Some(tuple_classes), slots })
    }

    pub(crate) fn sampled(
        dist: &SignatureDistribution,
        reps: &[Vec<i64>],
        cross: &[f64],
        c: f64,
        trials: usize,
        seed: u64,
    ) -> Self {
        let k = dist.k();
        let classes = reps.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut diff = vec![0.0; classes * trials];
        let mut a = vec![0.0; k * k];
        let mut v = vec![0i64; k];
        let mut scratch = Vec::with_capacity(k * k);
        let mut col = vec![0.0; classes];
        for t in 0..trials {
            a.iter_mut().for_each(|x| *x = 0.0);
            for &g in cross {
                sample_signature_into(dist, &mut rng, &mut v);
                add_outer(&mut a, &v, c * g, k);
            }
            diffs_for(&a, reps, k, &mut scratch, &mut col);
            for s in 0..classes {
                diff[s * trials + t] = col[s];
            }
        }
        Self { classes, configs: trials, diff, tuple_classes: None, slots: cross.len() }
    }

    /// Probability of each configuration under the given class weights.
    pub(crate) fn config_weights(&self, weights: &[f64]) -> Vec<f64> {
        match &self.tuple_classes {
            None => vec![1.0 / self.configs as f64; self.configs],
            Some(tc) => (0..self.configs)
                .map(|t| tc[t * self.slots..(t + 1) * self.slots].iter().map(|&ci| weights[ci as usize]).product())
                .collect(),
        }
    }

    pub(crate) fn expected_diff(&self, s: usize, cw: &[f64]) -> f64 {
        let row = &self.diff[s * self.configs..(s + 1) * self.configs];
        row.iter().zip(cw).map(|(d, w)| d * w).sum()
    }

    fn sample_diff(&self, s: usize, t: usize) -> f64 {
        self.diff[s * self.configs + t]
    }
}

/// Everything needed to evaluate the bound for one (ensemble, channel, γ).
pub(crate) struct RateParts {
    pub reps: Vec<Vec<i64>>,
    pub norms_sq: Vec<f64>,
    pub table: DetTable,
    pub log2_gain: f64,
}

impl RateParts {
    pub(crate) fn build(
        dist: &SignatureDistribution,
        channel: &ChannelDraw,
        gamma: f64,
        mode: EvalMode,
    ) -> Result<Self> {
        let reps = sign_class_vectors(dist)?;
        let c = normalization(dist).beta_sq * gamma;
        let table = match mode {
            EvalMode::Exact => DetTable::exact(&reps, dist.k(), &channel.cross_gains_sq, c)?,
            EvalMode::Sampled { trials, seed } => {
                if trials == 0 {
                    return Err(Error::InvalidArgument("sampled mode needs at least one trial".into()));
                }
                DetTable::sampled(dist, &reps, &channel.cross_gains_sq, c, trials, seed)
            }
        };
        let norms_sq = reps.iter().map(|v| v.iter().map(|&x| (x * x) as f64).sum()).collect();
        Ok(Self { reps, norms_sq, table, log2_gain: (channel.own_gain_sq * c).log2() })
    }

    pub(crate) fn log2_varrho(&self, s: usize, cw: &[f64]) -> f64 {
        self.log2_gain + self.norms_sq[s].log2() + self.table.expected_diff(s, cw)
    }

    /// (rate, stderr) for class weights `w` and total interference entropy `h_int`.
    pub(crate) fn rate(&self, w: &[f64], h_int: f64, k: usize) -> (f64, f64) {
        if self.log2_gain == f64::NEG_INFINITY {
            return (0.0, 0.0);
        }
        let cw = self.table.config_weights(w);
        let mut total = 0.0;
        let mut slopes = vec![0.0; self.reps.len()];
        for s in 0..self.reps.len() {
            if w[s] == 0.0 || self.norms_sq[s] == 0.0 {
                continue;
            }
            let x = self.log2_varrho(s, &cw) - h_int;
            total += w[s] * log2_1p_exp2(x);
            slopes[s] = w[s] / (1.0 + (-x).exp2());
        }
        let kf = k as f64;
        let stderr = if self.table.tuple_classes.is_none() {
            // Delta method over sampled frames.
            let mut m = Moments::default();
            for t in 0..self.table.configs {
                let psi: f64 = (0..self.table.classes).map(|s| slopes[s] * self.table.sample_diff(s, t)).sum();
                m.push(psi);
            }
            m.stderr() / kf
        } else {
            0.0
        };
        (total / kf, stderr)
    }
}

fn check_inputs(n: usize, channel: &ChannelDraw, gamma: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidArgument("gamma must be finite and positive".into()));
    }
    if n < 2 || channel.n() != n {
        return Err(Error::InvalidArgument(format!(
            "channel has {} cross gains but n = {n}",
            channel.cross_gains_sq.len()
        )));
    }
    Ok(())
}

/// Gram entropy by closed form when available, otherwise by enumeration.
pub(crate) fn gram_entropy_auto(dist: &SignatureDistribution) -> Result<f64> {
    gram_entropy(dist, GramMethod::ClosedForm).or_else(|_| gram_entropy(dist, GramMethod::BruteForce))
}

fn class_of(reps: &[Vec<i64>], v: &[i64]) -> Option<usize> {
    let flip = v.iter().find(|&&a| a != 0).is_some_and(|&a| a < 0);
    let canon: Vec<i64> = v.iter().map(|&a| if flip { -a } else { a }).collect();
    reps.iter().position(|r| *r == canon)
}

pub fn log2_varrho(
    dist: &SignatureDistribution,
    n: usize,
    channel: &ChannelDraw,
    s: &SupportAtom,
    gamma: f64,
    mode: EvalMode,
) -> Result<f64> {
    check_inputs(n, channel, gamma)?;
    if zero(&s.vector) {
        return Err(Error::InvalidVector("s must be nonzero".into()));
    }
    let parts = RateParts::build(dist, channel, gamma, mode)?;
    let idx = class_of(&parts.reps, &s.vector)
        .ok_or_else(|| Error::InvalidVector("s is not a signature of this ensemble".into()))?;
    let w = sign_class_weights(dist, &parts.reps)?;
    let cw = parts.table.config_weights(&w);
    Ok(parts.log2_varrho(idx, &cw))
}

/// ϱ(γ; s): effective SINR of signature s after projecting out the interference subspace.
pub fn varrho(
    dist: &SignatureDistribution,
    n: usize,
    channel: &ChannelDraw,
    s: &SupportAtom,
    gamma: f64,
    mode: EvalMode,
) -> Result<f64> {
    log2_varrho(dist, n, channel, s, gamma, mode).map(f64::exp2)
}

pub fn rate_lower_bound(
    dist: &SignatureDistribution,
    n: usize,
    channel: &ChannelDraw,
    gamma: f64,
    mode: EvalMode,
) -> Result<RateBreakdown> {
    check_inputs(n, channel, gamma)?;
    let parts = RateParts::build(dist, channel, gamma, mode)?;
    let w = sign_class_weights(dist, &parts.reps)?;
    let h = gram_entropy_auto(dist)?;
    let (rate, stderr) = parts.rate(&w, (n - 1) as f64 * h, dist.k());
    let p_avoid = match mode {
        EvalMode::Exact => span_avoid_exact(dist, n)?,
        EvalMode::Sampled { trials, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_5a11);
            span_avoid_monte_carlo(dist, n, trials.max(1000), &mut rng)?.0
        }
    };
    let k = dist.k() as f64;
    let p_active = 1.0 - (1.0 - dist.epsilon()).powi(dist.k() as i32);
    let mg = p_avoid / k;
    let ief = p_active * (n - 1) as f64 * h / k;
    Ok(RateBreakdown {
        rate_bits_per_slot: rate,
        mg,
        ief_bits_per_slot: ief,
        csf_bits_per_slot: rate - mg * gamma.log2() + ief,
        gamma,
        stderr,
    })
}

/// Finite-difference slope of the bound against log2 γ.
pub fn snr_scaling_slope(
    dist: &SignatureDistribution,
    n: usize,
    channel: &ChannelDraw,
    gamma_lo: f64,
    gamma_hi: f64,
) -> Result<f64> {
    if !(gamma_lo > 0.0 && gamma_hi >= 100.0 * gamma_lo) {
        return Err(Error::InvalidArgument("gamma_hi must be at least 100 * gamma_lo".into()));
    }
    check_inputs(n, channel, gamma_lo)?;
    let w = sign_class_weights(dist, &sign_class_vectors(dist)?)?;
    let h = (n - 1) as f64 * gram_entropy_auto(dist)?;
    let at = |g: f64| -> Result<f64> {
        Ok(RateParts::build(dist, channel, g, EvalMode::Exact)?.rate(&w, h, dist.k()).0)
    };
    Ok((at(gamma_hi)? - at(gamma_lo)?) / (gamma_hi.log2() - gamma_lo.log2()))
}

/// Two users, K = 2, alphabet {-1, +1} with ν = ½.
pub fn scheme_a_rate(epsilon: f64, gamma: f64, h11_sq: f64, h21_sq: f64) -> SchemeRate {
    let e = epsilon;
    let eb = 1.0 - e;
    let pre = (-2.0 * h2(e) - e * e).exp2();
    let x = h21_sq * gamma;
    let single = pre * h11_sq * gamma
        / (2.0 * e * (1.0 + x / (2.0 * e)).powf(e * eb - e * e) * (1.0 + x / e).powf(e * e));
    let double = pre * h11_sq * gamma * (1.0 + x / (4.0 * e)).powf(2.0 * e * eb)
        / (e * (1.0 + x / (2.0 * e)).powf(2.0 * e * eb) * (1.0 + x / e).powf(e * e / 2.0));
    let rate = e * eb * single.ln_1p() / std::f64::consts::LN_2
        + e * e / 2.0 * double.ln_1p() / std::f64::consts::LN_2;
    let mg = 0.5 - eb * eb / 2.0 - (e * eb).powi(2) - e.powi(4) / 4.0;
    let ief = e * (h2(e) + e * e / 2.0);
    SchemeRate { rate, mg, ief }
}

/// Two users, K = 1: masking only.
pub fn scheme_b_rate(epsilon: f64, gamma: f64, h11_sq: f64, h21_sq: f64) -> SchemeRate {
    let e = epsilon;
    let sinr = (-h2(e)).exp2() * h11_sq * gamma / (e * (1.0 + h21_sq * gamma / e).powf(e));
    SchemeRate { rate: e * sinr.ln_1p() / std::f64::consts::LN_2, mg: e * (1.0 - e), ief: e * h2(e) }
}

/// Treat-interference-as-Gaussian bound for ε = 1 and the alphabet {-1, +1} with Pr{+1} = ν.
pub fn gaussian_bound_rate(nu: f64, k: usize, n: usize, channel: &ChannelDraw, gamma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&nu) || k == 0 {
        return Err(Error::InvalidArgument("need nu in [0,1] and K >= 1".into()));
    }
    if n < 2 || channel.n() != n || !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidArgument("channel size must match n and gamma must be positive".into()));
    }
    let kf = k as f64;
    let m2 = (2.0 * nu - 1.0).powi(2);
    let c = 1.0 - m2;
    let cross: f64 = channel.cross_gains_sq.iter().sum();
    let all = cross + channel.own_gain_sq;
    let first = (1.0 + (c * gamma * channel.own_gain_sq / kf) / (1.0 + c * gamma * cross / kf)).log2();
    let num = 1.0 + m2 * gamma * all / (1.0 + c * gamma * all / kf);
    let den = 1.0 + m2 * gamma * cross / (1.0 + c * gamma * cross / kf);
    Ok(first + (num / den).log2() / kf)
}
