//! Sum multiplexing gain: exact enumeration, Monte Carlo, closed forms, the column-span
//! decomposition and deterministic code sets.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::{sample_signature_into, sign_class_vectors, sign_class_weights, SignatureDistribution};
use crate::numeric::Kahan;
use crate::sigspace::{rank_of_columns, spans};
use crate::{Error, Result, CODE_SET_CAP, ENUMERATION_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmgMethod {
    Exact,
    MonteCarlo,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmgResult {
    /// n · Pr{s ∉ csp(S)} / K.
    pub value: f64,
    /// Pr{s ∉ csp(S)} / K.
    pub per_user: f64,
    pub method: SmgMethod,
    pub stderr: f64,
}

impl SmgResult {
    pub fn from_span_avoid(p: f64, stderr: f64, n: usize, k: usize, method: SmgMethod) -> Self {
        let k = k as f64;
        Self { value: n as f64 * p / k, per_user: p / k, method, stderr: n as f64 * stderr / k }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoUserOptimum {
    pub k: usize,
    pub epsilon: f64,
    pub smg: f64,
}

/// Trials per independently seeded Monte-Carlo chunk.
const CHUNK: usize = 4096;

/// Pr{s₁ ∉ csp([s₂|…|sₙ])} by exact enumeration, with the default work cap.
pub fn span_avoid_exact(dist: &SignatureDistribution, n: usize) -> Result<f64> {
    Ok(span_masses(dist, n, ENUMERATION_CAP)?.avoid)
}

pub fn span_avoid_exact_capped(dist: &SignatureDistribution, n: usize, cap: u128) -> Result<f64> {
    Ok(span_masses(dist, n, cap)?.avoid)
}

struct SpanMasses {
    avoid: f64,
    in_span_not_column: f64,
}

/// Walks the multisets of n−1 interferer sign classes. Rank depends only on the set of
/// distinct nonzero classes, so results are cached per set.
fn span_masses(dist: &SignatureDistribution, n: usize, cap: u128) -> Result<SpanMasses> {
    if n < 2 {
        return Err(Error::InvalidArgument("n must be at least 2".into()));
    }
    let reps = sign_class_vectors(dist)?;
    let weights = sign_class_weights(dist, &reps)?;
    let k = dist.k();
    let classes: Vec<(Vec<i64>, f64)> = reps.into_iter().zip(weights).filter(|c| c.1 > 0.0).collect();
    let c = classes.len();
    let slots = n - 1;
    let size = multiset_count(c, slots);
    if size > cap {
        return Err(Error::EnumerationTooLarge { size, cap });
    }
    let is_zero: Vec<bool> = classes.iter().map(|(v, _)| v.iter().all(|&a| a == 0)).collect();
    let log_fact: Vec<f64> = (0..=slots).map(|m| ln_factorial(m as u64)).collect();

    let mut cache: HashMap<Vec<usize>, (f64, f64)> = HashMap::new();
    let mut avoid = Kahan::default();
    let mut not_col = Kahan::default();
    let mut idx = vec![0usize; slots];
    loop {
        // Multinomial weight of this multiset.
        let mut ln_w = log_fact[slots];
        let mut run = 1;
        for i in 0..slots {
            ln_w += classes[idx[i]].1.ln();
            if i + 1 < slots && idx[i + 1] == idx[i] {
                run += 1;
            } else {
                ln_w -= log_fact[run];
                run = 1;
            }
        }
        let w = ln_w.exp();
        let mut set: Vec<usize> = idx.iter().copied().filter(|&i| !is_zero[i]).collect();
        set.dedup();
        let (a, b) = *cache.entry(set).or_insert_with_key(|set| {
            let cols: Vec<&[i64]> = set.iter().map(|&i| classes[i].0.as_slice()).collect();
            let base = rank_of_columns(&cols, k);
            let mut a = Kahan::default();
            let mut b = Kahan::default();
            for (j, (v, ws)) in classes.iter().enumerate() {
                if is_zero[j] {
                    continue;
                }
                if !spans(v, &cols, k, base) {
                    a.add(*ws);
                } else if set.binary_search(&j).is_err() {
                    b.add(*ws);
                }
            }
            (a.value(), b.value())
        });
        avoid.add(w * a);
        not_col.add(w * b);

        // Next non-decreasing index sequence.
        let mut pos = slots;
        loop {
            if pos == 0 {
                return Ok(SpanMasses { avoid: avoid.value(), in_span_not_column: not_col.value() });
            }
            pos -= 1;
            if idx[pos] + 1 < c {
                let v = idx[pos] + 1;
                for x in idx.iter_mut().skip(pos) {
                    *x = v;
                }
                break;
            }
        }
    }
}

fn multiset_count(c: usize, slots: usize) -> u128 {
    // C(c + slots − 1, slots), saturating.
    let mut r: u128 = 1;
    for i in 0..slots as u128 {
        r = match r.checked_mul(c as u128 + i) {
            Some(x) => x / (i + 1),
            None => return u128::MAX,
        };
    }
    r
}

fn ln_factorial(m: u64) -> f64 {
    (2..=m).map(|i| (i as f64).ln()).sum()
}

/// Runs `trial` over `trials` draws in independently seeded chunks, returning per-chunk
/// sums of (x, x²) reduced in chunk order.
pub(crate) fn chunked_mc<R, F>(trials: usize, rng: &mut R, trial: F) -> (f64, f64)
where
    R: Rng + ?Sized,
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let chunks = trials.div_ceil(CHUNK);
    let seeds: Vec<u64> = (0..chunks).map(|_| rng.random()).collect();
    let parts: Vec<(f64, f64)> = seeds
        .par_iter()
        .enumerate()
        .map(|(ci, &seed)| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let len = CHUNK.min(trials - ci * CHUNK);
            let mut s = 0.0;
            let mut s2 = 0.0;
            for _ in 0..len {
                let x = trial(&mut r);
                s += x;
                s2 += x * x;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = parts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    let n = trials as f64;
    let mean = s / n;
    let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
    (mean, (var / n).sqrt())
}

fn draw_frame(dist: &SignatureDistribution, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<i64>> {
    let mut frame = vec![vec![0i64; dist.k()]; n];
    for v in frame.iter_mut() {
        sample_signature_into(dist, rng, v);
    }
    frame
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < 1000 {
        return Err(Error::InvalidArgument("Monte Carlo needs at least 1000 trials".into()));
    }
    Ok(())
}

/// Monte-Carlo estimate of the span-avoid probability with its binomial standard error.
pub fn span_avoid_monte_carlo<R: Rng + ?Sized>(
    dist: &SignatureDistribution,
    n: usize,
    trials: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    check_trials(trials)?;
    if n < 2 {
        return Err(Error::InvalidArgument("n must be at least 2".into()));
    }
    let k = dist.k();
    Ok(chunked_mc(trials, rng, |r| {
        let frame = draw_frame(dist, n, r);
        let cols: Vec<&[i64]> = frame[1..].iter().map(|c| c.as_slice()).collect();
        let base = rank_of_columns(&cols, k);
        f64::from(u8::from(!spans(&frame[0], &cols, k, base)))
    }))
}

/// E{rank([s|S])} − E{rank(S)} by Monte Carlo.
pub fn rank_gap_expectation<R: Rng + ?Sized>(
    dist: &SignatureDistribution,
    n: usize,
    trials: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    check_trials(trials)?;
    if n < 2 {
        return Err(Error::InvalidArgument("n must be at least 2".into()));
    }
    let k = dist.k();
    Ok(chunked_mc(trials, rng, |r| {
        let frame = draw_frame(dist, n, r);
        let all: Vec<&[i64]> = frame.iter().map(|c| c.as_slice()).collect();
        (rank_of_columns(&all, k) - rank_of_columns(&all[1..], k)) as f64
    }))
}

pub fn masking_only_smg(epsilon: f64, n: usize) -> SmgResult {
    let p = epsilon * (1.0 - epsilon).powi(n as i32 - 1);
    SmgResult::from_span_avoid(p, 0.0, n, 1, SmgMethod::ClosedForm)
}

/// (ε*, SMG*) = (1/n, (1 − 1/n)^{n−1}).
pub fn optimum_masking_only(n: usize) -> (f64, f64) {
    let e = 1.0 / n as f64;
    (e, (1.0 - e).powi(n as i32 - 1))
}

/// Two-user SMG for the {-1, +1} alphabet.
pub fn two_user_closed_form(epsilon: f64, nu: f64, k: usize) -> SmgResult {
    let eb = 1.0 - epsilon;
    let nb = 1.0 - nu;
    let ki = k as i32;
    let smg = (2.0 / k as f64)
        * (1.0 - eb.powi(ki) + 2.0 * eb.powi(2 * ki)
            - (eb * eb + epsilon * epsilon * (nu * nu + nb * nb)).powi(ki)
            - (eb * eb + 2.0 * epsilon * epsilon * nu * nb).powi(ki));
    SmgResult { value: smg, per_user: smg / 2.0, method: SmgMethod::ClosedForm, stderr: 0.0 }
}

/// Maximizes the two-user SMG over K ∈ 1..=10 and ε at ν = ½.
pub fn optimize_two_user() -> TwoUserOptimum {
    let mut best = TwoUserOptimum { k: 1, epsilon: 1.0, smg: f64::NEG_INFINITY };
    for k in 1..=10 {
        let f = |e: f64| two_user_closed_form(e, 0.5, k).value;
        let (e, v) = maximize_1d(f, 1e-4, 1.0, 10_000);
        if v > best.smg {
            best = TwoUserOptimum { k, epsilon: e, smg: v };
        }
    }
    best
}

/// Grid search on [lo, hi] followed by golden-section refinement around the best point.
pub(crate) fn maximize_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64, steps: usize) -> (f64, f64) {
    let h = (hi - lo) / steps as f64;
    let at = |i: usize| if i == steps { hi } else { lo + h * i as f64 };
    let mut bi = 0;
    let mut bv = f64::NEG_INFINITY;
    for i in 0..=steps {
        let v = f(at(i));
        if v > bv {
            bv = v;
            bi = i;
        }
    }
    let mut a = (lo + h * (bi as f64 - 1.0)).max(lo);
    let mut b = (lo + h * (bi as f64 + 1.0)).min(hi);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..80 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (a + b);
    let v = f(x);
    let mut cand = [(at(bi), bv), (x, v)];
    cand.sort_by(|p, q| q.1.total_cmp(&p.1));
    cand[0]
}

fn check_colspan_ensemble(dist: &SignatureDistribution) -> Result<f64> {
    match dist.nu() {
        Some(nu) if dist.epsilon() == 1.0 => Ok(nu),
        _ => Err(Error::Unsupported(
            "column-span decomposition needs epsilon = 1 and the alphabet {-1, +1}".into(),
        )),
    }
}

/// Pr{s ∉ col(S) ∪ col(−S)} in closed form.
pub fn colspan_first_term(dist: &SignatureDistribution, n: usize) -> Result<f64> {
    let nu = check_colspan_ensemble(dist)?;
    let nb = 1.0 - nu;
    let k = dist.k() as i32;
    let mut acc = Kahan::default();
    for j in 0..=k {
        let p = nu.powi(j) * nb.powi(k - j);
        let q = nb.powi(j) * nu.powi(k - j);
        acc.add(crate::codebook::binomial(k as u64, j as u64) * p * (1.0 - p - q).powi(n as i32 - 1));
    }
    Ok(acc.value())
}

/// (Pr{s ∉ col(S) ∪ col(−S)}, Pr{s ∉ col(S) ∪ col(−S), s ∈ csp(S)}); their difference is the
/// span-avoid probability. The second term is enumerated exactly.
pub fn colspan_decomposition(dist: &SignatureDistribution, n: usize) -> Result<(f64, f64)> {
    let first = colspan_first_term(dist, n)?;
    let m = span_masses(dist, n, ENUMERATION_CAP)?;
    Ok((first, m.in_span_not_column))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColspanEstimate {
    pub first: f64,
    pub second: f64,
    pub second_stderr: f64,
    pub difference: f64,
    pub difference_stderr: f64,
}

/// Monte-Carlo variant of [`colspan_decomposition`] for sizes beyond enumeration.
pub fn colspan_decomposition_mc<R: Rng + ?Sized>(
    dist: &SignatureDistribution,
    n: usize,
    trials: usize,
    rng: &mut R,
) -> Result<ColspanEstimate> {
    check_trials(trials)?;
    let first = colspan_first_term(dist, n)?;
    let k = dist.k();
    let seed: u64 = rng.random();
    let outcome = |r: &mut ChaCha8Rng| -> (bool, bool) {
        let frame = draw_frame(dist, n, r);
        let s = &frame[0];
        let cols: Vec<&[i64]> = frame[1..].iter().map(|c| c.as_slice()).collect();
        let base = rank_of_columns(&cols, k);
        let in_span = spans(s, &cols, k, base);
        let neg: Vec<i64> = s.iter().map(|a| -a).collect();
        let is_col = cols.iter().any(|c| *c == s.as_slice() || *c == neg.as_slice());
        (!in_span, in_span && !is_col)
    };
    let (d, d_se) = chunked_mc(trials, &mut ChaCha8Rng::seed_from_u64(seed), |r| f64::from(u8::from(outcome(r).0)));
    let (s2, s2_se) = chunked_mc(trials, &mut ChaCha8Rng::seed_from_u64(seed), |r| f64::from(u8::from(outcome(r).1)));
    Ok(ColspanEstimate { first, second: s2, second_stderr: s2_se, difference: d, difference_stderr: d_se })
}

/// Number of maps from n−1 users onto exactly r codes, by the covering recursion.
pub fn rho(r: u32, n: u32) -> Result<u128> {
    if r == 0 || n < 2 {
        return Err(Error::InvalidArgument("rho needs r >= 1 and n >= 2".into()));
    }
    let mut table: Vec<u128> = Vec::with_capacity(r as usize + 1);
    table.push(0);
    for q in 1..=r {
        let mut v = (q as u128).checked_pow(n - 1).ok_or(Error::Overflow("rho"))?;
        for qp in 1..q {
            let t = binom_u128(q as u128, qp as u128)?
                .checked_mul(table[(q - qp) as usize])
                .ok_or(Error::Overflow("rho"))?;
            v = v.checked_sub(t).ok_or(Error::Overflow("rho"))?;
        }
        table.push(v);
    }
    Ok(table[r as usize])
}

pub(crate) fn binom_u128(n: u128, k: u128) -> Result<u128> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c.checked_mul(n - i).ok_or(Error::Overflow("binomial"))? / (i + 1);
    }
    Ok(c)
}

/// Exact span-avoid probability for users drawing uniformly from a fixed code set,
/// as (Σ_l Σ_r ω_{l,r} ρ_{r,n}, L^n).
pub fn code_set_span_avoid_count(codes: &[Vec<i64>], n: usize) -> Result<(u128, u128)> {
    let l = codes.len();
    if l == 0 || l > CODE_SET_CAP {
        return Err(Error::InvalidArgument(format!("code set size must be in 1..={CODE_SET_CAP}")));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("n must be at least 2".into()));
    }
    let k = codes[0].len();
    if codes.iter().any(|c| c.len() != k || c.iter().all(|&a| a == 0)) {
        return Err(Error::InvalidVector("codes must be nonzero vectors of one length".into()));
    }
    let ranks: Vec<u8> = (0u32..(1u32 << l))
        .into_par_iter()
        .map(|mask| {
            let cols: Vec<&[i64]> = (0..l).filter(|i| mask >> i & 1 == 1).map(|i| codes[i].as_slice()).collect();
            rank_of_columns(&cols, k) as u8
        })
        .collect();
    let rhos: Vec<u128> = (0..l as u32).map(|r| if r == 0 { Ok(0) } else { rho(r, n as u32) }).collect::<Result<_>>()?;
    let mut total: u128 = 0;
    for li in 0..l {
        let bit = 1u32 << li;
        for mask in 0u32..(1u32 << l) {
            if mask & bit != 0 || mask == 0 {
                continue;
            }
            if ranks[(mask | bit) as usize] > ranks[mask as usize] {
                let r = mask.count_ones() as usize;
                total = total.checked_add(rhos[r]).ok_or(Error::Overflow("code set count"))?;
            }
        }
    }
    let denom = (l as u128).checked_pow(n as u32).ok_or(Error::Overflow("code set count"))?;
    Ok((total, denom))
}

pub fn code_set_smg(codes: &[Vec<i64>], n: usize) -> Result<SmgResult> {
    let (num, den) = code_set_span_avoid_count(codes, n)?;
    let k = codes[0].len();
    Ok(SmgResult::from_span_avoid(num as f64 / den as f64, 0.0, n, k, SmgMethod::Exact))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bin(nu: f64, eps: f64, k: usize) -> SignatureDistribution {
        SignatureDistribution::binary(nu, eps, k).unwrap()
    }

    #[test]
    fn exact_k1_masking_only() {
        for &eps in &[0.1, 0.5, 0.9, 1.0] {
            for n in 2..6 {
                let p = span_avoid_exact(&bin(0.5, eps, 1), n).unwrap();
                assert!((p - eps * (1.0 - eps).powi(n as i32 - 1)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn exact_two_user_k2() {
        assert!((span_avoid_exact(&bin(0.5, 1.0, 2), 2).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn exact_matches_two_user_closed_form() {
        for &(eps, nu, k) in &[(0.3, 0.5, 1), (0.7, 0.2, 2), (0.756, 0.5, 2), (1.0, 0.9, 3), (0.4, 0.35, 4)] {
            let p = span_avoid_exact(&bin(nu, eps, k), 2).unwrap();
            let c = two_user_closed_form(eps, nu, k);
            assert!((SmgResult::from_span_avoid(p, 0.0, 2, k, SmgMethod::Exact).value - c.value).abs() < 1e-12);
        }
    }

    #[test]
    fn enumeration_cap() {
        let d = bin(0.5, 0.5, 6);
        assert!(matches!(span_avoid_exact_capped(&d, 6, 1000), Err(Error::EnumerationTooLarge { .. })));
    }

    #[test]
    fn masking_only_examples() {
        let r = masking_only_smg(0.5, 2);
        assert_eq!((r.per_user, r.value), (0.25, 0.5));
        assert_eq!(optimum_masking_only(2), (0.5, 0.5));
        assert!((optimum_masking_only(100).1 - (-1f64).exp()).abs() < 0.01);
    }

    #[test]
    fn two_user_examples() {
        assert!((two_user_closed_form(1.0, 0.5, 2).value - 0.5).abs() < 1e-15);
        let o = optimize_two_user();
        assert_eq!(o.k, 2);
        assert!((o.epsilon - 0.756).abs() < 0.002);
        assert!((o.smg - 0.7091).abs() < 0.0005);
    }

    #[test]
    fn half_maximizes_over_nu() {
        for &(eps, k) in &[(0.5, 1), (0.756, 2), (1.0, 3), (0.3, 4)] {
            let at_half = two_user_closed_form(eps, 0.5, k).value;
            for i in 0..=100 {
                assert!(two_user_closed_form(eps, i as f64 / 100.0, k).value <= at_half + 1e-15);
            }
        }
    }

    #[test]
    fn rho_examples() {
        for n in 2..10 {
            assert_eq!(rho(1, n).unwrap(), 1);
        }
        assert_eq!(rho(2, 3).unwrap(), 2);
        assert_eq!(rho(3, 3).unwrap(), 0);
        assert_eq!(rho(3, 5).unwrap(), 36);
    }

    #[test]
    fn colspan_n2_second_term_vanishes() {
        for &nu in &[0.2, 0.5, 0.8] {
            let d = bin(nu, 1.0, 3);
            let (first, second) = colspan_decomposition(&d, 2).unwrap();
            assert_eq!(second, 0.0);
            assert!((first - span_avoid_exact(&d, 2).unwrap()).abs() < 1e-14);
        }
        assert!(colspan_decomposition(&bin(0.5, 0.5, 2), 2).is_err());
    }

    #[test]
    fn independent_codes() {
        let codes: Vec<Vec<i64>> = (0..3).map(|i| (0..3).map(|j| i64::from(i == j)).collect()).collect();
        let r = code_set_smg(&codes, 3).unwrap();
        assert!((r.value - (2.0f64 / 3.0).powi(2)).abs() < 1e-15);
    }
}
