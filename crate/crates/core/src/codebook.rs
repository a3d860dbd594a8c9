//! Signature ensembles: support enumeration, sampling and gram-matrix entropy.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numeric::{h2, xlog2x_neg, Kahan};
use crate::{Error, Result, SUPPORT_CAP};

/// The ensemble a signature vector is drawn from.
///
/// The alphabet is stored in ascending order with the pmf permuted to match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureDistribution {
    alphabet: Vec<i64>,
    pmf: Vec<f64>,
    epsilon: f64,
    k: usize,
}

/// One realizable signature vector with its exact probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportAtom {
    pub vector: Vec<i64>,
    pub prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerNormalization {
    pub beta_sq: f64,
    pub expected_norm_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GramMethod {
    ClosedForm,
    BruteForce,
}

impl SignatureDistribution {
    pub fn new(alphabet: Vec<i64>, pmf: Vec<f64>, epsilon: f64, k: usize) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidDistribution(m));
        if alphabet.is_empty() {
            return bad("alphabet is empty".into());
        }
        if alphabet.len() != pmf.len() {
            return bad(format!(
                "alphabet has {} symbols but pmf has {} entries",
                alphabet.len(),
                pmf.len()
            ));
        }
        let mut pairs: Vec<(i64, f64)> = alphabet.into_iter().zip(pmf).collect();
        pairs.sort_by_key(|p| p.0);
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return bad(format!("duplicate symbol {}", w[0].0));
            }
        }
        for &(a, p) in &pairs {
            if a == 0 {
                return bad("alphabet must not contain 0".into());
            }
            if pairs.binary_search_by_key(&-a, |q| q.0).is_err() {
                return bad(format!("alphabet is not sign-symmetric: {a} present, {} missing", -a));
            }
            if !(p.is_finite() && p >= 0.0) {
                return bad(format!("pmf entry {p} for symbol {a} is not a nonnegative number"));
            }
        }
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("pmf sums to {total}, not 1"));
        }
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return bad("epsilon must be in (0,1]".into());
        }
        if k == 0 {
            return bad("K must be at least 1".into());
        }
        let (alphabet, pmf) = pairs.into_iter().unzip();
        Ok(Self { alphabet, pmf, epsilon, k })
    }

    /// Alphabet {-1, +1} with Pr{+1} = nu.
    pub fn binary(nu: f64, epsilon: f64, k: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&nu) {
            return Err(Error::InvalidDistribution("nu must be in [0,1]".into()));
        }
        Self::new(vec![-1, 1], vec![1.0 - nu, nu], epsilon, k)
    }

    /// Uniform pmf over the given alphabet.
    pub fn uniform(alphabet: Vec<i64>, epsilon: f64, k: usize) -> Result<Self> {
        let p = 1.0 / alphabet.len() as f64;
        let pmf = vec![p; alphabet.len()];
        Self::new(alphabet, pmf, epsilon, k)
    }

    pub fn alphabet(&self) -> &[i64] {
        &self.alphabet
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_masked(&self) -> bool {
        self.epsilon < 1.0
    }

    /// Pr{+1} when the alphabet is {-1, +1}.
    pub fn nu(&self) -> Option<f64> {
        (self.alphabet == [-1, 1]).then(|| self.pmf[1])
    }

    /// Number of raw vectors over alphabet ∪ {0} (or the alphabet alone when ε = 1).
    pub fn raw_support_size(&self) -> u128 {
        let base = self.alphabet.len() as u128 + u128::from(self.is_masked());
        base.checked_pow(self.k as u32).unwrap_or(u128::MAX)
    }

    fn symbols(&self) -> Vec<i64> {
        let mut s = Vec::with_capacity(self.alphabet.len() + 1);
        if self.is_masked() {
            s.push(0);
        }
        s.extend_from_slice(&self.alphabet);
        s
    }

    fn symbol_index(&self, a: i64) -> Option<usize> {
        self.alphabet.binary_search(&a).ok()
    }

    /// Probability from per-symbol counts; spreading factors multiply in alphabet order
    /// before the masking factor so that mirrored ensembles give identical products.
    fn prob_from_counts(&self, counts: &[u32], zeros: u32) -> f64 {
        let mut spread = 1.0;
        for (p, &c) in self.pmf.iter().zip(counts) {
            if c > 0 {
                spread *= p.powi(c as i32);
            }
        }
        let on = self.k as u32 - zeros;
        let mask = self.epsilon.powi(on as i32) * (1.0 - self.epsilon).powi(zeros as i32);
        spread * mask
    }
}

/// Enumerates every vector of nonzero probability, with the default cap.
pub fn enumerate_support(dist: &SignatureDistribution) -> Result<Vec<SupportAtom>> {
    enumerate_support_capped(dist, SUPPORT_CAP)
}

pub fn enumerate_support_capped(dist: &SignatureDistribution, cap: u128) -> Result<Vec<SupportAtom>> {
    let size = dist.raw_support_size();
    if size > cap {
        return Err(Error::SupportTooLarge { size, cap });
    }
    let mut atoms = Vec::new();
    for_each_vector(&dist.symbols(), dist.k, |v| {
        let prob = signature_prob(dist, v).expect("enumerated vectors use alphabet symbols");
        if prob > 0.0 {
            atoms.push(SupportAtom { vector: v.to_vec(), prob });
        }
    });
    Ok(atoms)
}

/// Calls `f` on every length-`k` vector over `symbols`, in lexicographic index order.
pub(crate) fn for_each_vector(symbols: &[i64], k: usize, mut f: impl FnMut(&[i64])) {
    let mut idx = vec![0usize; k];
    let mut v: Vec<i64> = vec![symbols[0]; k];
    loop {
        f(&v);
        let mut pos = k;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < symbols.len() {
                v[pos] = symbols[idx[pos]];
                break;
            }
            idx[pos] = 0;
            v[pos] = symbols[0];
        }
    }
}

pub fn signature_prob(dist: &SignatureDistribution, vector: &[i64]) -> Result<f64> {
    if vector.len() != dist.k {
        return Err(Error::InvalidVector(format!(
            "length {} does not match K = {}",
            vector.len(),
            dist.k
        )));
    }
    let mut counts = vec![0u32; dist.alphabet.len()];
    let mut zeros = 0;
    for &a in vector {
        if a == 0 {
            zeros += 1;
        } else {
            match dist.symbol_index(a) {
                Some(i) => counts[i] += 1,
                None => return Err(Error::InvalidVector(format!("entry {a} is not in the alphabet"))),
            }
        }
    }
    Ok(dist.prob_from_counts(&counts, zeros))
}

pub fn sample_signature<R: Rng + ?Sized>(dist: &SignatureDistribution, rng: &mut R) -> Vec<i64> {
    let mut v = vec![0; dist.k];
    sample_signature_into(dist, rng, &mut v);
    v
}

pub(crate) fn sample_signature_into<R: Rng + ?Sized>(dist: &SignatureDistribution, rng: &mut R, out: &mut [i64]) {
    let last = dist.alphabet.len() - 1;
    for slot in out.iter_mut() {
        let on: f64 = rng.random();
        if on >= dist.epsilon {
            *slot = 0;
            continue;
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = last;
        for (i, &p) in dist.pmf.iter().enumerate() {
            acc += p;
            if u < acc && p > 0.0 {
                pick = i;
                break;
            }
        }
        // Guard against round-off landing on a zero-probability tail symbol.
        while dist.pmf[pick] == 0.0 {
            pick -= 1;
        }
        *slot = dist.alphabet[pick];
    }
}

pub fn normalization(dist: &SignatureDistribution) -> PowerNormalization {
    let second_moment: f64 = dist
        .alphabet
        .iter()
        .zip(&dist.pmf)
        .map(|(&a, &p)| p * (a * a) as f64)
        .sum();
    let expected_norm_sq = dist.k as f64 * dist.epsilon * second_moment;
    PowerNormalization { beta_sq: 1.0 / expected_norm_sq, expected_norm_sq }
}

pub fn gram_entropy(dist: &SignatureDistribution, method: GramMethod) -> Result<f64> {
    match method {
        GramMethod::BruteForce => gram_entropy_brute_force(dist),
        GramMethod::ClosedForm => gram_entropy_closed_form(dist),
    }
}

fn gram_entropy_brute_force(dist: &SignatureDistribution) -> Result<f64> {
    let atoms = enumerate_support(dist)?;
    let k = dist.k;
    let mut grams: BTreeMap<Vec<i64>, Kahan> = BTreeMap::new();
    for atom in &atoms {
        let v = &atom.vector;
        let mut g = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                g.push(v[i] * v[j]);
            }
        }
        grams.entry(g).or_default().add(atom.prob);
    }
    Ok(grams.values().map(|p| xlog2x_neg(p.value())).sum())
}

fn gram_entropy_closed_form(dist: &SignatureDistribution) -> Result<f64> {
    let nu = dist.nu().ok_or_else(|| {
        Error::Unsupported("closed-form gram entropy needs the alphabet {-1, +1}".into())
    })?;
    let eps = dist.epsilon;
    let nub = 1.0 - nu;
    if dist.k == 2 {
        return Ok(2.0 * h2(eps) + eps * eps * h2(nu * nu + nub * nub));
    }
    if eps < 1.0 {
        return Err(Error::Unsupported(
            "closed-form gram entropy with masking is only available for K = 2".into(),
        ));
    }
    let k = dist.k as i32;
    let mut h = 0.0;
    for j in 0..k {
        let q = nu.powi(j + 1) * nub.powi(k - 1 - j) + nu.powi(k - 1 - j) * nub.powi(j + 1);
        h += binomial(dist.k as u64 - 1, j as u64) * xlog2x_neg(q);
    }
    Ok(h)
}

pub(crate) fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c.round()
}

/// Canonical representatives of the sign classes {v, -v} of the raw support, in
/// lexicographic order. The zero vector, when masking is active, comes first.
///
/// Classes are listed structurally (independent of the pmf), so the same list can be
/// reused across pmfs of one alphabet.
pub fn sign_class_vectors(dist: &SignatureDistribution) -> Result<Vec<Vec<i64>>> {
    let size = dist.raw_support_size();
    if size > SUPPORT_CAP {
        return Err(Error::SupportTooLarge { size, cap: SUPPORT_CAP });
    }
    let mut reps = Vec::new();
    for_each_vector(&dist.symbols(), dist.k, |v| {
        match v.iter().find(|&&a| a != 0) {
            None => reps.push(v.to_vec()),
            Some(&first) if first > 0 => reps.push(v.to_vec()),
            _ => {}
        }
    });
    reps.sort_by_key(|v| v.iter().any(|&a| a != 0));
    Ok(reps)
}

/// Pr{s = v} + Pr{s = -v} for each class representative.
pub fn sign_class_weights(dist: &SignatureDistribution, reps: &[Vec<i64>]) -> Result<Vec<f64>> {
    reps.iter()
        .map(|v| {
            let p = signature_prob(dist, v)?;
            if v.iter().all(|&a| a == 0) {
                return Ok(p);
            }
            let neg: Vec<i64> = v.iter().map(|a| -a).collect();
            Ok(p + signature_prob(dist, &neg)?)
        })
        .collect()
}
