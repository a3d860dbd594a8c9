//! Parameter design under Rayleigh fading: Monte-Carlo expectations of the rate bound,
//! grid search over (K, ν, ε), the saturating-baseline threshold τ_n and ε̂.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::{normalization, sign_class_vectors, sign_class_weights, SignatureDistribution};
use crate::numeric::Moments;
use crate::rate::{gram_entropy_auto, scheme_a_rate, scheme_b_rate, ChannelDraw, DetTable, EvalMode, RateParts};
use crate::smg::maximize_1d;
use crate::{db_to_linear, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSearchSpace {
    pub k_values: Vec<usize>,
    pub nu_grid: Vec<f64>,
    pub epsilon_grid: Vec<f64>,
    pub gamma_db: f64,
    pub mc_draws: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub nu: f64,
    pub epsilon: f64,
    pub expected_rate: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub best: SweepRow,
    pub sweep_table: Vec<SweepRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauMethod {
    Quadrature,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// K = 2, alphabet {-1, +1}, ν = ½.
    A,
    /// K = 1, masking only.
    B,
}

impl DesignSearchSpace {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.k_values.is_empty() || self.nu_grid.is_empty() || self.epsilon_grid.is_empty() {
            return bad("search grids must be nonempty");
        }
        if self.k_values.contains(&0) {
            return bad("K values must be positive");
        }
        if self.nu_grid.iter().any(|nu| !(0.0..=1.0).contains(nu)) {
            return bad("nu values must lie in [0,1]");
        }
        if self.epsilon_grid.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return bad("epsilon must be in (0,1]");
        }
        if self.mc_draws < 100 {
            return bad("mc_draws must be at least 100");
        }
        if !self.gamma_db.is_finite() {
            return bad("gamma_db must be finite");
        }
        Ok(())
    }
}

/// The d-th channel draw of a seeded sweep: unit-mean exponential squared magnitudes.
pub fn rayleigh_draw(seed: u64, index: u64, n: usize) -> ChannelDraw {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let own: f64 = Exp1.sample(&mut rng);
    let cross = (1..n).map(|_| Exp1.sample(&mut rng)).collect();
    ChannelDraw { own_gain_sq: own, cross_gains_sq: cross }
}

fn check_draws(n: usize, mc_draws: usize, gamma: f64) -> Result<()> {
    if mc_draws < 100 {
        return Err(Error::InvalidArgument("mc_draws must be at least 100".into()));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("n must be at least 2".into()));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidArgument("gamma must be finite and positive".into()));
    }
    Ok(())
}

/// E{C_lb} over Rayleigh gains; returns (mean, stderr).
pub fn expected_rate<R: Rng + ?Sized>(
    dist: &SignatureDistribution,
    n: usize,
    gamma: f64,
    mc_draws: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    expected_rate_with(dist, n, gamma, mc_draws, rng, false)
}

/// As [`expected_rate`]; `zero_cross` forces every cross gain to 0 (diagnostic).
pub fn expected_rate_with<R: Rng + ?Sized>(
    dist: &SignatureDistribution,
    n: usize,
    gamma: f64,
    mc_draws: usize,
    rng: &mut R,
    zero_cross: bool,
) -> Result<(f64, f64)> {
    check_draws(n, mc_draws, gamma)?;
    let seed: u64 = rng.random();
    let reps = sign_class_vectors(dist)?;
    let w = sign_class_weights(dist, &reps)?;
    let h = (n - 1) as f64 * gram_entropy_auto(dist)?;
    let rates: Vec<f64> = (0..mc_draws as u64)
        .into_par_iter()
        .map(|d| {
            let mut ch = rayleigh_draw(seed, d, n);
            if zero_cross {
                ch.cross_gains_sq.iter_mut().for_each(|g| *g = 0.0);
            }
            Ok(RateParts::build(dist, &ch, gamma, EvalMode::Exact)?.rate(&w, h, dist.k()).0)
        })
        .collect::<Result<_>>()?;
    let mut m = Moments::default();
    rates.iter().for_each(|&r| m.push(r));
    Ok((m.mean(), m.stderr()))
}

/// Tie-break order: larger rate, then smaller K, then ν closer to ½, then larger ε.
fn better(a: &SweepRow, b: &SweepRow) -> bool {
    if a.expected_rate != b.expected_rate {
        return a.expected_rate > b.expected_rate;
    }
    if a.k != b.k {
        return a.k < b.k;
    }
    let (da, db) = ((a.nu - 0.5).abs(), (b.nu - 0.5).abs());
    if da != db {
        return da < db;
    }
    a.epsilon > b.epsilon
}

/// Grid search over the {-1, +1} alphabet with common channel draws for every point.
pub fn optimize_parameters(space: &DesignSearchSpace, n: usize) -> Result<DesignResult> {
    space.validate()?;
    let gamma = db_to_linear(space.gamma_db);
    check_draws(n, space.mc_draws, gamma)?;

    struct Block {
        k: usize,
        epsilon: f64,
        reps: Vec<Vec<i64>>,
        c: f64,
        /// (ν, class weights, total interference entropy) per ν.
        points: Vec<(f64, Vec<f64>, f64)>,
    }
    let mut blocks = Vec::new();
    for &k in &space.k_values {
        for &epsilon in &space.epsilon_grid {
            let base = SignatureDistribution::binary(0.5, epsilon, k)?;
            let reps = sign_class_vectors(&base)?;
            let c = normalization(&base).beta_sq * gamma;
            let mut points = Vec::with_capacity(space.nu_grid.len());
            for &nu in &space.nu_grid {
                let d = SignatureDistribution::binary(nu, epsilon, k)?;
                let w = sign_class_weights(&d, &reps)?;
                points.push((nu, w, (n - 1) as f64 * gram_entropy_auto(&d)?));
            }
            blocks.push(Block { k, epsilon, reps, c, points });
        }
    }

    let per_draw: Vec<Vec<f64>> = (0..space.mc_draws as u64)
        .into_par_iter()
        .map(|d| {
            let ch = rayleigh_draw(space.seed, d, n);
            let mut out = Vec::new();
            for b in &blocks {
                let table = DetTable::exact(&b.reps, b.k, &ch.cross_gains_sq, b.c)?;
                let norms_sq = b.reps.iter().map(|v| v.iter().map(|&x| (x * x) as f64).sum()).collect();
                let parts =
                    RateParts { reps: b.reps.clone(), norms_sq, table, log2_gain: (ch.own_gain_sq * b.c).log2() };
                for (_, w, h) in &b.points {
                    out.push(parts.rate(w, *h, b.k).0);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let points = per_draw[0].len();
    let mut moments = vec![Moments::default(); points];
    for row in &per_draw {
        for (m, &r) in moments.iter_mut().zip(row) {
            m.push(r);
        }
    }
    let mut sweep_table = Vec::with_capacity(points);
    for b in &blocks {
        for (nu, _, _) in &b.points {
            let m = moments[sweep_table.len()];
            sweep_table.push(SweepRow { k: b.k, nu: *nu, epsilon: b.epsilon, expected_rate: m.mean(), stderr: m.stderr() });
        }
    }
    let mut best = sweep_table[0];
    for row in &sweep_table[1..] {
        if better(row, &best) {
            best = *row;
        }
    }
    Ok(DesignResult { best, sweep_table })
}

/// Closed-form expected rates of a two-user scheme for each ε on a grid, with common draws.
pub fn scheme_expected_rates(
    scheme: Scheme,
    epsilon_grid: &[f64],
    gamma: f64,
    mc_draws: usize,
    seed: u64,
) -> Result<Vec<Estimate>> {
    check_draws(2, mc_draws, gamma)?;
    let draws: Vec<ChannelDraw> = (0..mc_draws as u64).map(|d| rayleigh_draw(seed, d, 2)).collect();
    Ok(epsilon_grid
        .iter()
        .map(|&e| {
            let mut m = Moments::default();
            for ch in &draws {
                let (a, b) = (ch.own_gain_sq, ch.cross_gains_sq[0]);
                m.push(match scheme {
                    Scheme::A => scheme_a_rate(e, gamma, a, b).rate,
                    Scheme::B => scheme_b_rate(e, gamma, a, b).rate,
                });
            }
            Estimate { value: m.mean(), stderr: m.stderr() }
        })
        .collect())
}

/// sup over ε (grid step 0.01) of a scheme's expected rate; returns (ε, estimate).
pub fn scheme_best_rate(scheme: Scheme, gamma: f64, mc_draws: usize, seed: u64) -> Result<(f64, Estimate)> {
    let grid: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
    let est = scheme_expected_rates(scheme, &grid, gamma, mc_draws, seed)?;
    let mut best = 0;
    for i in 1..grid.len() {
        if est[i].value > est[best].value {
            best = i;
        }
    }
    Ok((grid[best], est[best]))
}

/// argmax over ε ∈ (0, 1] of the expected masking-only two-user rate.
pub fn epsilon_hat<R: Rng + ?Sized>(gamma: f64, mc_draws: usize, rng: &mut R) -> Result<f64> {
    check_draws(2, mc_draws, gamma)?;
    let draws: Vec<(f64, f64)> = (0..mc_draws).map(|_| (Exp1.sample(rng), Exp1.sample(rng))).collect();
    let f = |e: f64| draws.iter().map(|&(a, b)| scheme_b_rate(e, gamma, a, b).rate).sum::<f64>() / draws.len() as f64;
    Ok(maximize_1d(f, 1e-3, 1.0, 999).0)
}

/// Nodes and weights of the n-point generalized Gauss–Laguerre rule, with weights
/// normalized to sum to 1 (i.e. divided by Γ(α+1)).
pub fn gauss_laguerre(nodes: usize, alpha: f64) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(nodes, nodes);
    for i in 0..nodes {
        let fi = i as f64;
        j[(i, i)] = 2.0 * fi + alpha + 1.0;
        if i + 1 < nodes {
            let b = ((fi + 1.0) * (fi + 1.0 + alpha)).sqrt();
            j[(i, i + 1)] = b;
            j[(i + 1, i)] = b;
        }
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> =
        (0..nodes).map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// τ_n = E log2(1 + ζ/η) with ζ ~ Exp(1) and η ~ Gamma(n−1, 1).
pub fn tau_n(n: usize, method: TauMethod) -> Result<Estimate> {
    if n < 2 {
        return Err(Error::InvalidArgument("n must be at least 2".into()));
    }
    match method {
        TauMethod::Quadrature => {
            let (zx, zw) = gauss_laguerre(64, 0.0);
            let (ex, ew) = gauss_laguerre(64, (n - 2) as f64);
            let mut acc = 0.0;
            for (z, wz) in zx.iter().zip(&zw) {
                for (e, we) in ex.iter().zip(&ew) {
                    acc += wz * we * (z / e).ln_1p();
                }
            }
            Ok(Estimate { value: acc / std::f64::consts::LN_2, stderr: 0.0 })
        }
        TauMethod::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(Error::InvalidArgument("need at least two samples".into()));
            }
            let gamma = Gamma::new((n - 1) as f64, 1.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = Moments::default();
            for _ in 0..samples {
                let z: f64 = Exp1.sample(&mut rng);
                let e: f64 = gamma.sample(&mut rng);
                m.push((z / e).ln_1p() / std::f64::consts::LN_2);
            }
            Ok(Estimate { value: m.mean(), stderr: m.stderr() })
        }
    }
}
