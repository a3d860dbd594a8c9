//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Run alone with `cargo test -p sigcode --test acceptance`.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sigcode::codebook::{gram_entropy, GramMethod};
use sigcode::design::{
    epsilon_hat, optimize_parameters, rayleigh_draw, scheme_best_rate, tau_n, DesignSearchSpace, Scheme, TauMethod,
};
use sigcode::inference::{forward_levels, solve_case, AlphabetInfo, Case, LevelObservation};
use sigcode::mixent::{entropy_bounds, entropy_mc, random_mixture, EpiInstance, MixedGaussianModel};
use sigcode::optimality::beating_interval;
use sigcode::rate::{rate_lower_bound, scheme_a_rate, scheme_b_rate, snr_scaling_slope, EvalMode};
use sigcode::smg::{code_set_span_avoid_count, masking_only_smg, optimize_two_user, optimum_masking_only, rho, span_avoid_exact, span_avoid_monte_carlo};
use sigcode::{db_to_linear, ChannelDraw, SignatureDistribution};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, secs: u64) -> bool {
    elapsed <= Duration::from_secs(secs)
}

fn c1() -> Outcome {
    let t = Instant::now();
    let o = optimize_two_user();
    let ok = o.k == 2 && (o.epsilon - 0.756).abs() <= 0.002 && (o.smg - 0.7091).abs() <= 0.0005;
    let el = t.elapsed();
    outcome(ok && within(el, 1), format!("K={} eps={:.4} smg={:.5} ({el:.2?})", o.k, o.epsilon, o.smg))
}

fn c2() -> Outcome {
    let t = Instant::now();
    let mut exact = true;
    let mut worst: f64 = 0.0;
    for n in 2..=50usize {
        let (e, v) = optimum_masking_only(n);
        exact &= v == (1.0 - 1.0 / n as f64).powi(n as i32 - 1);
        // The optimum also has to be the maximizer of the masking-only SMG itself.
        let at = |x: f64| masking_only_smg(x, n).value;
        worst = worst.max((at(e) - v).abs() / v);
        exact &= (1..1000).all(|i| at(i as f64 / 1000.0) <= at(e) * (1.0 + 1e-12));
    }
    let lim = (optimum_masking_only(100).1 - (-1f64).exp()).abs();
    let el = t.elapsed();
    outcome(exact && worst <= 1e-15 && lim < 0.01 && within(el, 1), format!("closed form exact {exact}, max rel deviation {worst:e}, |v(100)-1/e|={lim:.5} ({el:.2?})"))
}

fn c3() -> Outcome {
    let t = Instant::now();
    let q = tau_n(4, TauMethod::Quadrature).unwrap();
    let m = tau_n(4, TauMethod::MonteCarlo { samples: 1_000_000, seed: 3 }).unwrap();
    let ok = (q.value - 0.4809).abs() <= 0.005
        && (m.value - 0.4809).abs() <= 0.005
        && (q.value - m.value).abs() <= 3.0 * m.stderr;
    let el = t.elapsed();
    outcome(ok && within(el, 30), format!("quadrature {:.5}, MC {:.5} ± {:.5} ({el:.2?})", q.value, m.value, m.stderr))
}

fn c4() -> Outcome {
    let t = Instant::now();
    let b = beating_interval(2).unwrap();
    let q = beating_interval(4).unwrap();
    let ok = (b.lo - 0.3101).abs() <= 1e-3
        && (b.hi - 0.5653).abs() <= 1e-3
        && (q.lo - 0.2988).abs() <= 1e-3
        && (q.hi - 0.5873).abs() <= 1e-3;
    let el = t.elapsed();
    outcome(
        ok && within(el, 1),
        format!("binary ({:.4}, {:.4}), quaternary ({:.4}, {:.4}) ({el:.2?})", b.lo, b.hi, q.lo, q.hi),
    )
}

fn c5() -> Outcome {
    let t = Instant::now();
    let nu_grid: Vec<f64> = (0..=50).map(|i| i as f64 / 50.0).collect();
    let space = DesignSearchSpace {
        k_values: vec![1, 2, 3, 4],
        nu_grid: nu_grid.clone(),
        epsilon_grid: vec![1.0],
        gamma_db: 60.0,
        mc_draws: 2000,
        seed: 5,
    };
    let res = optimize_parameters(&space, 4).unwrap();
    let best = res.best;
    let row = |k: usize, i: usize| res.sweep_table.iter().find(|r| r.k == k && r.nu == nu_grid[i]).copied().unwrap();
    let near_hump = (best.nu - 0.09).abs() <= 0.05 || (best.nu - 0.91).abs() <= 0.05;
    let mid = row(best.k, 25);
    let gap = best.expected_rate - mid.expected_rate;
    let gap_se = (best.stderr.powi(2) + mid.stderr.powi(2)).sqrt();
    let mut worst_sym: f64 = 0.0;
    for k in 1..=4 {
        for i in 0..25 {
            let (a, b) = (row(k, i), row(k, 50 - i));
            let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
            if se > 0.0 {
                worst_sym = worst_sym.max((a.expected_rate - b.expected_rate).abs() / se);
            } else if a.expected_rate != b.expected_rate {
                worst_sym = f64::INFINITY;
            }
        }
    }
    let ok = best.k == 3 && near_hump && gap > 3.0 * gap_se && worst_sym <= 2.0;
    let el = t.elapsed();
    outcome(
        ok && within(el, 1200),
        format!(
            "best K={} nu={:.2} rate={:.4}; gap to nu=1/2 {:.4} ({:.1} se); max asymmetry {:.2} se ({el:.2?})",
            best.k,
            best.nu,
            best.expected_rate,
            gap,
            gap / gap_se,
            worst_sym
        ),
    )
}

fn c6() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut masked = vec![];
    let mut unmasked = vec![];
    for n in 2..=8usize {
        for (eps, out) in [(0.5, &mut masked), (1.0, &mut unmasked)] {
            let d = SignatureDistribution::binary(0.5, eps, n).unwrap();
            let (p, se) = span_avoid_monte_carlo(&d, n, 100_000, &mut rng).unwrap();
            // K = n, so SMG = Pr{s ∉ csp(S)}.
            out.push((p, se));
        }
    }
    let comb = |a: (f64, f64), b: (f64, f64)| 2.0 * (a.1 * a.1 + b.1 * b.1).sqrt();
    let monotone = masked.windows(2).all(|w| w[1].0 - w[0].0 >= -comb(w[0], w[1]));
    let dominant = masked.iter().zip(&unmasked).all(|(m, u)| m.0 - u.0 >= -comb(*m, *u));
    let last = masked.last().unwrap().0;
    let el = t.elapsed();
    let fmt = |v: &[(f64, f64)]| v.iter().map(|p| format!("{:.3}", p.0)).collect::<Vec<_>>().join(" ");
    outcome(
        monotone && dominant && last > 0.85 && within(el, 300),
        format!("masked [{}], unmasked [{}] ({el:.2?})", fmt(&masked), fmt(&unmasked)),
    )
}

fn c7() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for (k, eps) in [(2usize, 1.0), (1, 0.5)] {
        let d = SignatureDistribution::binary(0.5, eps, k).unwrap();
        let mg = span_avoid_exact(&d, 2).unwrap() / k as f64;
        for i in 0..5 {
            let ch = rayleigh_draw(7, i, 2);
            let slope = snr_scaling_slope(&d, 2, &ch, 1e8, 1e11).unwrap();
            worst = worst.max((slope - mg).abs());
        }
    }
    let el = t.elapsed();
    outcome(worst <= 0.02 && within(el, 60), format!("max |slope - MG| = {worst:.4} ({el:.2?})"))
}

fn c8() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let eps: f64 = rng.random_range(0.05..=1.0);
        let gamma = 10f64.powf(rng.random_range(0.0..6.0));
        let (a, b) = (10f64.powf(rng.random_range(-1.0..1.0)), 10f64.powf(rng.random_range(-1.0..1.0)));
        let ch = ChannelDraw::new(a, vec![b]).unwrap();
        let ga = rate_lower_bound(&SignatureDistribution::binary(0.5, eps, 2).unwrap(), 2, &ch, gamma, EvalMode::Exact)
            .unwrap()
            .rate_bits_per_slot;
        let gb = rate_lower_bound(&SignatureDistribution::binary(0.5, eps, 1).unwrap(), 2, &ch, gamma, EvalMode::Exact)
            .unwrap()
            .rate_bits_per_slot;
        worst = worst.max((ga - scheme_a_rate(eps, gamma, a, b).rate).abs());
        worst = worst.max((gb - scheme_b_rate(eps, gamma, a, b).rate).abs());
    }
    let el = t.elapsed();
    outcome(worst <= 1e-9 && within(el, 60), format!("max |generic - closed form| = {worst:e} ({el:.2?})"))
}

fn c9() -> Outcome {
    let t = Instant::now();
    let mut ok = true;
    let mut parts = vec![];
    for (db, b_wins) in [(10.0, true), (60.0, false)] {
        let g = db_to_linear(db);
        let (ea, a) = scheme_best_rate(Scheme::A, g, 10_000, 9).unwrap();
        let (eb, b) = scheme_best_rate(Scheme::B, g, 10_000, 9).unwrap();
        let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        let diff = if b_wins { b.value - a.value } else { a.value - b.value };
        ok &= diff > 3.0 * se;
        parts.push(format!("{db} dB: A {:.4} (eps {ea}), B {:.4} (eps {eb}), margin {:.1} se", a.value, b.value, diff / se));
    }
    let el = t.elapsed();
    outcome(ok && within(el, 300), format!("{} ({el:.2?})", parts.join("; ")))
}

fn c10() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut ok = true;
    let mut parts = vec![];
    for db in [35.0, 45.0, 60.0] {
        let e = epsilon_hat(db_to_linear(db), 10_000, &mut rng).unwrap();
        ok &= e > 0.4 && e < 0.5;
        parts.push(format!("{db} dB: {e:.4}"));
    }
    let low = epsilon_hat(db_to_linear(5.0), 10_000, &mut rng).unwrap();
    ok &= low == 1.0;
    let el = t.elapsed();
    outcome(ok && within(el, 120), format!("{}; 5 dB: {low} ({el:.2?})", parts.join(", ")))
}

/// Random generic gains: log-uniform on [0.1, 10], all levels separated by a relative 1e-3.
fn generic_gains(rng: &mut ChaCha8Rng, n: usize, dist: &SignatureDistribution, gamma: f64) -> (Vec<f64>, LevelObservation) {
    loop {
        let g: Vec<f64> = (1..n).map(|_| 10f64.powf(rng.random_range(-1.0..1.0))).collect();
        let Ok(obs) = forward_levels(&g, dist, gamma) else { continue };
        let sep = |v: &[f64]| v.windows(2).all(|w| (w[1] - w[0]) > 1e-3 * w[1].abs().max(w[0].abs()));
        if sep(&obs.levels) && obs.offdiag.as_deref().is_none_or(sep) {
            return (g, obs);
        }
    }
}

fn rel_err(est: &[f64], truth: &[f64]) -> f64 {
    let mut t = truth.to_vec();
    t.sort_by(f64::total_cmp);
    if est.len() != t.len() {
        return f64::INFINITY;
    }
    est.iter().zip(&t).map(|(a, b)| (a - b).abs() / b).fold(0.0, f64::max)
}

fn c11() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let gamma = 100.0;
    let setups: [(Case, SignatureDistribution); 4] = [
        (Case::One, SignatureDistribution::uniform(vec![-2, -1, 1, 2], 1.0, 2).unwrap()),
        (Case::Two, SignatureDistribution::binary(0.5, 0.5, 1).unwrap()),
        (Case::Three, SignatureDistribution::binary(0.5, 0.5, 2).unwrap()),
        (Case::Four, SignatureDistribution::binary(0.5, 1.0, 2).unwrap()),
    ];
    let mut ok = true;
    let mut parts = vec![];
    for (case, dist) in &setups {
        let (mut exact, mut noisy): (f64, f64) = (0.0, 0.0);
        for i in 0..100 {
            let n = 2 + i % 3;
            let (g, mut obs) = generic_gains(&mut rng, n, dist, gamma);
            if *case == Case::Two {
                obs.alphabet_info = AlphabetInfo::MaskingOnly;
            }
            exact = exact.max(solve_case(&obs, *case).map_or(f64::INFINITY, |e| rel_err(&e.gains_sq_sorted, &g)));
            let mut jitter = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x *= 1.0 + 1e-6 * rng.random_range(-1.0..1.0));
            jitter(&mut obs.levels);
            if let Some(o) = obs.offdiag.as_mut() {
                jitter(o);
            }
            noisy = noisy.max(solve_case(&obs, *case).map_or(f64::INFINITY, |e| rel_err(&e.gains_sq_sorted, &g)));
        }
        ok &= exact <= 1e-9 && noisy < 1e-4;
        parts.push(format!("{case:?}: {exact:.1e}/{noisy:.1e}"));
    }
    let el = t.elapsed();
    outcome(ok && within(el, 10), format!("exact/noisy max rel err {} ({el:.2?})", parts.join(", ")))
}

fn c12() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut models: Vec<MixedGaussianModel> = (0..50)
        .map(|_| {
            let dim = rng.random_range(1..=3);
            let comps = rng.random_range(2..=5);
            let scale = 10f64.powf(rng.random_range(-1.0..3.0));
            random_mixture(dim, comps, scale, &mut rng).unwrap()
        })
        .collect();
    for (eps, db) in [(0.5, 20.0), (0.3, 30.0), (0.8, 10.0), (0.45, 40.0), (1.0, 20.0)] {
        models.push(EpiInstance::scheme_b(eps, db_to_linear(db), 1.0, 0.6).unwrap().joint);
    }
    let ch = ChannelDraw::new(1.0, vec![0.8, 1.4]).unwrap();
    for (eps, s, cond) in [(0.5, [1, 0], true), (0.5, [1, -1], true), (1.0, [1, 1], true), (0.5, [0, 1], false), (1.0, [1, -1], false)] {
        let d = SignatureDistribution::binary(0.5, eps, 2).unwrap();
        models.push(EpiInstance::from_signature(&d, &ch, &s, 100.0, cond).unwrap().joint);
    }
    let mut worst = f64::NEG_INFINITY;
    for m in &models {
        let (lo, hi) = entropy_bounds(m).unwrap();
        let (h, se) = entropy_mc(m, 10_000, &mut rng).unwrap();
        // Distance outside the band in units of stderr; ≤ 4 passes.
        let out = ((lo - h).max(h - hi)) / se;
        worst = worst.max(out);
    }
    let el = t.elapsed();
    outcome(
        worst <= 4.0 && within(el, 120),
        format!("{} mixtures, worst excursion {worst:.2} se ({el:.2?})", models.len()),
    )
}

fn c13() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        for j in 0..20 {
            let eps = (i + 1) as f64 / 20.0;
            let nu = j as f64 / 19.0;
            let d = SignatureDistribution::binary(nu, eps, 2).unwrap();
            let a = gram_entropy(&d, GramMethod::ClosedForm).unwrap();
            let b = gram_entropy(&d, GramMethod::BruteForce).unwrap();
            worst = worst.max((a - b).abs());
        }
    }
    for k in 2..=8 {
        for j in 0..=10 {
            let d = SignatureDistribution::binary(j as f64 / 10.0, 1.0, k).unwrap();
            let a = gram_entropy(&d, GramMethod::ClosedForm).unwrap();
            let b = gram_entropy(&d, GramMethod::BruteForce).unwrap();
            worst = worst.max((a - b).abs());
        }
    }
    let el = t.elapsed();
    outcome(worst <= 1e-9 && within(el, 10), format!("max |closed - brute| = {worst:e} ({el:.2?})"))
}

fn c14() -> Outcome {
    let t = Instant::now();
    let mut ok = true;
    for l in 2..=8u32 {
        for n in 2..=6u32 {
            let mut sum: u128 = 0;
            for r in 1..l {
                let c = (1..=r as u128).fold(1u128, |c, i| c * (l as u128 - i) / i);
                sum += c * rho(r, n).unwrap();
            }
            ok &= sum == (l as u128 - 1).pow(n - 1);
        }
    }
    let ident_ok = ok;
    for k in 1..=6usize {
        for l in 1..=k {
            let codes: Vec<Vec<i64>> = (0..l).map(|i| (0..k).map(|j| if j <= i { 1 } else { 0 }).collect()).collect();
            for n in 2..=6usize {
                let (num, den) = code_set_span_avoid_count(&codes, n).unwrap();
                // (n/K)(1−1/L)^{n−1} ⇔ num/L^n = (L−1)^{n−1}/L^{n−1}.
                let want = l as u128 * (l as u128 - 1).pow(n as u32 - 1);
                ok &= num == want && den == (l as u128).pow(n as u32);
            }
        }
    }
    let el = t.elapsed();
    outcome(ok, format!("recursion identity {}, independent codes {} ({el:.2?})", ident_ok, ok))
}

fn main() {
    let criteria: [fn() -> Outcome; 14] = [c1, c2, c3, c4, c5, c6, c7, c8, c9, c10, c11, c12, c13, c14];
    let mut failed = vec![];
    for (i, c) in criteria.iter().enumerate() {
        let o = c();
        println!("criterion {}: {} {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(i + 1);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
