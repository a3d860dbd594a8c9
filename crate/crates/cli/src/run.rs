use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use sigcode::design::{
    epsilon_hat, optimize_parameters, scheme_best_rate, tau_n, DesignSearchSpace, Scheme, TauMethod,
};
use sigcode::inference::{forward_levels, solve_case, AlphabetInfo, Case};
use sigcode::optimality::prelog_advantage_check;
use sigcode::rate::{rate_lower_bound, EvalMode};
use sigcode::smg::{
    colspan_decomposition_mc, optimize_two_user, span_avoid_exact, span_avoid_monte_carlo, SmgMethod, SmgResult,
};
use sigcode::{db_to_linear, ChannelDraw, Result, SignatureDistribution};

use crate::config::{Command, ExperimentConfig, Figure, Mode};
use crate::output::Output;

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index);
    r
}

pub fn run(cfg: &ExperimentConfig) -> Result<Output> {
    match cfg.command {
        Command::Smg => smg(cfg),
        Command::Rate => rate(cfg),
        Command::Design => design(cfg),
        Command::Infer => infer(cfg),
        Command::Optimality => optimality(cfg),
        Command::Figures => match cfg.figure.expect("validated") {
            Figure::Fig2 => fig2(cfg),
            Figure::F5 => f5(cfg),
            Figure::F8 => f8(cfg),
            Figure::F77 => design(cfg),
            Figure::F77c => f77c(cfg),
            Figure::Tau => tau(cfg),
        },
    }
}

fn smg(cfg: &ExperimentConfig) -> Result<Output> {
    if cfg.two_user_optimum {
        let o = optimize_two_user();
        return Ok(Output::Record(json!({ "K": o.k, "epsilon": o.epsilon, "smg": o.smg })));
    }
    let d = cfg.distribution()?;
    let r = match cfg.mode {
        Mode::Exact => SmgResult::from_span_avoid(span_avoid_exact(&d, cfg.n)?, 0.0, cfg.n, cfg.k, SmgMethod::Exact),
        Mode::Sampled => {
            let (p, se) = span_avoid_monte_carlo(&d, cfg.n, cfg.trials, &mut stream(cfg.seed, 0))?;
            SmgResult::from_span_avoid(p, se, cfg.n, cfg.k, SmgMethod::MonteCarlo)
        }
    };
    let mut out = Output::table(&["n", "K", "epsilon", "smg", "per_user", "stderr"]);
    out.push(vec![json!(cfg.n), json!(cfg.k), json!(cfg.epsilon), json!(r.value), json!(r.per_user), json!(r.stderr)]);
    Ok(out)
}

fn rate(cfg: &ExperimentConfig) -> Result<Output> {
    let d = cfg.distribution()?;
    let ch = match &cfg.gains {
        Some(g) => ChannelDraw::new(g[0], g[1..].to_vec())?,
        None => ChannelDraw::new(1.0, vec![1.0; cfg.n - 1])?,
    };
    let mode = match cfg.mode {
        Mode::Exact => EvalMode::Exact,
        Mode::Sampled => EvalMode::Sampled { trials: cfg.trials, seed: cfg.seed },
    };
    let mut out = Output::table(&["gamma_db", "rate", "mg", "ief", "csf", "stderr"]);
    for db in cfg.gamma_points() {
        let b = rate_lower_bound(&d, cfg.n, &ch, db_to_linear(db), mode)?;
        out.push(vec![
            json!(db),
            json!(b.rate_bits_per_slot),
            json!(b.mg),
            json!(b.ief_bits_per_slot),
            json!(b.csf_bits_per_slot),
            json!(b.stderr),
        ]);
    }
    Ok(out)
}

fn design(cfg: &ExperimentConfig) -> Result<Output> {
    let space = DesignSearchSpace {
        k_values: cfg.k_values.clone(),
        nu_grid: cfg.nu_grid.clone(),
        epsilon_grid: cfg.epsilon_grid.clone(),
        gamma_db: cfg.gamma_db,
        mc_draws: cfg.mc_draws,
        seed: cfg.seed,
    };
    let res = optimize_parameters(&space, cfg.n)?;
    if cfg.command == Command::Design && cfg.format == crate::config::Format::Json {
        return Ok(Output::record(&res));
    }
    let mut out = Output::table(&["nu", "K", "epsilon", "expected_rate", "stderr"]);
    for r in &res.sweep_table {
        out.push(vec![json!(r.nu), json!(r.k), json!(r.epsilon), json!(r.expected_rate), json!(r.stderr)]);
    }
    Ok(out)
}

fn infer(cfg: &ExperimentConfig) -> Result<Output> {
    let case = Case::try_from(cfg.case.expect("validated"))?;
    let dist = match case {
        Case::One => SignatureDistribution::uniform(vec![-2, -1, 1, 2], cfg.epsilon, cfg.k)?,
        _ => SignatureDistribution::binary(0.5, cfg.epsilon, cfg.k)?,
    };
    let gamma = db_to_linear(cfg.gamma_db);
    let mut out = Output::table(&["draw", "n", "n_est", "max_rel_err", "residual"]);
    for i in 0..cfg.draws {
        let mut rng = stream(cfg.seed, i as u64);
        // Log-uniform gains on [0.1, 10], redrawn until every level is resolvable.
        let (gains, mut obs) = loop {
            let g: Vec<f64> = (1..cfg.n).map(|_| 10f64.powf(rng.random_range(-1.0..1.0))).collect();
            let Ok(obs) = forward_levels(&g, &dist, gamma) else { continue };
            let sep = |v: &[f64]| v.windows(2).all(|w| w[1] - w[0] > 1e-3 * w[1].abs().max(w[0].abs()));
            if sep(&obs.levels) && obs.offdiag.as_deref().is_none_or(sep) {
                break (g, obs);
            }
        };
        if case == Case::Two {
            obs.alphabet_info = AlphabetInfo::MaskingOnly;
        }
        let est = solve_case(&obs, case)?;
        let mut want = gains;
        want.sort_by(f64::total_cmp);
        let err = est.gains_sq_sorted.iter().zip(&want).map(|(a, b)| (a - b).abs() / b).fold(0.0, f64::max);
        out.push(vec![json!(i), json!(cfg.n), json!(est.n_users), json!(err), json!(est.residual)]);
    }
    Ok(out)
}

fn optimality(cfg: &ExperimentConfig) -> Result<Output> {
    let report = prelog_advantage_check(&cfg.gamma_points(), cfg.mc_draws, &mut stream(cfg.seed, 0))?;
    if cfg.format == crate::config::Format::Json {
        return Ok(Output::record(&report));
    }
    let mut out = Output::table(&[
        "gamma_db",
        "epsilon_hat",
        "in_interval",
        "slope_spread_mask",
        "prelog_upper",
        "spreading_wins",
        "scheme_b_slope",
        "masking_slope_ok",
        "rate_spread_mask_60db",
        "rate_masking_60db",
    ]);
    for r in &report.rows {
        out.push(vec![
            json!(r.gamma_db),
            json!(r.epsilon_hat),
            json!(r.in_interval),
            json!(r.slope_spread_mask),
            json!(r.prelog_upper),
            json!(r.spreading_wins),
            json!(r.scheme_b_slope),
            r.masking_slope_ok.map_or(Value::Null, Value::Bool),
            json!(r.rate_spread_mask_60db),
            json!(r.rate_masking_60db),
        ]);
    }
    Ok(out)
}

fn fig2(cfg: &ExperimentConfig) -> Result<Output> {
    let mut out = Output::table(&["n", "smg_masked", "smg_unmasked", "stderr_masked", "stderr_unmasked"]);
    for n in 2..=10usize {
        let mut est = [(0.0, 0.0); 2];
        for (j, eps) in [0.5, 1.0].into_iter().enumerate() {
            let d = SignatureDistribution::binary(0.5, eps, n)?;
            // K = n, so the SMG equals the span-avoid probability.
            est[j] = span_avoid_monte_carlo(&d, n, cfg.trials, &mut stream(cfg.seed, (2 * n + j) as u64))?;
        }
        out.push(vec![json!(n), json!(est[0].0), json!(est[1].0), json!(est[0].1), json!(est[1].1)]);
    }
    Ok(out)
}

fn f5(cfg: &ExperimentConfig) -> Result<Output> {
    let mut out = Output::table(&["gamma_db", "epsilon_a", "rate_a", "stderr_a", "epsilon_b", "rate_b", "stderr_b"]);
    for db in cfg.gamma_points() {
        let g = db_to_linear(db);
        let (ea, a) = scheme_best_rate(Scheme::A, g, cfg.mc_draws, cfg.seed)?;
        let (eb, b) = scheme_best_rate(Scheme::B, g, cfg.mc_draws, cfg.seed)?;
        out.push(vec![json!(db), json!(ea), json!(a.value), json!(a.stderr), json!(eb), json!(b.value), json!(b.stderr)]);
    }
    Ok(out)
}

fn f8(cfg: &ExperimentConfig) -> Result<Output> {
    let mut out = Output::table(&["gamma_db", "epsilon_hat"]);
    for (i, db) in cfg.gamma_points().into_iter().enumerate() {
        let e = epsilon_hat(db_to_linear(db), cfg.mc_draws, &mut stream(cfg.seed, i as u64))?;
        out.push(vec![json!(db), json!(e)]);
    }
    Ok(out)
}

fn f77c(cfg: &ExperimentConfig) -> Result<Output> {
    let mut out =
        Output::table(&["nu", "first", "second", "second_stderr", "difference", "difference_stderr"]);
    for (i, &nu) in cfg.nu_grid.iter().enumerate() {
        let d = SignatureDistribution::binary(nu, cfg.epsilon, cfg.k)?;
        let e = colspan_decomposition_mc(&d, cfg.n, cfg.trials, &mut stream(cfg.seed, i as u64))?;
        out.push(vec![
            json!(nu),
            json!(e.first),
            json!(e.second),
            json!(e.second_stderr),
            json!(e.difference),
            json!(e.difference_stderr),
        ]);
    }
    Ok(out)
}

fn tau(cfg: &ExperimentConfig) -> Result<Output> {
    let mut out = Output::table(&["n", "quadrature", "monte_carlo", "stderr"]);
    for n in 2..=10usize {
        let q = tau_n(n, TauMethod::Quadrature)?;
        let m = tau_n(n, TauMethod::MonteCarlo { samples: cfg.trials, seed: cfg.seed.wrapping_add(n as u64) })?;
        out.push(vec![json!(n), json!(q.value), json!(m.value), json!(m.stderr)]);
    }
    Ok(out)
}
