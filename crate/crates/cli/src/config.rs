use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use sigcode::{SignatureDistribution, SUPPORT_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig2,
    F5,
    F8,
    F77,
    F77c,
    Tau,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Smg,
    Rate,
    Design,
    Infer,
    Optimality,
    Figures,
}

/// Every setting as read from a config file or the command line; unset fields fall back to
/// per-command defaults in [`RawConfig::resolve`].
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub k: Option<usize>,
    pub n: Option<usize>,
    pub alphabet: Option<Vec<i64>>,
    pub pmf: Option<Vec<f64>>,
    pub nu: Option<f64>,
    pub epsilon: Option<f64>,
    pub gamma_db: Option<f64>,
    pub gamma_db_range: Option<Vec<f64>>,
    pub gains: Option<Vec<f64>>,
    pub mc_draws: Option<usize>,
    pub trials: Option<usize>,
    pub draws: Option<usize>,
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub k_values: Option<Vec<usize>>,
    pub nu_grid: Option<Vec<f64>>,
    pub epsilon_grid: Option<Vec<f64>>,
    pub case: Option<u8>,
    pub two_user_optimum: Option<bool>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident, $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f; } )*
    };
}

impl RawConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("cannot parse {}: {e}", path.display()))
    }

    /// Fields set in `other` win.
    pub fn merge(mut self, other: RawConfig) -> Self {
        overlay!(
            self, other, k, n, alphabet, pmf, nu, epsilon, gamma_db, gamma_db_range, gains, mc_draws, trials, draws,
            seed, mode, k_values, nu_grid, epsilon_grid, case, two_user_optimum, out, format
        );
        self
    }

    pub fn resolve(self, command: Command, figure: Option<Figure>) -> ExperimentConfig {
        let fig = |f: Figure| figure == Some(f);
        let n_default = match figure {
            Some(Figure::F77) => 4,
            Some(Figure::F77c) => 10,
            _ => 2,
        };
        let k_default = match (command, self.case) {
            (Command::Infer, Some(2)) => 1,
            _ if fig(Figure::F77c) => 6,
            _ => 2,
        };
        let eps_default = match (command, self.case) {
            (Command::Infer, Some(2 | 3)) => 0.5,
            _ => 1.0,
        };
        let gamma_default = if fig(Figure::F77) { 60.0 } else { 30.0 };
        let draws_default = if matches!(command, Command::Optimality) || fig(Figure::F5) || fig(Figure::F8) {
            10_000
        } else {
            2000
        };
        let range_default = match (command, figure) {
            (Command::Optimality, _) => Some(vec![35.0, 60.0, 12.5]),
            (_, Some(Figure::F5 | Figure::F8)) => Some(vec![0.0, 60.0, 5.0]),
            _ => None,
        };
        let full_nu: Vec<f64> = (0..=50).map(|i| i as f64 / 50.0).collect();
        let nu_grid_default = match figure {
            Some(Figure::F77c) => (1..25).map(|i| i as f64 / 25.0).collect(),
            _ => full_nu,
        };
        let alphabet = self.alphabet.unwrap_or_else(|| vec![-1, 1]);
        let nu = match (&self.nu, &self.pmf) {
            (None, None) if alphabet == [-1, 1] => Some(0.5),
            _ => self.nu,
        };
        let k = self.k.unwrap_or(k_default);
        let epsilon = self.epsilon.unwrap_or(eps_default);
        ExperimentConfig {
            command,
            figure,
            k,
            n: self.n.unwrap_or(n_default),
            alphabet,
            pmf: self.pmf,
            nu,
            epsilon,
            gamma_db: self.gamma_db.unwrap_or(gamma_default),
            gamma_db_range: self.gamma_db_range.or(range_default),
            gains: self.gains,
            mc_draws: self.mc_draws.unwrap_or(draws_default),
            trials: self.trials.unwrap_or(100_000),
            draws: self.draws.unwrap_or(100),
            seed: self.seed.unwrap_or(0),
            mode: self.mode.unwrap_or(Mode::Exact),
            k_values: self.k_values.unwrap_or_else(|| if fig(Figure::F77) { vec![1, 2, 3, 4] } else { vec![k] }),
            nu_grid: self.nu_grid.unwrap_or(nu_grid_default),
            epsilon_grid: self.epsilon_grid.unwrap_or_else(|| vec![epsilon]),
            case: self.case,
            two_user_optimum: self.two_user_optimum.unwrap_or(false),
            out: self.out,
            format: self.format.unwrap_or(Format::Csv),
        }
    }
}

/// Fully resolved run configuration; embedded verbatim in every run manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub figure: Option<Figure>,
    pub k: usize,
    pub n: usize,
    pub alphabet: Vec<i64>,
    pub pmf: Option<Vec<f64>>,
    pub nu: Option<f64>,
    pub epsilon: f64,
    pub gamma_db: f64,
    /// [start, stop, step] in dB, stop inclusive.
    pub gamma_db_range: Option<Vec<f64>>,
    /// Squared gains [own, cross...] for `rate`; unit gains when absent.
    pub gains: Option<Vec<f64>>,
    pub mc_draws: usize,
    pub trials: usize,
    pub draws: usize,
    pub seed: u64,
    pub mode: Mode,
    pub k_values: Vec<usize>,
    pub nu_grid: Vec<f64>,
    pub epsilon_grid: Vec<f64>,
    pub case: Option<u8>,
    pub two_user_optimum: bool,
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl ExperimentConfig {
    pub fn distribution(&self) -> sigcode::Result<SignatureDistribution> {
        match (self.nu, &self.pmf) {
            (Some(_), Some(_)) => {
                Err(sigcode::Error::InvalidDistribution("give either nu or pmf, not both".into()))
            }
            (Some(nu), None) => {
                if self.alphabet != [-1, 1] {
                    return Err(sigcode::Error::InvalidDistribution("nu requires the alphabet {-1, 1}".into()));
                }
                SignatureDistribution::binary(nu, self.epsilon, self.k)
            }
            (None, Some(pmf)) => SignatureDistribution::new(self.alphabet.clone(), pmf.clone(), self.epsilon, self.k),
            (None, None) => SignatureDistribution::uniform(self.alphabet.clone(), self.epsilon, self.k),
        }
    }

    /// SNR points in dB: the range when given, otherwise the single value.
    pub fn gamma_points(&self) -> Vec<f64> {
        match &self.gamma_db_range {
            Some(r) if r.len() == 3 && r[2] > 0.0 && r[1] >= r[0] => {
                let steps = ((r[1] - r[0]) / r[2] + 1e-9).floor() as usize;
                (0..=steps).map(|i| r[0] + i as f64 * r[2]).collect()
            }
            _ => vec![self.gamma_db],
        }
    }

    /// Every violated precondition; empty iff the run may start.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        let uses_dist = match self.command {
            Command::Smg => !self.two_user_optimum,
            Command::Rate => true,
            _ => false,
        };
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            v.push("epsilon must be in (0,1]".to_string());
        }
        if self.k == 0 {
            v.push("K must be at least 1".into());
        }
        if self.n < 2 {
            v.push("n must be at least 2".into());
        }
        if uses_dist {
            match self.distribution() {
                Err(sigcode::Error::InvalidDistribution(m)) if m.starts_with("epsilon") => {}
                Err(e) => v.push(e.to_string()),
                Ok(d) => {
                    let size = d.raw_support_size();
                    if self.mode == Mode::Exact && size > SUPPORT_CAP {
                        v.push(format!(
                            "support size {size} exceeds the cap {SUPPORT_CAP} for exact mode; use mode = sampled"
                        ));
                    }
                }
            }
        }
        if let Some(r) = &self.gamma_db_range {
            if r.len() != 3 || r.iter().any(|x| !x.is_finite()) || r[2] <= 0.0 || r[1] < r[0] {
                v.push("gamma_db_range must be [start, stop, step] with step > 0 and stop >= start".into());
            }
        }
        if !self.gamma_db.is_finite() {
            v.push("gamma_db must be finite".into());
        }
        if self.mc_draws < 100 {
            v.push("mc_draws must be at least 100".into());
        }
        if self.trials < 1000 {
            v.push("trials must be at least 1000".into());
        }
        if self.command == Command::Rate {
            if let Some(g) = &self.gains {
                if g.len() != self.n {
                    v.push(format!("gains must list {} squared magnitudes (own first)", self.n));
                }
                if g.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    v.push("gains must be finite and nonnegative".into());
                }
            }
        }
        if self.command == Command::Design {
            if self.k_values.is_empty() || self.k_values.contains(&0) {
                v.push("k_values must be nonempty and positive".into());
            }
            if self.nu_grid.is_empty() || self.nu_grid.iter().any(|x| !(0.0..=1.0).contains(x)) {
                v.push("nu_grid values must lie in [0,1]".into());
            }
            if self.epsilon_grid.is_empty() || self.epsilon_grid.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
                v.push("epsilon_grid values must be in (0,1]".into());
            }
        }
        if self.command == Command::Infer {
            match self.case {
                None => v.push("infer needs --case 1..4".into()),
                Some(c) if !(1..=4).contains(&c) => v.push(format!("case must be 1..4, got {c}")),
                Some(2 | 3) if self.epsilon >= 1.0 => v.push("cases 2 and 3 need masking (epsilon < 1)".into()),
                Some(2) if self.k != 1 => v.push("case 2 needs K = 1".into()),
                Some(4) if self.epsilon != 1.0 => v.push("case 4 needs epsilon = 1".into()),
                _ => {}
            }
            if self.draws == 0 {
                v.push("draws must be positive".into());
            }
        }
        if self.command == Command::Optimality && self.gamma_points().iter().any(|&g| g < 30.0) {
            v.push("optimality checks need gamma_db >= 30".into());
        }
        if self.command == Command::Figures && self.figure.is_none() {
            v.push("figures needs a figure name".into());
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_range_is_inclusive() {
        let raw = RawConfig { gamma_db_range: Some(vec![0.0, 1.0, 0.1]), ..Default::default() };
        let cfg = raw.resolve(Command::Rate, None);
        let pts = cfg.gamma_points();
        assert_eq!(pts.len(), 11);
        assert!((pts[10] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn figure_defaults() {
        let cfg = RawConfig::default().resolve(Command::Figures, Some(Figure::F77));
        assert_eq!((cfg.n, cfg.gamma_db, cfg.k_values.clone()), (4, 60.0, vec![1, 2, 3, 4]));
        assert_eq!(cfg.nu_grid.len(), 51);
        assert!(cfg.validate().is_empty());
    }

    #[test]
    fn merge_prefers_later() {
        let a = RawConfig { k: Some(3), seed: Some(1), ..Default::default() };
        let b = RawConfig { seed: Some(9), ..Default::default() };
        let cfg = a.merge(b).resolve(Command::Smg, None);
        assert_eq!((cfg.k, cfg.seed), (3, 9));
    }

    #[test]
    fn violations_collected_together() {
        let raw = RawConfig { epsilon: Some(0.0), n: Some(1), trials: Some(10), ..Default::default() };
        let v = raw.resolve(Command::Smg, None).validate();
        assert!(v.contains(&"epsilon must be in (0,1]".to_string()));
        assert!(v.len() >= 3);
    }
}
