//! Zero-mean complex Gaussian mixtures: entropy bounds, Monte Carlo entropy, and a numerical
//! check of the conditional entropy-power inequality on rate-model instances.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::codebook::{enumerate_support, normalization, SignatureDistribution};
use crate::numeric::xlog2x_neg;
use crate::rate::ChannelDraw;
use crate::sigspace::complement_basis;
use crate::smg::chunked_mc;
use crate::{Error, Result};

type C64 = Complex<f64>;

const TOL: f64 = 1e-10;
const MIN_SAMPLES: usize = 10_000;
/// Largest component count built by [`EpiInstance::from_signature`].
pub const COMPONENT_CAP: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct MixedGaussianModel {
    components: Vec<(f64, DMatrix<C64>)>,
    dim: usize,
}

impl MixedGaussianModel {
    pub fn new(components: Vec<(f64, DMatrix<C64>)>) -> Result<Self> {
        let Some((_, first)) = components.first() else {
            return Err(Error::InvalidDistribution("mixture needs at least one component".into()));
        };
        let dim = first.nrows();
        if dim == 0 {
            return Err(Error::InvalidDistribution("dimension must be positive".into()));
        }
        let mut total = 0.0;
        for (w, m) in &components {
            if !(*w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidDistribution("weights must be nonnegative".into()));
            }
            total += w;
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::InvalidDistribution("covariances must all be t×t".into()));
            }
            let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
            if (m - m.adjoint()).iter().any(|z| z.norm() > TOL * scale) {
                return Err(Error::InvalidDistribution("covariance is not Hermitian".into()));
            }
            let eig = m.clone().symmetric_eigenvalues();
            if eig.iter().any(|&l| l < -TOL * scale) {
                return Err(Error::InvalidDistribution("covariance is not positive semi-definite".into()));
            }
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { components, dim })
    }

    /// Mixture of real covariances.
    pub fn from_real(components: Vec<(f64, DMatrix<f64>)>) -> Result<Self> {
        Self::new(components.into_iter().map(|(w, m)| (w, m.map(|x| C64::new(x, 0.0)))).collect())
    }

    pub fn components(&self) -> &[(f64, DMatrix<C64>)] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weight_entropy(&self) -> f64 {
        self.components.iter().map(|(w, _)| xlog2x_neg(*w)).sum()
    }

    /// Every covariance multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let components = self.components.iter().map(|(w, m)| (*w, m * C64::new(c, 0.0))).collect();
        Self { components, dim: self.dim }
    }
}

fn cholesky(m: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::InvalidArgument("singular covariance, add the noise floor".into()))
}

fn log2det_from_chol(l: &DMatrix<C64>) -> f64 {
    2.0 * l.diagonal().iter().map(|z| z.re.log2()).sum::<f64>()
}

/// log2 of the circularly-symmetric Gaussian entropy: log2((πe)^t det Ω).
fn gaussian_entropy(t: usize, log2det: f64) -> f64 {
    t as f64 * (std::f64::consts::PI * std::f64::consts::E).log2() + log2det
}

/// (lower, upper) bits. The gap is exactly the entropy of the weights.
pub fn entropy_bounds(m: &MixedGaussianModel) -> Result<(f64, f64)> {
    let mut lower = 0.0;
    for (w, cov) in &m.components {
        if *w > 0.0 {
            lower += w * gaussian_entropy(m.dim, log2det_from_chol(&cholesky(cov)?));
        }
    }
    Ok((lower, lower + m.weight_entropy()))
}

/// Log-density evaluator over the trailing `offset..dim` coordinates of each component.
struct Density {
    offset: usize,
    log2w: Vec<f64>,
    chol: Vec<DMatrix<C64>>,
    /// log2 of the normalizing constant π^t det Ω.
    log2norm: Vec<f64>,
}

impl Density {
    fn new(m: &MixedGaussianModel, offset: usize) -> Result<Self> {
        let t = m.dim - offset;
        let mut d = Density { offset, log2w: vec![], chol: vec![], log2norm: vec![] };
        for (w, cov) in m.components.iter().filter(|(w, _)| *w > 0.0) {
            let sub = cov.view((offset, offset), (t, t)).into_owned();
            let l = cholesky(&sub)?;
            d.log2w.push(w.log2());
            d.log2norm.push(t as f64 * std::f64::consts::PI.log2() + log2det_from_chol(&l));
            d.chol.push(l);
        }
        Ok(d)
    }

    fn log2_pdf(&self, x: &DVector<C64>) -> f64 {
        let x = x.rows(self.offset, x.len() - self.offset).into_owned();
        let terms: Vec<f64> = self
            .chol
            .iter()
            .zip(&self.log2w)
            .zip(&self.log2norm)
            .map(|((l, lw), ln)| {
                let y = l.solve_lower_triangular(&x).expect("cholesky factor is nonsingular");
                lw - ln - y.norm_squared() * std::f64::consts::LOG2_E
            })
            .collect();
        let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        top + terms.iter().map(|v| (v - top).exp2()).sum::<f64>().log2()
    }
}

struct Sampler {
    cumulative: Vec<f64>,
    chol: Vec<DMatrix<C64>>,
    dim: usize,
}

impl Sampler {
    fn new(m: &MixedGaussianModel) -> Result<Self> {
        let mut acc = 0.0;
        let mut s = Sampler { cumulative: vec![], chol: vec![], dim: m.dim };
        for (w, cov) in m.components.iter().filter(|(w, _)| *w > 0.0) {
            acc += w;
            s.cumulative.push(acc);
            s.chol.push(cholesky(cov)?);
        }
        Ok(s)
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> DVector<C64> {
        let u: f64 = rng.random::<f64>() * self.cumulative.last().copied().unwrap_or(1.0);
        let idx = self.cumulative.partition_point(|&c| c <= u).min(self.chol.len() - 1);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let w = DVector::from_fn(self.dim, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(re * h, im * h)
        });
        &self.chol[idx] * w
    }
}

/// Plug-in estimate of h(X) in bits with its standard error.
pub fn entropy_mc<R: Rng + ?Sized>(m: &MixedGaussianModel, samples: usize, rng: &mut R) -> Result<(f64, f64)> {
    conditional_entropy_mc(m, m.dim, samples, rng)
}

/// h(X | Y) where the model is the joint law of (X, Y) and X is the leading `t` coordinates.
pub fn conditional_entropy_mc<R: Rng + ?Sized>(
    joint: &MixedGaussianModel,
    t: usize,
    samples: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if samples < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!("need at least {MIN_SAMPLES} samples")));
    }
    if t == 0 || t > joint.dim {
        return Err(Error::InvalidArgument("conditioned block must be nonempty".into()));
    }
    let sampler = Sampler::new(joint)?;
    let full = Density::new(joint, 0)?;
    let side = (t < joint.dim).then(|| Density::new(joint, t)).transpose()?;
    Ok(chunked_mc(samples, rng, |r| {
        let x = sampler.draw(r);
        let cond = side.as_ref().map_or(0.0, |d| d.log2_pdf(&x));
        cond - full.log2_pdf(&x)
    }))
}

/// Θ₁ ~ CN(0, signal_cov) independent of (Θ₂, Θ₃), whose joint law is `joint` with Θ₂ the
/// leading t coordinates. The check is on h(Θ₁+Θ₂|Θ₃) against h(Θ₁) and h(Θ₂|Θ₃).
#[derive(Debug, Clone, PartialEq)]
pub struct EpiInstance {
    pub signal_cov: DMatrix<C64>,
    pub joint: MixedGaussianModel,
}

fn complexify(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|x| C64::new(x, 0.0))
}

impl EpiInstance {
    pub fn new(signal_cov: DMatrix<C64>, joint: MixedGaussianModel) -> Result<Self> {
        let t = signal_cov.nrows();
        if t == 0 || signal_cov.ncols() != t || t > joint.dim() {
            return Err(Error::InvalidArgument("signal covariance must be t×t with t ≤ joint dimension".into()));
        }
        Ok(Self { signal_cov, joint })
    }

    pub fn t(&self) -> usize {
        self.signal_cov.nrows()
    }

    /// Two-user masking-only setting, own transmission active: signal power γ|h11|²/ε,
    /// interference γ|h21|²/ε with probability ε, unit noise.
    pub fn scheme_b(epsilon: f64, gamma: f64, h11_sq: f64, h21_sq: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::InvalidArgument("epsilon must be in (0,1]".into()));
        }
        let one = |v: f64| DMatrix::from_element(1, 1, C64::new(v, 0.0));
        let mut comps = vec![(epsilon, one(1.0 + gamma * h21_sq / epsilon))];
        if epsilon < 1.0 {
            comps.push((1.0 - epsilon, one(1.0)));
        }
        Self::new(one(gamma * h11_sq / epsilon), MixedGaussianModel::new(comps)?)
    }

    /// Receiver of user 1 with own signature `s`, interferers drawn from `dist`. With
    /// `condition` the output is rotated so the first coordinate lies along s and the
    /// remaining K−1 are the conditioning projection; otherwise the full K-dimensional
    /// output is used without side information.
    pub fn from_signature(
        dist: &SignatureDistribution,
        channel: &ChannelDraw,
        s: &[i64],
        gamma: f64,
        condition: bool,
    ) -> Result<Self> {
        let k = dist.k();
        if s.len() != k || s.iter().all(|&a| a == 0) {
            return Err(Error::InvalidVector("own signature must be a nonzero length-K vector".into()));
        }
        let atoms = enumerate_support(dist)?;
        let n_int = channel.cross_gains_sq.len();
        let count = (atoms.len() as f64).powi(n_int as i32);
        if count > COMPONENT_CAP as f64 {
            return Err(Error::SupportTooLarge { size: count as u128, cap: COMPONENT_CAP as u128 });
        }
        let c = normalization(dist).beta_sq * gamma;
        let sv = DVector::from_iterator(k, s.iter().map(|&a| a as f64));
        let rot = if condition {
            let mut q = DMatrix::zeros(k, k);
            q.set_column(0, &(&sv / sv.norm()));
            q.columns_mut(1, k - 1).copy_from(&complement_basis(s).matrix);
            q
        } else {
            DMatrix::identity(k, k)
        };
        let mut comps = Vec::with_capacity(count as usize);
        let mut idx = vec![0usize; n_int];
        loop {
            let mut cov = DMatrix::<f64>::identity(k, k);
            let mut w = 1.0;
            for (j, &i) in idx.iter().enumerate() {
                let a = &atoms[i];
                w *= a.prob;
                let tv = DVector::from_iterator(k, a.vector.iter().map(|&x| x as f64));
                cov += &tv * tv.transpose() * (c * channel.cross_gains_sq[j]);
            }
            comps.push((w, complexify(&(rot.transpose() * cov * &rot))));
            let mut j = 0;
            while j < n_int {
                idx[j] += 1;
                if idx[j] < atoms.len() {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == n_int {
                break;
            }
        }
        // Weights are products of probabilities and may drift from 1 by rounding.
        let total: f64 = comps.iter().map(|(w, _)| w).sum();
        comps.iter_mut().for_each(|(w, _)| *w /= total);
        let own = c * channel.own_gain_sq;
        let signal = if condition {
            DMatrix::from_element(1, 1, own * sv.norm_squared())
        } else {
            &sv * sv.transpose() * own
        };
        Self::new(complexify(&signal), MixedGaussianModel::new(comps)?)
    }

    fn with_signal(&self) -> MixedGaussianModel {
        let t = self.t();
        let components = self
            .joint
            .components()
            .iter()
            .map(|(w, m)| {
                let mut m = m.clone();
                let mut block = m.view_mut((0, 0), (t, t));
                block += &self.signal_cov;
                (*w, m)
            })
            .collect();
        MixedGaussianModel { components, dim: self.joint.dim() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpiRow {
    pub t: usize,
    pub h_sum: f64,
    pub h_sum_stderr: f64,
    pub h_signal: f64,
    pub h_interference: f64,
    pub h_interference_stderr: f64,
    /// 2^{h_sum/t}
    pub lhs: f64,
    /// 2^{h_signal/t} + 2^{h_interference/t}
    pub rhs: f64,
    /// Four combined standard errors on the entropy-power scale.
    pub slack: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpiReport {
    pub rows: Vec<EpiRow>,
}

impl EpiReport {
    pub fn all_hold(&self) -> bool {
        self.rows.iter().all(|r| r.holds)
    }
}

pub fn epi_check<R: Rng + ?Sized>(instances: &[EpiInstance], samples: usize, rng: &mut R) -> Result<EpiReport> {
    let mut rows = Vec::with_capacity(instances.len());
    for inst in instances {
        let t = inst.t();
        let tf = t as f64;
        let (h_sum, se_sum) = conditional_entropy_mc(&inst.with_signal(), t, samples, rng)?;
        let (h_int, se_int) = conditional_entropy_mc(&inst.joint, t, samples, rng)?;
        // A singular signal covariance has zero entropy power.
        let h_sig = match inst.signal_cov.clone().cholesky() {
            Some(c) => gaussian_entropy(t, log2det_from_chol(&c.l())),
            None => f64::NEG_INFINITY,
        };
        let p = |h: f64| (h / tf).exp2();
        let (lhs, p_sig, p_int) = (p(h_sum), p(h_sig), p(h_int));
        let d = std::f64::consts::LN_2 / tf;
        let slack = 4.0 * ((lhs * d * se_sum).powi(2) + (p_int * d * se_int).powi(2)).sqrt();
        let rhs = p_sig + p_int;
        rows.push(EpiRow {
            t,
            h_sum,
            h_sum_stderr: se_sum,
            h_signal: h_sig,
            h_interference: h_int,
            h_interference_stderr: se_int,
            lhs,
            rhs,
            slack,
            holds: lhs >= rhs - slack,
        });
    }
    Ok(EpiReport { rows })
}

/// Random mixture for tests and sweeps: `comps` components with Dirichlet(1) weights and
/// covariances I + G Gᴴ, G having i.i.d. CN(0, scale) entries.
pub fn random_mixture<R: Rng + ?Sized>(t: usize, comps: usize, scale: f64, rng: &mut R) -> Result<MixedGaussianModel> {
    let raw: Vec<f64> = (0..comps).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    let sd = (scale / 2.0).sqrt();
    let components = raw
        .iter()
        .map(|w| {
            let g = DMatrix::from_fn(t, t, |_, _| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                C64::new(re * sd, im * sd)
            });
            let cov = DMatrix::identity(t, t) + &g * g.adjoint();
            // Symmetrize away rounding so the Hermitian check is exact.
            (w / total, (&cov + cov.adjoint()) * C64::new(0.5, 0.0))
        })
        .collect();
    MixedGaussianModel::new(components)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    fn scalar(v: f64) -> DMatrix<C64> {
        DMatrix::from_element(1, 1, C64::new(v, 0.0))
    }

    #[test]
    fn gaussian_bounds() {
        let m = MixedGaussianModel::new(vec![(1.0, scalar(1.0))]).unwrap();
        let (lo, hi) = entropy_bounds(&m).unwrap();
        let pe = (std::f64::consts::PI * std::f64::consts::E).log2();
        assert!((lo - pe).abs() < 1e-12 && (hi - pe).abs() < 1e-12);
        let m = MixedGaussianModel::new(vec![(0.5, scalar(1.0)), (0.5, scalar(1.0))]).unwrap();
        let (lo, hi) = entropy_bounds(&m).unwrap();
        assert!((lo - pe).abs() < 1e-12 && (hi - lo - 1.0).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(MixedGaussianModel::new(vec![(0.7, scalar(1.0))]).is_err());
        assert!(MixedGaussianModel::new(vec![(1.0, scalar(-1.0))]).is_err());
        let mut m = DMatrix::from_element(2, 2, C64::new(0.0, 0.0));
        m[(0, 1)] = C64::new(0.0, 1.0);
        m[(1, 0)] = C64::new(0.0, 1.0);
        assert!(MixedGaussianModel::new(vec![(1.0, m)]).is_err());
        let singular = MixedGaussianModel::new(vec![(1.0, scalar(0.0))]).unwrap();
        assert!(entropy_bounds(&singular).is_err());
    }

    #[test]
    fn mc_matches_gaussian() {
        let m = MixedGaussianModel::new(vec![(1.0, scalar(3.0))]).unwrap();
        let (h, se) = entropy_mc(&m, 20_000, &mut rng()).unwrap();
        let exact = entropy_bounds(&m).unwrap().0;
        assert!((h - exact).abs() < 3.0 * se);
        assert!(entropy_mc(&m, 100, &mut rng()).is_err());
    }

    #[test]
    fn separated_components_inside_bounds() {
        let m = MixedGaussianModel::new(vec![(0.5, scalar(1.0)), (0.5, scalar(1e4))]).unwrap();
        let (lo, hi) = entropy_bounds(&m).unwrap();
        let (h, se) = entropy_mc(&m, 20_000, &mut rng()).unwrap();
        assert!(lo - 3.0 * se <= h && h <= hi + 3.0 * se);
    }

    #[test]
    fn scheme_b_sandwich() {
        let inst = EpiInstance::scheme_b(0.5, 100.0, 1.0, 1.0).unwrap();
        let (lo, hi) = entropy_bounds(&inst.joint).unwrap();
        let (h, se) = entropy_mc(&inst.joint, 20_000, &mut rng()).unwrap();
        assert!(lo - 3.0 * se <= h && h <= hi + 3.0 * se);
    }

    #[test]
    fn epi_gaussian_equality() {
        let inst = EpiInstance::new(scalar(2.0), MixedGaussianModel::new(vec![(1.0, scalar(5.0))]).unwrap()).unwrap();
        let row = epi_check(&[inst], 20_000, &mut rng()).unwrap().rows[0];
        assert!(row.holds);
        assert!((row.lhs - row.rhs).abs() <= row.slack);
    }

    #[test]
    fn epi_scheme_b_strict() {
        let inst = EpiInstance::scheme_b(0.5, 100.0, 1.0, 1.0).unwrap();
        let row = epi_check(&[inst], 20_000, &mut rng()).unwrap().rows[0];
        assert!(row.holds);
        assert!(row.lhs - row.rhs > row.slack);
    }

    #[test]
    fn epi_spread_instances() {
        let dist = SignatureDistribution::binary(0.5, 0.5, 2).unwrap();
        let ch = ChannelDraw::new(1.0, vec![0.7, 1.3]).unwrap();
        let a = EpiInstance::from_signature(&dist, &ch, &[1, -1], 100.0, true).unwrap();
        let b = EpiInstance::from_signature(&dist, &ch, &[1, -1], 100.0, false).unwrap();
        assert_eq!((a.t(), b.t()), (1, 2));
        assert!(epi_check(&[a, b], 20_000, &mut rng()).unwrap().all_hold());
    }

    #[test]
    fn scaling_shifts_bounds() {
        let m = random_mixture(3, 4, 2.0, &mut rng()).unwrap();
        let (lo, hi) = entropy_bounds(&m).unwrap();
        let (lo2, hi2) = entropy_bounds(&m.scaled(8.0)).unwrap();
        assert!((lo2 - lo - 9.0).abs() < 1e-9 && (hi2 - hi - 9.0).abs() < 1e-9);
    }
}
