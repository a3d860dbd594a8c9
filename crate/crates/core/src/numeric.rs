//! Small numeric helpers shared across modules.

/// Binary entropy in bits.
pub(crate) fn h2(p: f64) -> f64 {
    xlog2x_neg(p) + xlog2x_neg(1.0 - p)
}

/// -p log2 p with the 0 log 0 = 0 convention.
pub(crate) fn xlog2x_neg(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        -p * p.log2()
    }
}

/// log2(1 + 2^x) without overflow.
pub(crate) fn log2_1p_exp2(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp2().ln_1p() / std::f64::consts::LN_2
    } else {
        x.exp2().ln_1p() / std::f64::consts::LN_2
    }
}

/// Compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    pub(crate) fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum
    }
}

/// Running mean and standard error.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Moments {
    n: u64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    pub(crate) fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub(crate) fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    pub(crate) fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let mean = self.mean();
        let var = ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

/// log2 det(I + M) for a symmetric PSD `m` (row-major k×k), by in-place Cholesky.
///
/// `m` is overwritten. Pivots are clamped at a tiny positive value so that round-off on
/// rank-deficient inputs never produces NaN.
pub(crate) fn log2det_identity_plus(m: &mut [f64], k: usize) -> f64 {
    for i in 0..k {
        m[i * k + i] += 1.0;
    }
    log2det_spd(m, k)
}

/// log2 det of a symmetric positive definite matrix (row-major), destroying `m`.
pub(crate) fn log2det_spd(m: &mut [f64], k: usize) -> f64 {
    let mut acc = 0.0;
    for j in 0..k {
        let mut d = m[j * k + j];
        for p in 0..j {
            d -= m[j * k + p] * m[j * k + p];
        }
        let d = d.max(f64::MIN_POSITIVE);
        let l = d.sqrt();
        m[j * k + j] = l;
        acc += d.ln();
        for i in (j + 1)..k {
            let mut s = m[i * k + j];
            for p in 0..j {
                s -= m[i * k + p] * m[j * k + p];
            }
            m[i * k + j] = s / l;
        }
    }
    acc / std::f64::consts::LN_2
}
