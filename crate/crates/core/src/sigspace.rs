//! Exact rank and span tests over integer signature matrices, complement bases, and the
//! log-determinant pair entering the rate bound.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::numeric::log2det_identity_plus;
use crate::{Error, Result};

/// Interferer signatures as columns of a K-row integer matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureMatrix {
    k: usize,
    columns: Vec<Vec<i64>>,
}

impl SignatureMatrix {
    pub fn new(k: usize, columns: Vec<Vec<i64>>) -> Result<Self> {
        if let Some(c) = columns.iter().find(|c| c.len() != k) {
            return Err(Error::InvalidVector(format!("column of length {} in a {k}-row matrix", c.len())));
        }
        Ok(Self { k, columns })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn columns(&self) -> &[Vec<i64>] {
        &self.columns
    }
}

/// Orthonormal K×(K−1) basis of the complement of s (K×K identity for s = 0).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplementBasis {
    pub matrix: DMatrix<f64>,
}

pub fn exact_rank(m: &SignatureMatrix) -> usize {
    let cols: Vec<&[i64]> = m.columns.iter().map(|c| c.as_slice()).collect();
    rank_of_columns(&cols, m.k)
}

/// Rank over the rationals by fraction-free (Bareiss) elimination.
pub(crate) fn rank_of_columns(cols: &[&[i64]], k: usize) -> usize {
    let m = cols.len();
    if m == 0 || k == 0 {
        return 0;
    }
    // Row-major k×m.
    let mut a: Vec<i128> = vec![0; k * m];
    for (j, c) in cols.iter().enumerate() {
        for i in 0..k {
            a[i * m + j] = c[i] as i128;
        }
    }
    bareiss_rank(&mut a, k, m)
}

fn bareiss_rank(a: &mut [i128], rows: usize, cols: usize) -> usize {
    let mut prev: i128 = 1;
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows).find(|&i| a[i * cols + c] != 0) else {
            continue;
        };
        if p != r {
            for j in 0..cols {
                a.swap(p * cols + j, r * cols + j);
            }
        }
        let piv = a[r * cols + c];
        for i in (r + 1)..rows {
            let f = a[i * cols + c];
            for j in (c + 1)..cols {
                a[i * cols + j] = (a[i * cols + j] * piv - f * a[r * cols + j]) / prev;
            }
            a[i * cols + c] = 0;
        }
        prev = piv;
        r += 1;
    }
    r
}

pub fn in_column_span(s: &[i64], m: &SignatureMatrix) -> Result<bool> {
    if s.len() != m.k {
        return Err(Error::InvalidVector(format!("length {} does not match K = {}", s.len(), m.k)));
    }
    let mut cols: Vec<&[i64]> = m.columns.iter().map(|c| c.as_slice()).collect();
    let base = rank_of_columns(&cols, m.k);
    cols.push(s);
    Ok(rank_of_columns(&cols, m.k) == base)
}

pub(crate) fn spans(s: &[i64], cols: &[&[i64]], k: usize, base_rank: usize) -> bool {
    let mut all: Vec<&[i64]> = Vec::with_capacity(cols.len() + 1);
    all.extend_from_slice(cols);
    all.push(s);
    rank_of_columns(&all, k) == base_rank
}

/// Householder construction: the reflector sending s/‖s‖ to a multiple of e1; its last
/// K−1 columns span the complement of s.
pub fn complement_basis(s: &[i64]) -> ComplementBasis {
    let k = s.len();
    let norm = s.iter().map(|&a| (a * a) as f64).sum::<f64>().sqrt();
    if norm == 0.0 {
        return ComplementBasis { matrix: DMatrix::identity(k, k) };
    }
    let mut v = DVector::from_iterator(k, s.iter().map(|&a| a as f64 / norm));
    let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
    v[0] += sign;
    let vv = v.dot(&v);
    let h = DMatrix::identity(k, k) - (&v * v.transpose()) * (2.0 / vv);
    ComplementBasis { matrix: h.columns(1, k - 1).into_owned() }
}

/// Gram–Schmidt alternative to [`complement_basis`], used to check basis invariance.
pub fn complement_basis_gram_schmidt(s: &[i64]) -> ComplementBasis {
    let k = s.len();
    let norm = s.iter().map(|&a| (a * a) as f64).sum::<f64>().sqrt();
    if norm == 0.0 {
        return ComplementBasis { matrix: DMatrix::identity(k, k) };
    }
    let mut basis: Vec<DVector<f64>> = vec![DVector::from_iterator(k, s.iter().map(|&a| a as f64 / norm))];
    for i in (0..k).rev() {
        let mut e = DVector::zeros(k);
        e[i] = 1.0;
        for b in &basis {
            let d = b.dot(&e);
            e -= b * d;
        }
        let n = e.norm();
        if n > 1e-8 {
            basis.push(e / n);
        }
        if basis.len() == k {
            break;
        }
    }
    ComplementBasis { matrix: DMatrix::from_columns(&basis[1..]) }
}

/// (log2 det(I + β²γ Gᵀ S D Sᵀ G), log2 det(I + β²γ S D Sᵀ)) with D = diag(gains_sq) and G
/// the Householder complement basis of s.
pub fn det_ratio_terms(
    s: &[i64],
    interferers: &SignatureMatrix,
    gains_sq: &[f64],
    beta_sq: f64,
    gamma: f64,
) -> Result<(f64, f64)> {
    if s.iter().all(|&a| a == 0) {
        return Err(Error::InvalidVector("s must be nonzero".into()));
    }
    det_ratio_terms_with_basis(&complement_basis(s).matrix, s, interferers, gains_sq, beta_sq, gamma)
}

pub fn det_ratio_terms_with_basis(
    basis: &DMatrix<f64>,
    s: &[i64],
    interferers: &SignatureMatrix,
    gains_sq: &[f64],
    beta_sq: f64,
    gamma: f64,
) -> Result<(f64, f64)> {
    let k = interferers.k;
    if s.len() != k {
        return Err(Error::InvalidVector(format!("length {} does not match K = {k}", s.len())));
    }
    if gains_sq.len() != interferers.columns.len() {
        return Err(Error::InvalidArgument(format!(
            "{} gains for {} interferers",
            gains_sq.len(),
            interferers.columns.len()
        )));
    }
    if gains_sq.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
        return Err(Error::InvalidArgument("gains must be finite and nonnegative".into()));
    }
    if !(beta_sq.is_finite() && beta_sq > 0.0 && gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidArgument("beta_sq and gamma must be finite and positive".into()));
    }
    let c = beta_sq * gamma;
    let mut a = DMatrix::<f64>::zeros(k, k);
    for (col, &g) in interferers.columns.iter().zip(gains_sq) {
        let t = DVector::from_iterator(k, col.iter().map(|&x| x as f64));
        a += (&t * t.transpose()) * (c * g);
    }
    let b = basis.transpose() * &a * basis;
    let kb = b.nrows();
    let mut den: Vec<f64> = a.transpose().as_slice().to_vec();
    let mut num: Vec<f64> = b.transpose().as_slice().to_vec();
    Ok((log2det_identity_plus(&mut num, kb), log2det_identity_plus(&mut den, k)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(cols: Vec<Vec<i64>>) -> SignatureMatrix {
        let k = cols[0].len();
        SignatureMatrix::new(k, cols).unwrap()
    }

    #[test]
    fn rank_examples() {
        assert_eq!(exact_rank(&mat(vec![vec![1, 1], vec![-1, -1]])), 1);
        assert_eq!(exact_rank(&mat(vec![vec![1, 1], vec![1, -1]])), 2);
        assert_eq!(exact_rank(&SignatureMatrix::new(3, vec![]).unwrap()), 0);
        assert_eq!(exact_rank(&mat(vec![vec![0, 0, 0]])), 0);
        assert_eq!(
            exact_rank(&mat(vec![vec![1, 2, 3], vec![4, 5, 6], vec![7, 8, 9]])),
            2
        );
    }

    #[test]
    fn span_examples() {
        assert!(in_column_span(&[1, 1], &mat(vec![vec![-1, -1]])).unwrap());
        assert!(!in_column_span(&[1, -1], &mat(vec![vec![1, 1]])).unwrap());
        assert!(in_column_span(&[0, 0], &SignatureMatrix::new(2, vec![]).unwrap()).unwrap());
        assert!(in_column_span(&[1], &SignatureMatrix::new(2, vec![]).unwrap()).is_err());
    }

    #[test]
    fn basis_examples() {
        let g = complement_basis(&[1, 0]).matrix;
        assert_eq!(g.shape(), (2, 1));
        assert!(g[(0, 0)].abs() < 1e-15 && (g[(1, 0)].abs() - 1.0).abs() < 1e-15);
        let g = complement_basis(&[1, 1]).matrix;
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((g[(0, 0)].abs() - r).abs() < 1e-15);
        assert!((g[(0, 0)] + g[(1, 0)]).abs() < 1e-15);
        assert_eq!(complement_basis(&[0, 0, 0]).matrix, DMatrix::identity(3, 3));
    }

    #[test]
    fn basis_is_orthonormal_complement() {
        for s in [vec![1, -1, 1, 1], vec![-2, 0, 1], vec![0, 0, -1], vec![1, 2, -2, 1, 0]] {
            for g in [complement_basis(&s).matrix, complement_basis_gram_schmidt(&s).matrix] {
                let gtg = g.transpose() * &g;
                assert!((gtg - DMatrix::identity(s.len() - 1, s.len() - 1)).amax() < 1e-12);
                let sv = DVector::from_iterator(s.len(), s.iter().map(|&x| x as f64));
                assert!((g.transpose() * sv).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn det_terms_examples() {
        let s = [1, 1];
        let zero = mat(vec![vec![0, 0], vec![0, 0]]);
        assert_eq!(det_ratio_terms(&s, &zero, &[1.0, 2.0], 0.5, 10.0).unwrap(), (0.0, 0.0));

        let t = mat(vec![vec![1, -1]]);
        let (num, den) = det_ratio_terms(&s, &t, &[1.0], 1.0, 1.0).unwrap();
        assert!((num - 3f64.log2()).abs() < 1e-12 && (den - 3f64.log2()).abs() < 1e-12);

        // Single interferer: den = log2(1 + c g ‖t‖²), num = log2(1 + c g ‖Gᵀt‖²).
        let t = mat(vec![vec![1, 0]]);
        let (num, den) = det_ratio_terms(&s, &t, &[3.0], 0.5, 4.0).unwrap();
        assert!((den - (1.0 + 6.0f64).log2()).abs() < 1e-12);
        assert!((num - (1.0 + 6.0 * 0.5f64).log2()).abs() < 1e-12);
    }

    #[test]
    fn det_terms_errors() {
        let t = mat(vec![vec![1, 0]]);
        assert!(det_ratio_terms(&[0, 0], &t, &[1.0], 1.0, 1.0).is_err());
        assert!(det_ratio_terms(&[1, 0], &t, &[f64::NAN], 1.0, 1.0).is_err());
        assert!(det_ratio_terms(&[1, 0], &t, &[1.0], 1.0, f64::INFINITY).is_err());
        assert!(det_ratio_terms(&[1, 0], &t, &[1.0, 1.0], 1.0, 1.0).is_err());
    }
}
