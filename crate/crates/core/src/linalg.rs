//! Complex dense-matrix helpers shared by the precoding and rate modules.
//!
//! Every helper that does arithmetic reports its cost to [`crate::flops`].

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::flops;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Counted matrix product.
pub fn mul(a: &CMat, b: &CMat) -> CMat {
    flops::matmul(a.nrows(), a.ncols(), b.ncols());
    a * b
}

/// `a^T * conj(b)`, the shape every covariance term in the rate model takes.
pub fn t_conj(a: &CMat, b: &CMat) -> CMat {
    flops::matmul(a.ncols(), a.nrows(), b.ncols());
    a.transpose() * b.conjugate()
}

/// `m * m^H`.
pub fn outer_h(m: &CMat) -> CMat {
    flops::matmul(m.nrows(), m.ncols(), m.nrows());
    m * m.adjoint()
}

/// `(m + m^H) / 2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Largest entry-wise deviation from Hermitian symmetry.
pub fn hermitian_defect(m: &CMat) -> f64 {
    let adj = m.adjoint();
    m.iter()
        .zip(adj.iter())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn frobenius_sq(m: &CMat) -> f64 {
    flops::linear(m.len());
    m.iter().map(|z| z.norm_sqr()).sum()
}

pub fn column_norms_sq(m: &CMat) -> Vec<f64> {
    flops::linear(m.len());
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm_sqr()).sum())
        .collect()
}

/// Natural log-determinant of a Hermitian positive definite matrix via
/// Cholesky of its Hermitian part.
pub fn ln_det_hpd(m: &CMat) -> Result<f64> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "log-det of non-square {}x{}",
            n,
            m.ncols()
        )));
    }
    flops::cubic(n);
    let chol = cholesky(m)?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..n {
        acc += l[(i, i)].re.ln();
    }
    let v = 2.0 * acc;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NumericalFailure("non-finite log-determinant".into()))
    }
}

/// Inverse of a Hermitian positive definite matrix.
pub fn inverse_hpd(m: &CMat) -> Result<CMat> {
    flops::cubic(m.nrows());
    Ok(cholesky(m)?.inverse())
}

fn cholesky(m: &CMat) -> Result<nalgebra::Cholesky<Complex64, nalgebra::Dyn>> {
    let not_pd = || Error::NumericalFailure("matrix is not positive definite".into());
    let chol = hermitian_part(m).cholesky().ok_or_else(not_pd)?;
    // complex Cholesky takes square roots of negative pivots silently
    let l = chol.l_dirty();
    for i in 0..m.nrows() {
        let p = l[(i, i)];
        if !(p.re > 0.0 && p.im.abs() <= 1e-8 * p.re) {
            return Err(not_pd());
        }
    }
    Ok(chol)
}

/// Ascending eigenvalues of the Hermitian part of `m`.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    flops::cubic(m.nrows());
    let mut ev: Vec<f64> = hermitian_part(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Scales each column to unit Euclidean norm. Zero columns are left as is.
pub fn normalize_columns(m: &CMat) -> CMat {
    let norms = column_norms_sq(m);
    let mut out = m.clone();
    for (j, n2) in norms.into_iter().enumerate() {
        if n2 > 0.0 {
            out.column_mut(j).scale_mut(1.0 / n2.sqrt());
        }
    }
    out
}

/// `m * diag(d)` for a real diagonal.
pub fn scale_columns(m: &CMat, d: &[f64]) -> CMat {
    assert_eq!(m.ncols(), d.len(), "column count must match diagonal length");
    flops::linear(m.len());
    let mut out = m.clone();
    for (j, &dj) in d.iter().enumerate() {
        out.column_mut(j).scale_mut(dj);
    }
    out
}

/// Restricts `m` to the given columns, in order.
pub fn select_columns(m: &CMat, cols: &[usize]) -> CMat {
    CMat::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}

/// Restricts `m` to the given rows and columns, in order.
pub fn select(m: &CMat, rows: &[usize], cols: &[usize]) -> CMat {
    CMat::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn ln_det_matches_closed_form_2x2() {
        // [[2, i], [-i, 3]] has det 6 - 1 = 5
        let m = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(3.0, 0.0)]);
        assert_relative_eq!(ln_det_hpd(&m).unwrap(), 5f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn ln_det_rejects_indefinite() {
        let m = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(ln_det_hpd(&m), Err(Error::NumericalFailure(_))));
    }

    #[test]
    fn normalize_twice_is_once() {
        let m = CMat::from_row_slice(2, 2, &[c(3.0, 1.0), c(0.5, 0.0), c(-4.0, 2.0), c(0.0, 0.1)]);
        let once = normalize_columns(&m);
        let twice = normalize_columns(&once);
        assert!((once - twice).norm() < 1e-15);
    }

    #[test]
    fn inverse_hpd_roundtrip() {
        let m = CMat::from_row_slice(2, 2, &[c(4.0, 0.0), c(1.0, 1.0), c(1.0, -1.0), c(3.0, 0.0)]);
        let inv = inverse_hpd(&m).unwrap();
        assert!((&m * inv - identity(2)).norm() < 1e-14);
    }
}
