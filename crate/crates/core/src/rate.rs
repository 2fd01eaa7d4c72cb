//! Analytic sum-rates under Gaussian signaling.
//!
//! Every log-det term is evaluated as `ln det(A + B) - ln det(B)` for
//! `log2 det(A B^-1 + I)`, with `B` Hermitian positive definite, so that only
//! Cholesky factors of Hermitian matrices are ever formed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flops;
use crate::linalg::{self, CMat, CVec};
use crate::precoding::SystemParams;

/// One interfering group seen from cluster `c`.
#[derive(Debug, Clone)]
pub struct Interferer {
    /// Estimate of the channel from the interferer's APs to cluster `c`'s
    /// scheduled UEs, `M_i x n_c`.
    pub g_hat: CMat,
    /// Matching estimation error, `M_i x n_c`.
    pub g_err: CMat,
    /// Interferer's composite precoder, `M_i x n_i`.
    pub p: CMat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub per_cluster_rate: Vec<f64>,
    pub total_rate: f64,
    /// Combined-receiver SINR per cluster.
    pub sinr_simplified: Vec<f64>,
}

/// `rho * (G^T P)(G^T P)^H`, the received covariance of a signal through `G`.
fn received_cov(g: &CMat, p: &CMat, rho: f64) -> CMat {
    let gp = linalg::mul(&g.transpose(), p);
    linalg::outer_h(&gp).scale(rho)
}

fn add_noise(m: &mut CMat, noise_var: f64) {
    for i in 0..m.nrows() {
        m[(i, i)] += noise_var;
    }
}

/// `log2 det(signal * cov^-1 + I)` with `signal` PSD and `cov` PD.
fn log2_det_ratio(signal: &CMat, cov: &CMat) -> Result<f64> {
    let num = linalg::ln_det_hpd(&(signal + cov))?;
    let den = linalg::ln_det_hpd(cov)?;
    let r = (num - den) / std::f64::consts::LN_2;
    if !r.is_finite() {
        return Err(Error::NumericalFailure("non-finite rate".into()));
    }
    // A + B >= B, so a negative value is rounding only
    Ok(r.max(0.0))
}

fn check_rows(what: &str, a: &CMat, b: &CMat) -> Result<()> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{what}: {} channel rows vs {} precoder rows",
            a.nrows(),
            b.nrows()
        )));
    }
    Ok(())
}

/// Sum-rate of a single cooperating group: `log2 det[R + I]` with
/// `R = rho Ĝ^T P P^H Ĝ* (rho G̃^T P P^H G̃* + s2 I)^-1`.
pub fn cf_sum_rate(g_hat: &CMat, g_err: &CMat, p: &CMat, params: &SystemParams) -> Result<f64> {
    check_rows("cf_sum_rate", g_hat, p)?;
    if g_hat.shape() != g_err.shape() {
        return Err(Error::DimensionMismatch("estimate and error shapes differ".into()));
    }
    if g_hat.ncols() == 0 {
        return Err(Error::DimensionMismatch("no UEs".into()));
    }
    let signal = received_cov(g_hat, p, params.rho_f);
    let mut cov = received_cov(g_err, p, params.rho_f);
    add_noise(&mut cov, params.noise_var);
    log2_det_ratio(&signal, &cov)
}

/// Interference-plus-noise covariance for cluster `c`: own estimation error,
/// other clusters' estimated and error channels, and noise.
pub fn cluster_covariance(
    g_err_cc: &CMat,
    p_c: &CMat,
    interferers: &[Interferer],
    params: &SystemParams,
) -> Result<CMat> {
    check_rows("own error", g_err_cc, p_c)?;
    let n = g_err_cc.ncols();
    let mut cov = received_cov(g_err_cc, p_c, params.rho_f);
    for (i, f) in interferers.iter().enumerate() {
        if f.g_hat.ncols() != n || f.g_err.shape() != f.g_hat.shape() {
            return Err(Error::DimensionMismatch(format!(
                "interferer {i}: blocks {:?}/{:?}, expected {} columns",
                f.g_hat.shape(),
                f.g_err.shape(),
                n
            )));
        }
        check_rows("interferer", &f.g_hat, &f.p)?;
        cov += received_cov(&f.g_hat, &f.p, params.rho_f);
        cov += received_cov(&f.g_err, &f.p, params.rho_f);
    }
    add_noise(&mut cov, params.noise_var);
    Ok(cov)
}

/// Cluster sum-rate `log2 det[(rho Ĝ_cc^T P_c P_c^H Ĝ_cc*) R_c^-1 + I]`.
pub fn cluster_sum_rate(g_hat_cc: &CMat, p_c: &CMat, r_c: &CMat, params: &SystemParams) -> Result<f64> {
    check_rows("cluster_sum_rate", g_hat_cc, p_c)?;
    if r_c.nrows() != g_hat_cc.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "covariance is {}x{}, expected {}",
            r_c.nrows(),
            r_c.ncols(),
            g_hat_cc.ncols()
        )));
    }
    let signal = received_cov(g_hat_cc, p_c, params.rho_f);
    log2_det_ratio(&signal, r_c)
}

/// Network sum over clusters, accumulated in index order.
pub fn total_clustered_rate(per_cluster: &[f64]) -> f64 {
    per_cluster.iter().sum()
}

/// The uniform combiner `1/sqrt(n) * ones(n)`.
pub fn combiner(n: usize) -> CVec {
    CVec::from_element(n, linalg::ONE * (1.0 / (n as f64).sqrt()))
}

/// `a^T M a` for a real combiner and Hermitian `M`, as a real scalar.
fn real_form(a: &CVec, m: &CMat) -> f64 {
    flops::matmul(1, m.nrows(), m.ncols());
    (a.transpose() * m * a)[(0, 0)].re
}

/// Combined-receiver SINR: `rho * a^T Ĝ^T W D D^H W^H Ĝ* a / a^T Z a` with
/// `Z = rho G̃^T P P^H G̃* + sum rho G_ic^T P_i P_i^H G_ic* + s2 I`.
pub fn simplified_sinr(
    g_hat_cc: &CMat,
    w: &CMat,
    d: &[f64],
    g_err_cc: &CMat,
    interferers: &[Interferer],
    params: &SystemParams,
) -> Result<f64> {
    check_rows("simplified_sinr", g_hat_cc, w)?;
    let n = g_hat_cc.ncols();
    let p = linalg::scale_columns(w, d);
    let a = combiner(n);
    let desired = params.rho_f * real_form(&a, &received_cov(g_hat_cc, &p, 1.0));
    let mut z = received_cov(g_err_cc, &p, params.rho_f);
    for f in interferers {
        if f.g_hat.ncols() != n {
            return Err(Error::DimensionMismatch("interferer column count".into()));
        }
        let g_true = &f.g_hat + &f.g_err;
        z += received_cov(&g_true, &f.p, params.rho_f);
    }
    add_noise(&mut z, params.noise_var);
    let denom = real_form(&a, &z);
    Ok(desired.max(0.0) / denom)
}

/// Simplified sum-rate `1/2 log2(1 + SINR)` used to steer power allocation.
pub fn simplified_sum_rate(
    g_hat_cc: &CMat,
    w: &CMat,
    d: &[f64],
    g_err_cc: &CMat,
    interferers: &[Interferer],
    params: &SystemParams,
) -> Result<f64> {
    let sinr = simplified_sinr(g_hat_cc, w, d, g_err_cc, interferers, params)?;
    Ok(0.5 * (1.0 + sinr).log2())
}
