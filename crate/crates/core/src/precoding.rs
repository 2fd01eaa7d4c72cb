//! Linear ZF and MMSE transmit filters, factored as `P = W * diag(d)` with
//! unit-norm columns in `W` so that the amplitudes `d` carry all per-UE power.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flops;
use crate::linalg::{self, CMat};

/// Default cap on the condition number of the channel estimate for ZF.
pub const ZF_CONDITION_CAP: f64 = 1e10;

/// Relative slack allowed on the Frobenius power budget.
pub const BUDGET_TOLERANCE: f64 = 1e-9;

/// Gradient-ascent step size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "lowercase")]
pub enum StepSize {
    /// A fixed step `lambda`.
    Absolute(f64),
    /// `mu / (2 * largest eigenvalue of the objective kernel)`, so that
    /// `mu <= 1` always satisfies the quadratic ascent bound.
    Relative(f64),
}

impl StepSize {
    pub fn value(&self) -> f64 {
        match *self {
            StepSize::Absolute(v) | StepSize::Relative(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Transmit power scale per antenna, linear.
    pub rho_f: f64,
    /// Receiver noise variance, linear.
    pub noise_var: f64,
    /// Frobenius budget on the composite precoder.
    pub p_budget: f64,
    pub ga_step: StepSize,
    pub ga_iters: usize,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            rho_f: 1.0,
            noise_var: 1.0,
            p_budget: 1.0,
            ga_step: StepSize::Relative(0.01),
            ga_iters: 100,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rho_f", self.rho_f),
            ("noise_var", self.noise_var),
            ("p_budget", self.p_budget),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        let step = self.ga_step.value();
        if !(step >= 0.0 && step.is_finite()) {
            return Err(Error::param("ga_step", format!("must be non-negative, got {step}")));
        }
        if self.ga_iters == 0 {
            return Err(Error::param("ga_iters", "must be at least 1"));
        }
        Ok(())
    }

    /// MMSE regularizer for `n` scheduled UEs.
    pub fn mmse_regularizer(&self, n: usize) -> f64 {
        n as f64 * self.noise_var / self.rho_f
    }
}

/// Which linear filter shapes the weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PrecoderKind {
    #[serde(rename = "MMSE")]
    Mmse,
    #[serde(rename = "ZF")]
    Zf,
}

impl PrecoderKind {
    pub fn label(&self) -> &'static str {
        match self {
            PrecoderKind::Mmse => "MMSE",
            PrecoderKind::Zf => "ZF",
        }
    }

    /// Normalized weights for the given estimate.
    pub fn weights(&self, g_hat: &CMat, params: &SystemParams, zf_condition_cap: f64) -> Result<CMat> {
        match self {
            PrecoderKind::Mmse => mmse_weights(g_hat, params),
            PrecoderKind::Zf => zf_weights_capped(g_hat, zf_condition_cap),
        }
    }
}

/// Composite precoder for one group of scheduled UEs.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    /// Antennas x UEs, unit-norm columns.
    pub w: CMat,
    /// Per-UE amplitudes `sqrt(p_u)`.
    pub d: Vec<f64>,
    /// `w * diag(d)`.
    pub p: CMat,
}

impl Precoder {
    pub fn power(&self) -> f64 {
        linalg::frobenius_sq(&self.p)
    }

    /// A precoder that transmits nothing; `w` is kept for shape only.
    pub fn silent(w: CMat) -> Self {
        let n = w.ncols();
        let p = CMat::zeros(w.nrows(), n);
        Self { w, d: vec![0.0; n], p }
    }
}

/// `G^T G*`, the `n x n` Gram matrix of the estimate.
fn gram(g_hat: &CMat) -> CMat {
    linalg::t_conj(g_hat, g_hat)
}

/// Condition number of `g_hat` from its singular values.
pub fn condition_number(g_hat: &CMat) -> f64 {
    flops::cubic(g_hat.ncols().max(g_hat.nrows()));
    let sv = g_hat.singular_values();
    let hi = sv.iter().copied().fold(0.0, f64::max);
    let lo = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// Unnormalized ZF weights `G* (G^T G*)^-1`, satisfying `G^T W = I`.
pub fn zf_raw_weights(g_hat: &CMat, condition_cap: f64) -> Result<CMat> {
    let (m, n) = g_hat.shape();
    if n == 0 || n > m {
        return Err(Error::DimensionMismatch(format!(
            "ZF needs 1 <= n <= M, got {m}x{n} estimate"
        )));
    }
    let cond = condition_number(g_hat);
    if !(cond <= condition_cap) {
        return Err(Error::SingularChannel {
            ues: (0..n).collect(),
            condition: cond,
        });
    }
    let inv = linalg::inverse_hpd(&gram(g_hat))?;
    Ok(linalg::mul(&g_hat.conjugate(), &inv))
}

/// Column-normalized ZF weights.
pub fn zf_weights(g_hat: &CMat) -> Result<CMat> {
    zf_weights_capped(g_hat, ZF_CONDITION_CAP)
}

pub fn zf_weights_capped(g_hat: &CMat, condition_cap: f64) -> Result<CMat> {
    Ok(linalg::normalize_columns(&zf_raw_weights(g_hat, condition_cap)?))
}

/// Unnormalized MMSE weights `G* (G^T G* + xi I)^-1`.
pub fn mmse_raw_weights(g_hat: &CMat, xi: f64) -> Result<CMat> {
    let n = g_hat.ncols();
    if n == 0 {
        return Err(Error::DimensionMismatch("MMSE needs at least one UE".into()));
    }
    let mut a = gram(g_hat);
    for i in 0..n {
        a[(i, i)] += xi;
    }
    let inv = linalg::inverse_hpd(&a)?;
    Ok(linalg::mul(&g_hat.conjugate(), &inv))
}

/// Column-normalized MMSE weights with regularizer `n * noise_var / rho_f`.
pub fn mmse_weights(g_hat: &CMat, params: &SystemParams) -> Result<CMat> {
    let xi = params.mmse_regularizer(g_hat.ncols());
    Ok(linalg::normalize_columns(&mmse_raw_weights(g_hat, xi)?))
}

/// Equal amplitudes meeting `||w diag(d)||_F^2 = p_budget` with equality.
pub fn equal_power_loading(n: usize, w: &CMat, p_budget: f64) -> Vec<f64> {
    assert_eq!(n, w.ncols(), "UE count must match weight columns");
    let total = linalg::frobenius_sq(w);
    flops::linear(n);
    vec![(p_budget / total).sqrt(); n]
}

/// Combines weights and amplitudes, enforcing the precoder invariants.
pub fn assemble(w: CMat, d: Vec<f64>, p_budget: f64) -> Result<Precoder> {
    if w.ncols() != d.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} weight columns but {} amplitudes",
            w.ncols(),
            d.len()
        )));
    }
    if let Some(bad) = d.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::NumericalFailure(format!("invalid amplitude {bad}")));
    }
    for (j, n2) in linalg::column_norms_sq(&w).into_iter().enumerate() {
        if (n2.sqrt() - 1.0).abs() > 1e-9 {
            return Err(Error::NumericalFailure(format!(
                "weight column {j} has norm {}",
                n2.sqrt()
            )));
        }
    }
    let p = linalg::scale_columns(&w, &d);
    let power = linalg::frobenius_sq(&p);
    if power > p_budget * (1.0 + BUDGET_TOLERANCE) {
        return Err(Error::PowerBudget {
            power,
            budget: p_budget,
        });
    }
    Ok(Precoder { w, d, p })
}
