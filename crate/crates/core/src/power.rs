//! Power loading for a fixed schedule: equal loading, or gradient ascent on the
//! combined-receiver objective `x(d) = a^T Ĝ^T W diag(d)^2 W^H Ĝ* a` with the
//! amplitudes rescaled back onto the power budget after every step.
//!
//! The ascent starts from the equal-loading point. The gradient of `x` is
//! proportional to `diag(d)`, so `d = 0` is a stationary point and cannot be
//! used as a starting value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flops;
use crate::linalg::{self, CMat, CVec};
use crate::precoding::{self, StepSize, SystemParams};
use crate::rate::combiner;

/// Relative deviation from the budget that triggers a rescale.
pub const RESCALE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Allocator {
    #[serde(rename = "GA")]
    Ga,
    #[serde(rename = "EPL")]
    Epl,
}

impl Allocator {
    pub fn label(&self) -> &'static str {
        match self {
            Allocator::Ga => "GA",
            Allocator::Epl => "EPL",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaTrace {
    /// `x` at the start and after each update-and-rescale; `ga_iters` entries.
    pub objective_per_iter: Vec<f64>,
    pub d_final: Vec<f64>,
    pub scale_events: usize,
}

impl GaTrace {
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iteration,objective")?;
        for (i, x) in self.objective_per_iter.iter().enumerate() {
            writeln!(out, "{},{}", i + 1, x)?;
        }
        Ok(())
    }
}

/// `W^H Ĝ* a a^T Ĝ^T W`, the Hermitian kernel of the objective.
pub fn objective_kernel(g_hat: &CMat, w: &CMat, a: &CVec) -> CMat {
    // b^T = a^T Ĝ^T W
    flops::matmul(1, g_hat.ncols(), g_hat.nrows());
    let row = a.transpose() * g_hat.transpose();
    let b_t = linalg::mul(&CMat::from_row_slice(1, row.len(), row.as_slice()), w);
    linalg::outer_h(&b_t.adjoint())
}

/// `x = a^T Ĝ^T W diag(d) diag(d)^H W^H Ĝ* a`.
pub fn objective_x(g_hat: &CMat, w: &CMat, d: &[f64], a: &CVec) -> f64 {
    flops::matmul(1, g_hat.ncols(), g_hat.nrows());
    let row = a.transpose() * g_hat.transpose();
    let r = linalg::mul(&CMat::from_row_slice(1, row.len(), row.as_slice()), &linalg::scale_columns(w, d));
    linalg::frobenius_sq(&r)
}

fn gradient_from_kernel(kernel: &CMat, d: &[f64]) -> Vec<f64> {
    flops::linear(d.len());
    d.iter()
        .enumerate()
        .map(|(u, &du)| 2.0 * kernel[(u, u)].re * du)
        .collect()
}

/// `2 (W^H Ĝ* a a^T Ĝ^T W diag(d)) ∘ I`, as a real vector.
pub fn gradient_d(g_hat: &CMat, w: &CMat, d: &[f64], a: &CVec) -> Vec<f64> {
    let kernel = objective_kernel(g_hat, w, a);
    let full = linalg::mul(&kernel, &CMat::from_diagonal(&CVec::from_iterator(
        d.len(),
        d.iter().map(|&v| linalg::ONE * v),
    )));
    (0..d.len()).map(|u| 2.0 * full[(u, u)].re).collect()
}

/// Rescales `d` so that `||W diag(d)||_F^2 = p_budget`.
pub fn rescale_eta(w: &CMat, d: &[f64], p_budget: f64) -> Result<Vec<f64>> {
    let power = linalg::frobenius_sq(&linalg::scale_columns(w, d));
    if !(power > 0.0) {
        return Err(Error::DegenerateScaling);
    }
    let eta = (p_budget / power).sqrt();
    Ok(d.iter().map(|v| v * eta).collect())
}

pub fn epl_allocate(n: usize, w: &CMat, p_budget: f64) -> Vec<f64> {
    precoding::equal_power_loading(n, w, p_budget)
}

/// Gradient ascent from the equal-loading point.
pub fn ga_allocate(g_hat: &CMat, w: &CMat, params: &SystemParams) -> Result<(Vec<f64>, GaTrace)> {
    let n = w.ncols();
    if n == 0 || g_hat.ncols() != n || g_hat.nrows() != w.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "estimate {:?} vs weights {:?}",
            g_hat.shape(),
            w.shape()
        )));
    }
    let init = epl_allocate(n, w, params.p_budget);
    ga_allocate_from(g_hat, w, init, params)
}

/// Gradient ascent from an arbitrary non-zero starting point.
pub fn ga_allocate_from(
    g_hat: &CMat,
    w: &CMat,
    init: Vec<f64>,
    params: &SystemParams,
) -> Result<(Vec<f64>, GaTrace)> {
    let a = combiner(w.ncols());
    let kernel = objective_kernel(g_hat, w, &a);
    let lambda = match params.ga_step {
        StepSize::Absolute(l) => l,
        StepSize::Relative(mu) => {
            // the kernel has rank one, so its trace is its largest eigenvalue
            let top: f64 = (0..kernel.nrows()).map(|u| kernel[(u, u)].re).sum();
            if top > 0.0 {
                mu / (2.0 * top)
            } else {
                0.0
            }
        }
    };
    let budget = params.p_budget;
    let mut d = rescale_eta(w, &init, budget)?;
    let mut objective = Vec::with_capacity(params.ga_iters);
    let mut scale_events = 0;
    objective.push(objective_x(g_hat, w, &d, &a));
    for iteration in 2..=params.ga_iters {
        let grad = gradient_from_kernel(&kernel, &d);
        for (du, gu) in d.iter_mut().zip(&grad) {
            *du += lambda * gu;
        }
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { iteration });
        }
        let power = linalg::frobenius_sq(&linalg::scale_columns(w, &d));
        if (power - budget).abs() > RESCALE_TOLERANCE * budget {
            d = rescale_eta(w, &d, budget).map_err(|_| Error::Divergence { iteration })?;
            scale_events += 1;
        }
        let x = objective_x(g_hat, w, &d, &a);
        if !x.is_finite() {
            return Err(Error::Divergence { iteration });
        }
        objective.push(x);
    }
    Ok((
        d.clone(),
        GaTrace {
            objective_per_iter: objective,
            d_final: d,
            scale_events,
        },
    ))
}
