#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use smspa::geometry::ChannelRealization;
use smspa::linalg::CMat;
use smspa::precoding::SystemParams;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cn(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| cn(rng))
}

/// A cluster channel with unit-scale gains and the given error fraction.
pub fn random_channel(rng: &mut ChaCha8Rng, m: usize, k: usize, err: f64) -> ChannelRealization {
    let beta = DMatrix::from_fn(m, k, |_, _| 0.2 + 1.8 * rng.random::<f64>());
    let g_hat = CMat::from_fn(m, k, |i, j| cn(rng) * ((1.0 - err) * beta[(i, j)]).sqrt());
    let g_err = CMat::from_fn(m, k, |i, j| cn(rng) * (err * beta[(i, j)]).sqrt());
    ChannelRealization::from_parts(beta, g_hat, g_err).unwrap()
}

pub fn params(snr_db: f64) -> SystemParams {
    SystemParams {
        rho_f: 10f64.powf(snr_db / 10.0),
        ..Default::default()
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Every amplitude vector whose powers lie on a `step` grid of the budget
/// simplex, i.e. every grid point of the sphere `sum d_u^2 = budget`, `d >= 0`.
pub fn budget_grid(n: usize, budget: f64, step: f64) -> Vec<Vec<f64>> {
    fn rec(i: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i + 1 == cur.len() {
            cur[i] = left;
            out.push(cur.clone());
            return;
        }
        for v in 0..=left {
            cur[i] = v;
            rec(i + 1, left - v, cur, out);
        }
    }
    let levels = (1.0 / step).round() as usize;
    let mut raw = Vec::new();
    rec(0, levels, &mut vec![0; n], &mut raw);
    raw.iter()
        .map(|q| q.iter().map(|&k| (budget * k as f64 / levels as f64).sqrt()).collect())
        .collect()
}
