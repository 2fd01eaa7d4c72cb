//! Intra-cluster user scheduling: greedy first stage, channel-power ranked
//! single swaps (ESG), and the plain-greedy (SG) and exhaustive (ES) baselines.
//!
//! Candidate sets are scored by the cluster sum-rate under normalized MMSE
//! weights and equal power loading, with the own-cluster estimation error as
//! the only impairment. Inter-cluster interference is not part of the metric
//! because other clusters' schedules are unknown at selection time.
//!
//! Scoring works on precomputed `K_c x K_c` Gram matrices: for a set `S` the
//! MMSE filter, its column norms and both received covariances follow from
//! `Ĝ_S^T Ĝ_S*` and `G̃_S^T Ĝ_S*` alone, so each candidate costs `O(n^3)`
//! instead of `O(M n^2)`. [`set_rate_explicit`] evaluates the same quantity by
//! materializing the precoder and is kept as a cross-check.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flops;
use crate::geometry::ChannelRealization;
use crate::linalg::{self, CMat};
use crate::precoding::{self, SystemParams};
use crate::rate;

/// Default cap on the number of subsets the exhaustive search may score.
pub const ES_SUBSET_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheduler {
    #[serde(rename = "ESG")]
    Esg,
    #[serde(rename = "SG")]
    Sg,
    #[serde(rename = "ES")]
    Es,
}

impl Scheduler {
    pub fn label(&self) -> &'static str {
        match self {
            Scheduler::Esg => "ESG",
            Scheduler::Sg => "SG",
            Scheduler::Es => "ES",
        }
    }

    pub fn schedule(
        &self,
        chan: &ChannelRealization,
        n: usize,
        params: &SystemParams,
        es_cap: u128,
    ) -> Result<ScheduleResult> {
        match self {
            Scheduler::Esg => esg_schedule(chan, n, params),
            Scheduler::Sg => sg_schedule(chan, n, params),
            Scheduler::Es => es_schedule_capped(chan, n, params, es_cap),
        }
    }
}

/// Greedy/swap progress within one cluster. Indices are local UE columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleState {
    pub selected: Vec<usize>,
    pub remaining: Vec<usize>,
    /// UE removed by the swap that produced this state.
    pub swap_out: Option<usize>,
    /// UE added by the swap that produced this state.
    pub swap_in: Option<usize>,
    /// Metric value, once scored.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub set: Vec<usize>,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleResult {
    pub selected: Vec<usize>,
    pub rate: f64,
    /// Scored candidate sets in evaluation order (ESG and SG only).
    pub candidates: Vec<Candidate>,
    /// Number of sets scored, including first-stage trials.
    pub evaluated: usize,
}

/// `g^H g`.
pub fn channel_power(g: &[num_complex::Complex64]) -> f64 {
    flops::linear(g.len());
    g.iter().map(|z| z.norm_sqr()).sum()
}

/// Channel power of every UE column of the estimate.
pub fn channel_powers(chan: &ChannelRealization) -> Vec<f64> {
    chan.g_hat
        .column_iter()
        .map(|c| channel_power(c.as_slice()))
        .collect()
}

/// Gram entries of one cluster's channel, shared by every candidate set.
///
/// Entries are computed on first use and cached, so scoring a family of sets
/// costs work proportional to the UE pairs those sets actually contain.
#[derive(Debug, Clone)]
pub struct ClusterGram {
    g_hat: CMat,
    g_err: CMat,
    /// `Ĝ^T Ĝ*`, filled lazily.
    hat: RefCell<CMat>,
    /// `G̃^T Ĝ*`, filled lazily.
    err_hat: RefCell<CMat>,
    known: RefCell<Vec<bool>>,
    powers: Vec<f64>,
    has_error: bool,
}

fn dot_t_conj(a: &CMat, i: usize, b: &CMat, j: usize) -> num_complex::Complex64 {
    flops::linear(a.nrows());
    a.column(i).iter().zip(b.column(j).iter()).map(|(x, y)| x * y.conj()).sum()
}

impl ClusterGram {
    pub fn new(chan: &ChannelRealization) -> Self {
        let k = chan.num_ues();
        let has_error = chan.g_err.iter().any(|z| z.norm_sqr() > 0.0);
        let powers = channel_powers(chan);
        Self {
            g_hat: chan.g_hat.clone(),
            g_err: chan.g_err.clone(),
            hat: RefCell::new(CMat::zeros(k, k)),
            err_hat: RefCell::new(CMat::zeros(k, k)),
            known: RefCell::new(vec![false; k * k]),
            powers,
            has_error,
        }
    }

    pub fn num_ues(&self) -> usize {
        self.powers.len()
    }

    /// `||ĝ_u||^2` for every UE.
    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    /// The `set x set` blocks of `Ĝ^T Ĝ*` and `G̃^T Ĝ*`.
    fn blocks(&self, set: &[usize]) -> (CMat, CMat) {
        let k = self.num_ues();
        let mut known = self.known.borrow_mut();
        let mut hat = self.hat.borrow_mut();
        let mut err_hat = self.err_hat.borrow_mut();
        for &i in set {
            for &j in set {
                if known[i * k + j] {
                    continue;
                }
                let h = dot_t_conj(&self.g_hat, i, &self.g_hat, j);
                hat[(i, j)] = h;
                hat[(j, i)] = h.conj();
                if self.has_error {
                    err_hat[(i, j)] = dot_t_conj(&self.g_err, i, &self.g_hat, j);
                    err_hat[(j, i)] = dot_t_conj(&self.g_err, j, &self.g_hat, i);
                }
                known[i * k + j] = true;
                known[j * k + i] = true;
            }
        }
        (linalg::select(&hat, set, set), linalg::select(&err_hat, set, set))
    }

    /// Scheduling metric of `set`: cluster sum-rate with MMSE weights and EPL.
    pub fn set_rate(&self, set: &[usize], params: &SystemParams) -> Result<f64> {
        let n = set.len();
        if n == 0 {
            return Ok(0.0);
        }
        let (a, e) = self.blocks(set);
        let mut b = a.clone();
        let xi = params.mmse_regularizer(n);
        for i in 0..n {
            b[(i, i)] += xi;
        }
        let b_inv = linalg::inverse_hpd(&b)?;
        // Ĝ_S^T W_raw
        let t = linalg::mul(&a, &b_inv);
        // diag(W_raw^H W_raw) = diag(B^-1 A B^-1)
        flops::matmul(n, n, 1);
        let col_scale: Vec<f64> = (0..n)
            .map(|j| {
                let nu: f64 = (0..n).map(|k| (b_inv[(j, k)] * t[(k, j)]).re).sum();
                if nu > 0.0 {
                    (params.p_budget / n as f64).sqrt() / nu.sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        let y = linalg::scale_columns(&t, &col_scale);
        let signal = linalg::outer_h(&y).scale(params.rho_f);
        let mut cov = if self.has_error {
            let x = linalg::scale_columns(&linalg::mul(&e, &b_inv), &col_scale);
            linalg::outer_h(&x).scale(params.rho_f)
        } else {
            CMat::zeros(n, n)
        };
        for i in 0..n {
            cov[(i, i)] += params.noise_var;
        }
        let num = linalg::ln_det_hpd(&(signal + &cov))?;
        let den = linalg::ln_det_hpd(&cov)?;
        Ok(((num - den) / std::f64::consts::LN_2).max(0.0))
    }
}

/// The scheduling metric computed through explicit MMSE weights, EPL and the
/// cluster rate model.
pub fn set_rate_explicit(chan: &ChannelRealization, set: &[usize], params: &SystemParams) -> Result<f64> {
    let g_hat = linalg::select_columns(&chan.g_hat, set);
    let g_err = linalg::select_columns(&chan.g_err, set);
    let w = precoding::mmse_weights(&g_hat, params)?;
    let d = precoding::equal_power_loading(set.len(), &w, params.p_budget);
    let pre = precoding::assemble(w, d, params.p_budget)?;
    let cov = rate::cluster_covariance(&g_err, &pre.p, &[], params)?;
    rate::cluster_sum_rate(&g_hat, &pre.p, &cov, params)
}

fn check_target(chan: &ChannelRealization, n: usize) -> Result<()> {
    let (m, k) = (chan.num_aps(), chan.num_ues());
    if n == 0 || n > m.min(k) {
        return Err(Error::param(
            "n_c",
            format!("need 1 <= n_c <= min(M_c, K_c) = {}, got {n}", m.min(k)),
        ));
    }
    Ok(())
}

/// First index of the maximum (`max = true`) or minimum over `items`.
fn arg_extreme(items: impl Iterator<Item = (usize, f64)>, max: bool) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in items {
        let better = match best {
            None => true,
            Some((bi, bv)) => {
                if max {
                    v > bv || (v == bv && i < bi)
                } else {
                    v < bv || (v == bv && i < bi)
                }
            }
        };
        if better {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

fn greedy_with(gram: &ClusterGram, n: usize, params: &SystemParams) -> Result<(ScheduleState, usize)> {
    let k = gram.num_ues();
    let powers = gram.powers();
    let first = arg_extreme(powers.iter().copied().enumerate(), true).expect("cluster has UEs");
    let mut selected = vec![first];
    let mut rate = gram.set_rate(&selected, params)?;
    let mut evaluated = 1;
    while selected.len() < n {
        let mut trial = selected.clone();
        trial.push(usize::MAX);
        let mut best: Option<(usize, f64)> = None;
        for u in (0..k).filter(|u| !selected.contains(u)) {
            *trial.last_mut().unwrap() = u;
            let r = gram.set_rate(&trial, params)?;
            evaluated += 1;
            if best.is_none_or(|(_, br)| r > br) {
                best = Some((u, r));
            }
        }
        let Some((u, r)) = best else { break };
        if r <= rate {
            break;
        }
        selected.push(u);
        rate = r;
    }
    let remaining = (0..k).filter(|u| !selected.contains(u)).collect();
    Ok((
        ScheduleState {
            selected,
            remaining,
            swap_out: None,
            swap_in: None,
            rate: Some(rate),
        },
        evaluated,
    ))
}

/// Greedy stage: seed with the strongest UE, then repeatedly add the UE that
/// maximizes the metric, stopping at `n` UEs or when the metric stops growing.
pub fn greedy_first_stage(chan: &ChannelRealization, n: usize, params: &SystemParams) -> Result<ScheduleState> {
    check_target(chan, n)?;
    Ok(greedy_with(&ClusterGram::new(chan), n, params)?.0)
}

/// Swaps the weakest selected UE for the strongest remaining one.
/// `powers` holds the channel power of every UE in the cluster.
pub fn next_swap(state: &ScheduleState, powers: &[f64]) -> Result<ScheduleState> {
    let swap_in = arg_extreme(state.remaining.iter().map(|&u| (u, powers[u])), true)
        .ok_or(Error::EmptyRemaining)?;
    let swap_out = arg_extreme(state.selected.iter().map(|&u| (u, powers[u])), false)
        .ok_or(Error::EmptyRemaining)?;
    let selected = state
        .selected
        .iter()
        .map(|&u| if u == swap_out { swap_in } else { u })
        .collect();
    let remaining = state.remaining.iter().copied().filter(|&u| u != swap_in).collect();
    Ok(ScheduleState {
        selected,
        remaining,
        swap_out: Some(swap_out),
        swap_in: Some(swap_in),
        rate: None,
    })
}

/// ESG: the greedy set plus `K_c - n` swap candidates; the best one wins.
pub fn esg_schedule(chan: &ChannelRealization, n: usize, params: &SystemParams) -> Result<ScheduleResult> {
    check_target(chan, n)?;
    let gram = ClusterGram::new(chan);
    let (mut state, mut evaluated) = greedy_with(&gram, n, params)?;
    let mut candidates = vec![Candidate {
        set: state.selected.clone(),
        rate: state.rate.expect("greedy state is scored"),
    }];
    for _ in 0..chan.num_ues() - n {
        state = next_swap(&state, gram.powers())?;
        let r = gram.set_rate(&state.selected, params)?;
        evaluated += 1;
        state.rate = Some(r);
        candidates.push(Candidate {
            set: state.selected.clone(),
            rate: r,
        });
    }
    let best = arg_extreme(candidates.iter().map(|c| c.rate).enumerate(), true).expect("non-empty");
    Ok(ScheduleResult {
        selected: candidates[best].set.clone(),
        rate: candidates[best].rate,
        candidates,
        evaluated,
    })
}

/// Plain greedy: the first stage alone.
pub fn sg_schedule(chan: &ChannelRealization, n: usize, params: &SystemParams) -> Result<ScheduleResult> {
    check_target(chan, n)?;
    let (state, evaluated) = greedy_with(&ClusterGram::new(chan), n, params)?;
    let rate = state.rate.expect("greedy state is scored");
    Ok(ScheduleResult {
        candidates: vec![Candidate {
            set: state.selected.clone(),
            rate,
        }],
        selected: state.selected,
        rate,
        evaluated,
    })
}

/// `n choose k`, saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Advances `idx` to the next lexicographic `k`-combination of `0..n`.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

pub fn es_schedule(chan: &ChannelRealization, n: usize, params: &SystemParams) -> Result<ScheduleResult> {
    es_schedule_capped(chan, n, params, ES_SUBSET_CAP)
}

/// Number of subsets of `0..k` with between 1 and `n` members, saturating.
pub fn subsets_up_to(k: usize, n: usize) -> u128 {
    (1..=n).fold(0u128, |acc, s| acc.saturating_add(binomial(k, s)))
}

/// Exhaustive search over every subset of at most `n` UEs, the same family
/// the greedy stage draws from when it stops early. Sets are scanned by size,
/// then lexicographically, and only a strictly better rate replaces the best,
/// so ties go to the smallest, then lexicographically first, set.
pub fn es_schedule_capped(
    chan: &ChannelRealization,
    n: usize,
    params: &SystemParams,
    cap: u128,
) -> Result<ScheduleResult> {
    check_target(chan, n)?;
    let k = chan.num_ues();
    let subsets = subsets_up_to(k, n);
    if subsets > cap {
        return Err(Error::SearchCap { subsets, cap });
    }
    let gram = ClusterGram::new(chan);
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut evaluated = 0;
    for size in 1..=n {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            let r = gram.set_rate(&idx, params)?;
            evaluated += 1;
            if best.as_ref().is_none_or(|(_, br)| r > *br) {
                best = Some((idx.clone(), r));
            }
            if !next_combination(&mut idx, k) {
                break;
            }
        }
    }
    let (selected, rate) = best.expect("n >= 1");
    Ok(ScheduleResult {
        selected,
        rate,
        candidates: Vec::new(),
        evaluated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{draw_channel, generate_layout, ChannelModelParams};
    use num_complex::Complex64;

    fn state(selected: &[usize], remaining: &[usize]) -> ScheduleState {
        ScheduleState {
            selected: selected.to_vec(),
            remaining: remaining.to_vec(),
            swap_out: None,
            swap_in: None,
            rate: None,
        }
    }

    #[test]
    fn channel_power_examples() {
        assert_eq!(channel_power(&[Complex64::new(0.0, 0.0); 3]), 0.0);
        assert_eq!(channel_power(&[Complex64::new(1.0, 0.0)]), 1.0);
        assert_eq!(
            channel_power(&[Complex64::new(3.0, 0.0), Complex64::new(0.0, 4.0)]),
            25.0
        );
    }

    #[test]
    fn swap_follows_power_ranking() {
        let powers = [4.0, 1.0, 9.0, 16.0];
        let next = next_swap(&state(&[0, 1, 2], &[3]), &powers).unwrap();
        assert_eq!(next.swap_out, Some(1));
        assert_eq!(next.swap_in, Some(3));
        assert_eq!(next.selected, vec![0, 3, 2]);
        assert!(next.remaining.is_empty());
        assert_eq!(next_swap(&next, &powers).unwrap_err(), Error::EmptyRemaining);
    }

    #[test]
    fn swap_ties_prefer_lowest_index() {
        let powers = [2.0, 2.0, 5.0, 5.0];
        let next = next_swap(&state(&[1, 0], &[3, 2]), &powers).unwrap();
        assert_eq!(next.swap_out, Some(0));
        assert_eq!(next.swap_in, Some(2));
    }

    #[test]
    fn combinations_enumerate_all() {
        let mut idx = vec![0, 1];
        let mut seen = vec![idx.clone()];
        while next_combination(&mut idx, 4) {
            seen.push(idx.clone());
        }
        assert_eq!(seen, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(binomial(8, 4), 70);
        assert_eq!(binomial(16, 8), 12870);
        assert_eq!(binomial(3, 5), 0);
    }

    fn cluster(m: usize, k: usize, seed: u64) -> ChannelRealization {
        let p = ChannelModelParams::default();
        let l = generate_layout(m, k, 1, &p, seed).unwrap();
        draw_channel(&l, &p, seed + 1).unwrap()
    }

    fn sys(chan: &ChannelRealization) -> SystemParams {
        // roughly 10 dB average received SNR
        let mean_beta = chan.beta.mean();
        SystemParams {
            rho_f: 10.0 / mean_beta,
            ..Default::default()
        }
    }

    #[test]
    fn gram_metric_matches_explicit_route() {
        for seed in 0..10 {
            let ch = cluster(6, 8, seed);
            let p = sys(&ch);
            let gram = ClusterGram::new(&ch);
            for set in [vec![0], vec![3, 1], vec![7, 2, 5, 0]] {
                let fast = gram.set_rate(&set, &p).unwrap();
                let slow = set_rate_explicit(&ch, &set, &p).unwrap();
                assert!((fast - slow).abs() <= 1e-9 * slow.max(1.0), "{fast} vs {slow}");
            }
        }
    }

    #[test]
    fn single_ue_is_strongest() {
        let ch = cluster(4, 6, 3);
        let p = sys(&ch);
        let s = greedy_first_stage(&ch, 1, &p).unwrap();
        let powers = channel_powers(&ch);
        let best = (0..6).max_by(|&a, &b| powers[a].total_cmp(&powers[b])).unwrap();
        assert_eq!(s.selected, vec![best]);
        let sg = sg_schedule(&ch, 1, &p).unwrap();
        assert_eq!(sg.selected, vec![best]);
        assert_eq!(sg.evaluated, 1);
    }

    #[test]
    fn target_bounds() {
        let ch = cluster(4, 6, 3);
        let p = sys(&ch);
        assert!(greedy_first_stage(&ch, 0, &p).is_err());
        assert!(greedy_first_stage(&ch, 5, &p).is_err());
        assert!(es_schedule(&ch, 5, &p).is_err());
    }

    #[test]
    fn esg_candidate_count() {
        for (k, n) in [(6, 3), (6, 4), (4, 4), (8, 1)] {
            let ch = cluster(4.max(n), k, 9);
            let p = sys(&ch);
            let r = esg_schedule(&ch, n, &p).unwrap();
            assert_eq!(r.candidates.len(), k - n + 1);
            assert!(r.rate >= r.candidates[0].rate);
        }
    }

    #[test]
    fn es_cap_enforced() {
        let ch = cluster(4, 8, 2);
        let p = sys(&ch);
        assert_eq!(
            es_schedule_capped(&ch, 4, &p, 161).unwrap_err(),
            Error::SearchCap { subsets: 162, cap: 161 }
        );
        let full = es_schedule(&ch, 4, &p).unwrap();
        assert_eq!(full.evaluated, 8 + 28 + 56 + 70);
    }

    #[test]
    fn es_covers_full_set_when_k_equals_n() {
        let ch = cluster(4, 3, 5);
        let p = sys(&ch);
        let r = es_schedule(&ch, 3, &p).unwrap();
        assert_eq!(r.evaluated, 7);
        let gram = ClusterGram::new(&ch);
        assert!(r.rate >= gram.set_rate(&[0, 1, 2], &p).unwrap());
    }
}
