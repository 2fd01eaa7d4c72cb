//! The SMSPA scheme end to end: per-cluster scheduling under equal loading,
//! precoding on the scheduled set, power allocation, then network-wide rate
//! evaluation with every cluster's final precoder in place.
//!
//! Monte Carlo trials are independent work items. Each trial draws one layout
//! and one channel, shared by every SNR point and every scheduler, allocator
//! and precoder combination, so comparisons between them are paired.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::flops;
use crate::geometry::{self, ChannelRealization, EmptyClusterPolicy, LayoutOptions, NetworkLayout};
use crate::par;
use crate::power::{self, Allocator, GaTrace};
use crate::precoding::{self, Precoder, PrecoderKind, SystemParams};
use crate::rate::{self, Interferer, RateReport};
use crate::scheduling::{ScheduleResult, Scheduler};

const MAX_LAYOUT_ATTEMPTS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "CF")]
    Cf,
    #[serde(rename = "CLCF")]
    Clcf,
}

impl Mode {
    pub fn of_clusters(c: usize) -> Mode {
        if c == 1 {
            Mode::Cf
        } else {
            Mode::Clcf
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Mode::Cf => "CF",
            Mode::Clcf => "CLCF",
        }
    }
}

/// Channel parameters delivered to central processing per snapshot,
/// assuming equal clusters for the clustered case.
pub fn signaling_load(m: usize, k: usize, clusters: usize, mode: Mode, per_param_factor: u64) -> u64 {
    let links = (m * k) as u64;
    match mode {
        Mode::Cf => per_param_factor * links,
        Mode::Clcf => per_param_factor * links / clusters as u64,
    }
}

/// Signaling load of an actual layout, summing `M_c * K_c` over clusters.
pub fn signaling_load_of(layout: &NetworkLayout, per_param_factor: u64) -> u64 {
    let links: usize = layout
        .ap_counts()
        .iter()
        .zip(layout.ue_counts())
        .map(|(m, k)| m * k)
        .sum();
    per_param_factor * links as u64
}

/// Everything one cluster contributes to the network after allocation.
#[derive(Debug, Clone)]
pub struct ClusterPlan {
    /// Global AP indices of the cluster.
    pub aps: Vec<usize>,
    /// Global indices of the scheduled UEs.
    pub scheduled: Vec<usize>,
    pub precoder: Precoder,
    pub trace: Option<GaTrace>,
}

/// Builds the configured precoder on an already scheduled set and loads power.
pub fn allocate_cluster(
    chan: &ChannelRealization,
    aps: &[usize],
    scheduled: &[usize],
    kind: PrecoderKind,
    allocator: Allocator,
    params: &SystemParams,
    zf_condition_cap: f64,
) -> Result<ClusterPlan> {
    let block = chan.subchannel(aps, scheduled)?;
    let w = kind
        .weights(&block.g_hat, params, zf_condition_cap)
        .map_err(|e| match e {
            Error::SingularChannel { ues, condition } => Error::SingularChannel {
                ues: ues.iter().map(|&u| scheduled[u]).collect(),
                condition,
            },
            e => e,
        })?;
    let (d, trace) = match allocator {
        Allocator::Epl => (power::epl_allocate(scheduled.len(), &w, params.p_budget), None),
        Allocator::Ga => {
            let (d, t) = power::ga_allocate(&block.g_hat, &w, params)?;
            (d, Some(t))
        }
    };
    Ok(ClusterPlan {
        aps: aps.to_vec(),
        scheduled: scheduled.to_vec(),
        precoder: precoding::assemble(w, d, params.p_budget)?,
        trace,
    })
}

/// Schedules one cluster and allocates power on the result. The cluster's
/// final rate depends on every other cluster and comes from [`evaluate_network`].
#[allow(clippy::too_many_arguments)]
pub fn run_cluster(
    chan: &ChannelRealization,
    aps: &[usize],
    ues: &[usize],
    n_c: usize,
    scheduler: Scheduler,
    kind: PrecoderKind,
    allocator: Allocator,
    params: &SystemParams,
    config: &RunConfig,
) -> Result<(ScheduleResult, ClusterPlan)> {
    let block = chan.subchannel(aps, ues)?;
    let params = &SystemParams {
        p_budget: config.cluster_budget_for(aps.len()),
        ..*params
    };
    let schedule = scheduler.schedule(&block, n_c, params, config.es_cap as u128)?;
    let scheduled: Vec<usize> = schedule.selected.iter().map(|&u| ues[u]).collect();
    let plan = allocate_cluster(chan, aps, &scheduled, kind, allocator, params, config.zf_condition_cap)?;
    Ok((schedule, plan))
}

/// Rates of every cluster with all final precoders active.
///
/// A single plan is a cooperating cell-free group and uses the monolithic
/// rate; otherwise each cluster sees the others as interference.
pub fn evaluate_network(chan: &ChannelRealization, plans: &[ClusterPlan], params: &SystemParams) -> Result<RateReport> {
    let mut per_cluster = Vec::with_capacity(plans.len());
    let mut sinr = Vec::with_capacity(plans.len());
    for (c, plan) in plans.iter().enumerate() {
        let own = chan.subchannel(&plan.aps, &plan.scheduled)?;
        let interferers = plans
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != c)
            .map(|(_, other)| {
                let cross = chan.subchannel(&other.aps, &plan.scheduled)?;
                Ok(Interferer {
                    g_hat: cross.g_hat,
                    g_err: cross.g_err,
                    p: other.precoder.p.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let p = &plan.precoder.p;
        let r = if plans.len() == 1 {
            rate::cf_sum_rate(&own.g_hat, &own.g_err, p, params)?
        } else {
            let cov = rate::cluster_covariance(&own.g_err, p, &interferers, params)?;
            rate::cluster_sum_rate(&own.g_hat, p, &cov, params)?
        };
        per_cluster.push(r);
        sinr.push(rate::simplified_sinr(
            &own.g_hat,
            &plan.precoder.w,
            &plan.precoder.d,
            &own.g_err,
            &interferers,
            params,
        )?);
    }
    Ok(RateReport {
        total_rate: rate::total_clustered_rate(&per_cluster),
        per_cluster_rate: per_cluster,
        sinr_simplified: sinr,
    })
}

/// One (trial, SNR, cluster count, scheduler, allocator, precoder) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub snr_db: f64,
    pub clusters: usize,
    pub mode: Mode,
    pub scheduler: Scheduler,
    pub allocator: Allocator,
    pub precoder: PrecoderKind,
    pub total_rate: f64,
    pub cluster_rates: Vec<f64>,
    /// Global UE indices scheduled in each cluster.
    pub selected: Vec<Vec<usize>>,
    /// Candidate sets scored by the scheduler, summed over clusters.
    pub evaluated: usize,
    /// GA traces per cluster, kept for the first `trace_trials` trials.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub ga_traces: Vec<GaTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCost {
    pub clusters: usize,
    pub mode: Mode,
    pub signaling_load: u64,
    /// Operation count summed over trials; zero unless counters are enabled.
    pub flop_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub config_hash: String,
    pub rows: Vec<TrialRow>,
    pub costs: Vec<ModeCost>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub snr_db: f64,
    pub scheduler: Scheduler,
    pub allocator: Allocator,
    pub precoder: PrecoderKind,
    pub mode: Mode,
    pub mean_rate: f64,
    pub std_rate: f64,
    pub trials: usize,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic per-purpose seed from the master seed.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix(master), |acc, &p| splitmix(acc ^ splitmix(p)))
}

const STREAM_LAYOUT: u64 = 1;
const STREAM_CHANNEL: u64 = 2;

/// Seed of the small-scale and shadowing draw of one trial.
pub fn channel_seed(master: u64, trial: usize) -> u64 {
    derive_seed(master, &[STREAM_CHANNEL, trial as u64])
}

/// Layouts for every configured cluster count, sharing one position draw.
///
/// Draws are repeated until every cluster holds at least `n_c` APs and UEs,
/// unless the empty-cluster policy asks for an error.
pub fn draw_layouts(config: &RunConfig, trial: usize) -> Result<Vec<NetworkLayout>> {
    let params = config.channel_params();
    let opts = LayoutOptions {
        placement: config.placement,
        empty_cluster: EmptyClusterPolicy::Error,
    };
    let mut last_reason = String::new();
    for attempt in 0..MAX_LAYOUT_ATTEMPTS {
        let seed = derive_seed(config.seed, &[STREAM_LAYOUT, trial as u64, attempt]);
        let mut layouts = Vec::with_capacity(config.clusters.len());
        let mut ok = true;
        for &c in &config.clusters {
            let n_c = config.n / c;
            match geometry::generate_layout_with(config.m, config.k, c, &params, seed, opts) {
                Ok(l) => {
                    let short = l
                        .ap_counts()
                        .iter()
                        .zip(l.ue_counts())
                        .position(|(&m_c, k_c)| m_c < n_c || k_c < n_c);
                    if let Some(cl) = short {
                        last_reason = format!(
                            "cluster {cl} has M_c={} K_c={} < n_c={n_c}",
                            l.ap_counts()[cl],
                            l.ue_counts()[cl]
                        );
                        ok = false;
                        break;
                    }
                    layouts.push(l);
                }
                Err(Error::EmptyCluster { cluster }) => {
                    last_reason = format!("cluster {cluster} has no APs");
                    ok = false;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if ok {
            return Ok(layouts);
        }
        if config.empty_cluster == EmptyClusterPolicy::Error {
            return Err(Error::LayoutExhausted {
                attempts: 1,
                reason: last_reason,
            });
        }
    }
    Err(Error::LayoutExhausted {
        attempts: MAX_LAYOUT_ATTEMPTS as usize,
        reason: last_reason,
    })
}

struct TrialOutput {
    rows: Vec<TrialRow>,
    flops: Vec<u64>,
}

fn run_trial(config: &RunConfig, trial: usize) -> Result<TrialOutput> {
    let layouts = draw_layouts(config, trial)?;
    let params = config.channel_params();
    let mut rows = Vec::new();
    let mut costs = Vec::with_capacity(layouts.len());
    for layout in &layouts {
        let (res, spent) = flops::measure(|| {
            let chan = geometry::draw_channel(layout, &params, channel_seed(config.seed, trial))?;
            run_layout(config, trial, layout, &chan)
        });
        rows.extend(res?);
        costs.push(if config.counters { spent } else { 0 });
    }
    Ok(TrialOutput { rows, flops: costs })
}

fn run_layout(
    config: &RunConfig,
    trial: usize,
    layout: &NetworkLayout,
    chan: &ChannelRealization,
) -> Result<Vec<TrialRow>> {
    let c_count = layout.clusters;
    let n_c = config.n / c_count;
    let members: Vec<(Vec<usize>, Vec<usize>)> = (0..c_count)
        .map(|c| (layout.aps_in(c), layout.ues_in(c)))
        .collect();
    let keep_traces = trial < config.trace_trials;
    let mut rows = Vec::new();
    for &snr_db in &config.snr_db {
        let params = config.system_params(snr_db);
        let cluster_params: Vec<SystemParams> = members
            .iter()
            .map(|(aps, _)| SystemParams {
                p_budget: config.cluster_budget_for(aps.len()),
                ..params
            })
            .collect();
        for &scheduler in &config.scheduler {
            let mut scheduled = Vec::with_capacity(c_count);
            let mut evaluated = 0;
            for ((aps, ues), cp) in members.iter().zip(&cluster_params) {
                let block = chan.subchannel(aps, ues)?;
                let s = scheduler.schedule(&block, n_c, cp, config.es_cap as u128)?;
                evaluated += s.evaluated;
                scheduled.push(s.selected.iter().map(|&u| ues[u]).collect::<Vec<_>>());
            }
            for &kind in &config.precoder {
                for &allocator in &config.allocator {
                    let plans = members
                        .iter()
                        .zip(&scheduled)
                        .zip(&cluster_params)
                        .map(|(((aps, _), sel), cp)| {
                            allocate_cluster(chan, aps, sel, kind, allocator, cp, config.zf_condition_cap)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let report = evaluate_network(chan, &plans, &params)?;
                    let ga_traces = if keep_traces {
                        plans.iter().filter_map(|p| p.trace.clone()).collect()
                    } else {
                        Vec::new()
                    };
                    rows.push(TrialRow {
                        trial,
                        snr_db,
                        clusters: c_count,
                        mode: Mode::of_clusters(c_count),
                        scheduler,
                        allocator,
                        precoder: kind,
                        total_rate: report.total_rate,
                        cluster_rates: report.per_cluster_rate,
                        selected: scheduled.clone(),
                        evaluated,
                        ga_traces,
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// Runs every trial of `config`. `threads` of `Some(1)` runs sequentially;
/// the record is identical for any thread count.
pub fn run_network(config: &RunConfig, threads: Option<usize>) -> Result<RunRecord> {
    config.validate()?;
    let outputs = par::map_indexed(config.trials, threads, |t| run_trial(config, t));
    let mut rows = Vec::new();
    let mut flops_total = vec![0u64; config.clusters.len()];
    for out in outputs {
        let out = out?;
        rows.extend(out.rows);
        for (acc, f) in flops_total.iter_mut().zip(out.flops) {
            *acc += f;
        }
    }
    let costs = config
        .clusters
        .iter()
        .zip(flops_total)
        .map(|(&c, flop_count)| {
            let mode = Mode::of_clusters(c);
            ModeCost {
                clusters: c,
                mode,
                signaling_load: signaling_load(config.m, config.k, c, mode, config.signaling_factor),
                flop_count,
            }
        })
        .collect();
    Ok(RunRecord {
        config: config.clone(),
        config_hash: config.content_hash(),
        rows,
        costs,
    })
}

impl RunRecord {
    /// Mean and sample standard deviation of the total rate per cell, in
    /// configuration order.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let cfg = &self.config;
        let mut out = Vec::new();
        for &c in &cfg.clusters {
            for &scheduler in &cfg.scheduler {
                for &allocator in &cfg.allocator {
                    for &precoder in &cfg.precoder {
                        for &snr_db in &cfg.snr_db {
                            let rates: Vec<f64> = self
                                .rows
                                .iter()
                                .filter(|r| {
                                    r.clusters == c
                                        && r.scheduler == scheduler
                                        && r.allocator == allocator
                                        && r.precoder == precoder
                                        && r.snr_db == snr_db
                                })
                                .map(|r| r.total_rate)
                                .collect();
                            let (mean_rate, std_rate) = mean_std(&rates);
                            out.push(SummaryRow {
                                snr_db,
                                scheduler,
                                allocator,
                                precoder,
                                mode: Mode::of_clusters(c),
                                mean_rate,
                                std_rate,
                                trials: rates.len(),
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn write_summary_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "snr_db,scheduler,allocator,precoder,mode,mean_rate,std_rate,trials")?;
        for r in self.summary() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.snr_db,
                r.scheduler.label(),
                r.allocator.label(),
                r.precoder.label(),
                r.mode.label(),
                r.mean_rate,
                r.std_rate,
                r.trials
            )?;
        }
        Ok(())
    }

    pub fn write_traces_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "trial,snr_db,mode,scheduler,precoder,cluster,iteration,objective")?;
        for r in &self.rows {
            for (c, t) in r.ga_traces.iter().enumerate() {
                for (i, x) in t.objective_per_iter.iter().enumerate() {
                    writeln!(
                        out,
                        "{},{},{},{},{},{},{},{}",
                        r.trial,
                        r.snr_db,
                        r.mode.label(),
                        r.scheduler.label(),
                        r.precoder.label(),
                        c,
                        i + 1,
                        x
                    )?;
                }
            }
        }
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self).map_err(|e| Error::Io(e.to_string()))
    }

    /// Mean total rate of one cell, if present.
    pub fn mean_rate(
        &self,
        clusters: usize,
        scheduler: Scheduler,
        allocator: Allocator,
        precoder: PrecoderKind,
        snr_db: f64,
    ) -> Option<f64> {
        let rates: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| {
                r.clusters == clusters
                    && r.scheduler == scheduler
                    && r.allocator == allocator
                    && r.precoder == precoder
                    && r.snr_db == snr_db
            })
            .map(|r| r.total_rate)
            .collect();
        (!rates.is_empty()).then(|| mean_std(&rates).0)
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
