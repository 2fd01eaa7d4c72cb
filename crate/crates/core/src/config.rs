//! Run configuration: a flat TOML table with documented defaults, plus
//! `KEY=VALUE` overrides applied before validation.

use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{self, ChannelModelParams, EmptyClusterPolicy, Placement};
use crate::power::Allocator;
use crate::precoding::{PrecoderKind, StepSize, SystemParams, ZF_CONDITION_CAP};
use crate::scheduling::{Scheduler, ES_SUBSET_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepMode {
    Relative,
    Absolute,
}

/// How the budget `p_budget` is shared when the network is clustered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BudgetSplit {
    /// Each cluster gets `p_budget * M_c / M`, so the network total stays `p_budget`.
    #[default]
    Shared,
    /// Each cluster gets the whole `p_budget`.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    /// Cluster counts to run; each shares the trial's node positions.
    #[serde(rename = "C", deserialize_with = "one_or_many")]
    pub clusters: Vec<usize>,
    /// Scheduled UEs network-wide; each cluster schedules `n / C`.
    pub n: usize,

    #[serde(default = "default_scheduler", deserialize_with = "one_or_many")]
    pub scheduler: Vec<Scheduler>,
    #[serde(default = "default_allocator", deserialize_with = "one_or_many")]
    pub allocator: Vec<Allocator>,
    #[serde(default = "default_precoder", deserialize_with = "one_or_many")]
    pub precoder: Vec<PrecoderKind>,
    #[serde(default = "default_snr", deserialize_with = "one_or_many")]
    pub snr_db: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,

    #[serde(default = "one")]
    pub noise_var: f64,
    #[serde(default = "one")]
    pub p_budget: f64,
    #[serde(default)]
    pub cluster_budget: BudgetSplit,
    /// Distance whose unshadowed gain anchors the SNR axis; 0 disables it.
    #[serde(default = "default_snr_reference")]
    pub snr_reference_m: f64,
    #[serde(default = "default_ga_step")]
    pub ga_step: f64,
    #[serde(default = "default_ga_step_mode")]
    pub ga_step_mode: StepMode,
    #[serde(default = "default_ga_iters")]
    pub ga_iters: usize,

    #[serde(default = "d::carrier_freq_mhz")]
    pub carrier_freq_mhz: f64,
    #[serde(default = "d::ap_height_m")]
    pub ap_height_m: f64,
    #[serde(default = "d::ue_height_m")]
    pub ue_height_m: f64,
    #[serde(default = "d::d0_m")]
    pub d0_m: f64,
    #[serde(default = "d::d1_m")]
    pub d1_m: f64,
    #[serde(default = "d::shadow_sigma_db")]
    pub shadow_sigma_db: f64,
    #[serde(default = "d::area_side_m")]
    pub area_side_m: f64,
    #[serde(default = "d::csi_error_fraction")]
    pub csi_error_fraction: f64,
    #[serde(default)]
    pub placement: Placement,
    #[serde(default)]
    pub empty_cluster: EmptyClusterPolicy,

    #[serde(default = "default_es_cap")]
    pub es_cap: u64,
    #[serde(default = "default_zf_cap")]
    pub zf_condition_cap: f64,
    /// GA traces are kept for trials below this index.
    #[serde(default = "default_trace_trials")]
    pub trace_trials: usize,
    #[serde(default)]
    pub counters: bool,
    #[serde(default = "default_signaling_factor")]
    pub signaling_factor: u64,
}

mod d {
    use crate::geometry::ChannelModelParams;

    macro_rules! channel_default {
        ($($name:ident),*) => {
            $(pub fn $name() -> f64 { ChannelModelParams::default().$name })*
        };
    }
    channel_default!(
        carrier_freq_mhz,
        ap_height_m,
        ue_height_m,
        d0_m,
        d1_m,
        shadow_sigma_db,
        area_side_m,
        csi_error_fraction
    );
}

fn default_scheduler() -> Vec<Scheduler> {
    vec![Scheduler::Esg]
}
fn default_allocator() -> Vec<Allocator> {
    vec![Allocator::Ga]
}
fn default_precoder() -> Vec<PrecoderKind> {
    vec![PrecoderKind::Mmse]
}
fn default_snr() -> Vec<f64> {
    vec![-10.0, 0.0, 10.0, 20.0]
}
fn default_trials() -> usize {
    200
}
fn one() -> f64 {
    1.0
}
fn default_snr_reference() -> f64 {
    ChannelModelParams::default().d1_m
}
fn default_ga_step() -> f64 {
    match SystemParams::default().ga_step {
        StepSize::Absolute(v) | StepSize::Relative(v) => v,
    }
}
fn default_ga_step_mode() -> StepMode {
    match SystemParams::default().ga_step {
        StepSize::Absolute(_) => StepMode::Absolute,
        StepSize::Relative(_) => StepMode::Relative,
    }
}
fn default_ga_iters() -> usize {
    SystemParams::default().ga_iters
}
fn default_es_cap() -> u64 {
    ES_SUBSET_CAP as u64
}
fn default_zf_cap() -> f64 {
    ZF_CONDITION_CAP
}
fn default_trace_trials() -> usize {
    1
}
fn default_signaling_factor() -> u64 {
    3
}

fn one_or_many<'de, D, T>(de: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(match OneOrMany::deserialize(de)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

impl RunConfig {
    pub fn channel_params(&self) -> ChannelModelParams {
        ChannelModelParams {
            carrier_freq_mhz: self.carrier_freq_mhz,
            ap_height_m: self.ap_height_m,
            ue_height_m: self.ue_height_m,
            d0_m: self.d0_m,
            d1_m: self.d1_m,
            shadow_sigma_db: self.shadow_sigma_db,
            area_side_m: self.area_side_m,
            csi_error_fraction: self.csi_error_fraction,
        }
    }

    pub fn ga_step_size(&self) -> StepSize {
        match self.ga_step_mode {
            StepMode::Relative => StepSize::Relative(self.ga_step),
            StepMode::Absolute => StepSize::Absolute(self.ga_step),
        }
    }

    /// Large-scale gain the SNR axis is referenced to.
    pub fn reference_gain(&self) -> f64 {
        if self.snr_reference_m > 0.0 {
            10f64.powf(geometry::path_loss_db(self.snr_reference_m, &self.channel_params()) / 10.0)
        } else {
            1.0
        }
    }

    /// System parameters at one SNR point: `rho_f * beta_ref / noise_var`
    /// equals the SNR in linear scale.
    pub fn system_params(&self, snr_db: f64) -> SystemParams {
        SystemParams {
            rho_f: self.noise_var * 10f64.powf(snr_db / 10.0) / self.reference_gain(),
            noise_var: self.noise_var,
            p_budget: self.p_budget,
            ga_step: self.ga_step_size(),
            ga_iters: self.ga_iters,
        }
    }

    /// Budget of a cluster holding `aps` of the `M` access points.
    pub fn cluster_budget_for(&self, aps: usize) -> f64 {
        match self.cluster_budget {
            BudgetSplit::Shared => self.p_budget * aps as f64 / self.m as f64,
            BudgetSplit::Full => self.p_budget,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: String| Err(Error::config(key, reason));
        if self.m == 0 || self.k == 0 || self.n == 0 {
            return bad("M", format!("M, K and n must be positive, got M={} K={} n={}", self.m, self.k, self.n));
        }
        if self.clusters.is_empty() {
            return bad("C", "needs at least one cluster count".into());
        }
        for &c in &self.clusters {
            let side = (c as f64).sqrt().round() as usize;
            if c == 0 || side * side != c {
                return bad("C", format!("{c} is neither 1 nor a perfect square"));
            }
            if !self.n.is_multiple_of(c) {
                return bad("n", format!("n={} is not divisible by C={c}", self.n));
            }
            let n_c = self.n / c;
            let (m_c, k_c) = (self.m / c, self.k / c);
            if n_c > m_c {
                return bad("n", format!("n_c={n_c} exceeds M_c={m_c} for C={c}"));
            }
            if n_c > k_c {
                return bad("n", format!("n_c={n_c} exceeds K_c={k_c} for C={c}"));
            }
        }
        for (key, empty) in [
            ("scheduler", self.scheduler.is_empty()),
            ("allocator", self.allocator.is_empty()),
            ("precoder", self.precoder.is_empty()),
            ("snr_db", self.snr_db.is_empty()),
        ] {
            if empty {
                return bad(key, "list must not be empty".into());
            }
        }
        if let Some(s) = self.snr_db.iter().find(|s| !s.is_finite()) {
            return bad("snr_db", format!("non-finite value {s}"));
        }
        if self.trials == 0 {
            return bad("trials", "must be at least 1".into());
        }
        if !(self.snr_reference_m >= 0.0 && self.snr_reference_m.is_finite()) {
            return bad("snr_reference_m", format!("must be non-negative, got {}", self.snr_reference_m));
        }
        if !(self.zf_condition_cap > 1.0) {
            return bad("zf_condition_cap", format!("must exceed 1, got {}", self.zf_condition_cap));
        }
        if self.signaling_factor == 0 {
            return bad("signaling_factor", "must be positive".into());
        }
        let as_config = |e: Error| match e {
            Error::InvalidParameter { name, reason } => Error::config(name, reason),
            e => e,
        };
        self.channel_params().validate().map_err(as_config)?;
        self.system_params(self.snr_db[0]).validate().map_err(as_config)?;
        Ok(())
    }

    /// Canonical TOML rendering; identical configs render identically.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Git-style blob hash of the canonical rendering.
    pub fn content_hash(&self) -> String {
        let body = self.to_toml();
        let mut h = Sha256::new();
        h.update(format!("blob {}\0", body.len()).as_bytes());
        h.update(body.as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parses one `KEY=VALUE` or `KEY+=VALUE` override. The value is read as a
/// TOML value, falling back to a bare string.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, value, append) = match spec.split_once('=') {
        Some((k, v)) if k.ends_with('+') => (k.trim_end_matches('+').trim(), v.trim(), true),
        Some((k, v)) => (k.trim(), v.trim(), false),
        None => return Err(Error::config(spec, "override must look like KEY=VALUE")),
    };
    if key.is_empty() {
        return Err(Error::config(spec, "override has an empty key"));
    }
    let parsed = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    if append {
        let mut items = match table.remove(key) {
            Some(toml::Value::Array(a)) => a,
            Some(v) => vec![v],
            None => Vec::new(),
        };
        match parsed {
            toml::Value::Array(a) => items.extend(a),
            v => items.push(v),
        }
        table.insert(key.to_string(), toml::Value::Array(items));
    } else {
        table.insert(key.to_string(), parsed);
    }
    Ok(())
}

fn toml_error(e: toml::de::Error) -> Error {
    let msg = e.message().to_string();
    let key = ["unknown field `", "missing field `", "invalid type"]
        .iter()
        .find_map(|p| msg.split_once(p).map(|(_, rest)| rest))
        .and_then(|rest| rest.split('`').next())
        .filter(|k| !k.is_empty() && !k.contains(' '))
        .unwrap_or("<file>")
        .to_string();
    Error::Config { key, reason: msg }
}

/// Parses and validates a configuration from TOML text with overrides.
pub fn parse_config_str(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut table: toml::Table = text.parse().map_err(toml_error)?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let cfg: RunConfig = toml::Value::Table(table).try_into().map_err(toml_error)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(path.display().to_string(), format!("cannot read: {e}")))?;
    parse_config_str(&text, overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_gets_defaults() {
        let cfg = parse_config_str("M = 16\nK = 32\nC = 1\nn = 4\n", &[]).unwrap();
        assert_eq!(cfg.clusters, vec![1]);
        assert_eq!(cfg.scheduler, vec![Scheduler::Esg]);
        assert_eq!(cfg.trials, 200);
        assert_eq!(cfg.channel_params(), ChannelModelParams::default());
        assert_eq!(cfg.ga_step_size(), SystemParams::default().ga_step);
        assert_eq!(cfg.signaling_factor, 3);
        assert_eq!(cfg.cluster_budget_for(4), 0.25);
    }

    #[test]
    fn lists_and_scalars() {
        let cfg = parse_config_str(
            "M = 64\nK = 16\nC = [1, 4]\nn = 8\nscheduler = [\"ESG\", \"SG\"]\nsnr_db = 5\n",
            &[],
        )
        .unwrap();
        assert_eq!(cfg.clusters, vec![1, 4]);
        assert_eq!(cfg.scheduler, vec![Scheduler::Esg, Scheduler::Sg]);
        assert_eq!(cfg.snr_db, vec![5.0]);
    }

    #[test]
    fn n_c_too_large_names_both() {
        let err = parse_config_str("M = 8\nK = 32\nC = 4\nn = 12\n", &[]).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("n_c=3") && text.contains("M_c=2"), "{text}");
    }

    #[test]
    fn unknown_key_rejected() {
        let err = parse_config_str("M = 8\nK = 8\nC = 1\nn = 2\nbogus = 1\n", &[]).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "bogus"), "{err}");
        let err = parse_config_str("M = 8\nK = 8\nC = 1\nn = 2\n", &["nope=3".into()]).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "nope"), "{err}");
    }

    #[test]
    fn missing_key_named() {
        let err = parse_config_str("M = 8\nK = 8\nC = 1\n", &[]).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "n"), "{err}");
    }

    #[test]
    fn overrides() {
        let base = "M = 8\nK = 8\nC = 1\nn = 2\nscheduler = [\"ESG\"]\n";
        let cfg = parse_config_str(base, &["scheduler=ES".into(), "trials=3".into()]).unwrap();
        assert_eq!(cfg.scheduler, vec![Scheduler::Es]);
        assert_eq!(cfg.trials, 3);
        let cfg = parse_config_str(base, &["scheduler+=SG".into()]).unwrap();
        assert_eq!(cfg.scheduler, vec![Scheduler::Esg, Scheduler::Sg]);
        assert!(parse_config_str(base, &["trials".into()]).is_err());
    }

    #[test]
    fn bad_cluster_count() {
        let err = parse_config_str("M = 8\nK = 8\nC = 3\nn = 3\n", &[]).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "C"));
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = parse_config_str("M = 8\nK = 8\nC = 1\nn = 2\n", &[]).unwrap();
        let b = parse_config_str("n = 2\nC = 1\nK = 8\nM = 8\n", &[]).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        assert_eq!(a.content_hash().len(), 64);
        let c = parse_config_str("M = 8\nK = 8\nC = 1\nn = 2\nseed = 1\n", &[]).unwrap();
        assert_ne!(a.content_hash(), c.content_hash());
    }

    #[test]
    fn snr_reference() {
        let mut cfg = parse_config_str("M = 8\nK = 8\nC = 1\nn = 2\n", &[]).unwrap();
        let p = cfg.system_params(10.0);
        assert!((p.rho_f * cfg.reference_gain() / p.noise_var - 10.0).abs() < 1e-9);
        cfg.snr_reference_m = 0.0;
        assert!((cfg.system_params(20.0).rho_f - 100.0).abs() < 1e-9);
    }
}
