//! Network geometry, clustering and stochastic channel draws.
//!
//! Large-scale gains follow a three-slope path-loss law with log-normal
//! shadowing beyond the far breakpoint. All dB/linear conversions live in this
//! module; everything downstream consumes linear gains.

use std::collections::HashSet;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

/// Distances below this are clamped before evaluating the path loss.
pub const MIN_DISTANCE_M: f64 = 1.0;

const MAX_LAYOUT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelModelParams {
    pub carrier_freq_mhz: f64,
    pub ap_height_m: f64,
    pub ue_height_m: f64,
    pub d0_m: f64,
    pub d1_m: f64,
    pub shadow_sigma_db: f64,
    pub area_side_m: f64,
    pub csi_error_fraction: f64,
}

impl Default for ChannelModelParams {
    fn default() -> Self {
        Self {
            carrier_freq_mhz: 1900.0,
            ap_height_m: 15.0,
            ue_height_m: 1.5,
            d0_m: 10.0,
            d1_m: 50.0,
            shadow_sigma_db: 8.0,
            area_side_m: 400.0,
            csi_error_fraction: 0.1,
        }
    }
}

impl ChannelModelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_freq_mhz", self.carrier_freq_mhz),
            ("ap_height_m", self.ap_height_m),
            ("ue_height_m", self.ue_height_m),
            ("area_side_m", self.area_side_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.d0_m > 0.0 && self.d0_m < self.d1_m && self.d1_m.is_finite()) {
            return Err(Error::param(
                "d0_m",
                format!("need 0 < d0 < d1, got d0={} d1={}", self.d0_m, self.d1_m),
            ));
        }
        if !(self.shadow_sigma_db >= 0.0 && self.shadow_sigma_db.is_finite()) {
            return Err(Error::param(
                "shadow_sigma_db",
                format!("must be non-negative, got {}", self.shadow_sigma_db),
            ));
        }
        if !(0.0..1.0).contains(&self.csi_error_fraction) {
            return Err(Error::param(
                "csi_error_fraction",
                format!("must lie in [0, 1), got {}", self.csi_error_fraction),
            ));
        }
        Ok(())
    }

    /// Frequency and antenna-height dependent constant of the path-loss law, in dB.
    pub fn path_loss_constant_db(&self) -> f64 {
        let lf = self.carrier_freq_mhz.log10();
        46.3 + 33.9 * lf - 13.82 * self.ap_height_m.log10() - (1.11 * lf - 0.7) * self.ue_height_m
            + 1.56 * lf
            - 0.8
    }
}

/// Path loss in dB (a negative number) at planar distance `distance_m`.
///
/// The logarithmic terms are evaluated with distances in kilometres, the unit
/// the frequency constant is calibrated for.
pub fn path_loss_db(distance_m: f64, params: &ChannelModelParams) -> f64 {
    let d = distance_m.max(MIN_DISTANCE_M) / 1000.0;
    let d0 = params.d0_m / 1000.0;
    let d1 = params.d1_m / 1000.0;
    let k = params.path_loss_constant_db();
    if d > d1 {
        -k - 35.0 * d.log10()
    } else if d > d0 {
        -k - 10.0 * (d1.powf(1.5) * d * d).log10()
    } else {
        -k - 10.0 * (d1.powf(1.5) * d0 * d0).log10()
    }
}

/// Linear large-scale gain for one link given a standard-normal shadowing draw.
/// Links within the far breakpoint are not shadowed.
pub fn large_scale_coeff(distance_m: f64, shadow_z: f64, params: &ChannelModelParams) -> f64 {
    let pl = path_loss_db(distance_m, params);
    let shadow = if distance_m.max(MIN_DISTANCE_M) > params.d1_m {
        params.shadow_sigma_db * shadow_z
    } else {
        0.0
    };
    10f64.powf(pl / 10.0) * 10f64.powf(shadow / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    /// Every node i.i.d. uniform over the whole square.
    #[default]
    Uniform,
    /// `M/C` APs and `K/C` UEs uniform inside each tile.
    Stratified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmptyClusterPolicy {
    #[default]
    Regenerate,
    Error,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LayoutOptions {
    pub placement: Placement,
    pub empty_cluster: EmptyClusterPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkLayout {
    pub ap_positions: Vec<[f64; 2]>,
    pub ue_positions: Vec<[f64; 2]>,
    pub cluster_of_ap: Vec<usize>,
    pub cluster_of_ue: Vec<usize>,
    pub clusters: usize,
    pub area_side_m: f64,
}

impl NetworkLayout {
    pub fn num_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn num_ues(&self) -> usize {
        self.ue_positions.len()
    }

    pub fn aps_in(&self, cluster: usize) -> Vec<usize> {
        members(&self.cluster_of_ap, cluster)
    }

    pub fn ues_in(&self, cluster: usize) -> Vec<usize> {
        members(&self.cluster_of_ue, cluster)
    }

    /// `M_c` for every cluster.
    pub fn ap_counts(&self) -> Vec<usize> {
        counts(&self.cluster_of_ap, self.clusters)
    }

    /// `K_c` for every cluster.
    pub fn ue_counts(&self) -> Vec<usize> {
        counts(&self.cluster_of_ue, self.clusters)
    }

    pub fn distance(&self, ap: usize, ue: usize) -> f64 {
        let [ax, ay] = self.ap_positions[ap];
        let [ux, uy] = self.ue_positions[ue];
        (ax - ux).hypot(ay - uy)
    }

    /// Re-assigns cluster membership for a different tile grid, keeping positions.
    pub fn with_clusters(&self, clusters: usize) -> Result<NetworkLayout> {
        let side = grid_side(clusters)?;
        let tile = |p: &[f64; 2]| tile_of(*p, self.area_side_m, side);
        Ok(NetworkLayout {
            cluster_of_ap: self.ap_positions.iter().map(tile).collect(),
            cluster_of_ue: self.ue_positions.iter().map(tile).collect(),
            clusters,
            ..self.clone()
        })
    }
}

fn members(of: &[usize], cluster: usize) -> Vec<usize> {
    of.iter()
        .enumerate()
        .filter(|(_, &c)| c == cluster)
        .map(|(i, _)| i)
        .collect()
}

fn counts(of: &[usize], clusters: usize) -> Vec<usize> {
    let mut n = vec![0; clusters];
    for &c in of {
        n[c] += 1;
    }
    n
}

fn grid_side(clusters: usize) -> Result<usize> {
    let side = (clusters as f64).sqrt().round() as usize;
    if clusters == 0 || side * side != clusters {
        return Err(Error::InvalidClusterCount(clusters));
    }
    Ok(side)
}

fn tile_of(p: [f64; 2], area: f64, side: usize) -> usize {
    let w = area / side as f64;
    let col = ((p[0] / w).floor() as usize).min(side - 1);
    let row = ((p[1] / w).floor() as usize).min(side - 1);
    row * side + col
}

/// Draws a layout with default options (uniform placement, regenerate on empty clusters).
pub fn generate_layout(
    m: usize,
    k: usize,
    clusters: usize,
    params: &ChannelModelParams,
    seed: u64,
) -> Result<NetworkLayout> {
    generate_layout_with(m, k, clusters, params, seed, LayoutOptions::default())
}

pub fn generate_layout_with(
    m: usize,
    k: usize,
    clusters: usize,
    params: &ChannelModelParams,
    seed: u64,
    opts: LayoutOptions,
) -> Result<NetworkLayout> {
    let side = grid_side(clusters)?;
    params.validate()?;
    if m < clusters || k < clusters {
        return Err(Error::param(
            "M/K",
            format!("need M, K >= C, got M={m} K={k} C={clusters}"),
        ));
    }
    if opts.placement == Placement::Stratified && (!m.is_multiple_of(clusters) || !k.is_multiple_of(clusters)) {
        return Err(Error::param(
            "placement",
            format!("stratified placement needs C | M and C | K, got M={m} K={k} C={clusters}"),
        ));
    }
    let area = params.area_side_m;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_LAYOUT_ATTEMPTS {
        let (ap_positions, ue_positions) = match opts.placement {
            Placement::Uniform => (
                uniform_points(&mut rng, m, [0.0, 0.0], area),
                uniform_points(&mut rng, k, [0.0, 0.0], area),
            ),
            Placement::Stratified => (
                stratified_points(&mut rng, m / clusters, side, area),
                stratified_points(&mut rng, k / clusters, side, area),
            ),
        };
        let cluster_of_ap: Vec<usize> = ap_positions.iter().map(|p| tile_of(*p, area, side)).collect();
        let cluster_of_ue = ue_positions.iter().map(|p| tile_of(*p, area, side)).collect();
        let empty = counts(&cluster_of_ap, clusters).iter().position(|&n| n == 0);
        match (empty, opts.empty_cluster) {
            (None, _) => {
                return Ok(NetworkLayout {
                    ap_positions,
                    ue_positions,
                    cluster_of_ap,
                    cluster_of_ue,
                    clusters,
                    area_side_m: area,
                })
            }
            (Some(c), EmptyClusterPolicy::Error) => return Err(Error::EmptyCluster { cluster: c }),
            (Some(_), EmptyClusterPolicy::Regenerate) => continue,
        }
    }
    Err(Error::LayoutExhausted {
        attempts: MAX_LAYOUT_ATTEMPTS,
        reason: "every draw left a cluster without APs".into(),
    })
}

fn uniform_points(rng: &mut ChaCha8Rng, n: usize, origin: [f64; 2], width: f64) -> Vec<[f64; 2]> {
    (0..n)
        .map(|_| {
            let x: f64 = rng.random();
            let y: f64 = rng.random();
            [origin[0] + x * width, origin[1] + y * width]
        })
        .collect()
}

fn stratified_points(rng: &mut ChaCha8Rng, per_tile: usize, side: usize, area: f64) -> Vec<[f64; 2]> {
    let w = area / side as f64;
    let mut pts = Vec::with_capacity(per_tile * side * side);
    for tile in 0..side * side {
        let origin = [(tile % side) as f64 * w, (tile / side) as f64 * w];
        // keep points strictly inside so tile_of maps them back to `tile`
        for p in uniform_points(rng, per_tile, origin, w) {
            let clamp = |v: f64, lo: f64| v.clamp(lo, lo + w * (1.0 - 1e-12));
            pts.push([clamp(p[0], origin[0]), clamp(p[1], origin[1])]);
        }
    }
    pts
}

/// One snapshot of every AP-UE link.
///
/// Matrices are `M x K`, rows indexed by AP and columns by UE.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub beta: DMatrix<f64>,
    pub g_true: CMat,
    pub g_hat: CMat,
    pub g_err: CMat,
}

impl ChannelRealization {
    pub fn num_aps(&self) -> usize {
        self.g_hat.nrows()
    }

    pub fn num_ues(&self) -> usize {
        self.g_hat.ncols()
    }

    /// Builds a realization from an estimate and an error; the true channel is their sum.
    pub fn from_parts(beta: DMatrix<f64>, g_hat: CMat, g_err: CMat) -> Result<Self> {
        if g_hat.shape() != g_err.shape() || beta.shape() != g_hat.shape() {
            return Err(Error::DimensionMismatch(format!(
                "beta {:?}, g_hat {:?}, g_err {:?}",
                beta.shape(),
                g_hat.shape(),
                g_err.shape()
            )));
        }
        let g_true = &g_hat + &g_err;
        Ok(Self {
            beta,
            g_true,
            g_hat,
            g_err,
        })
    }

    /// Restriction to the given APs (rows) and UEs (columns).
    pub fn subchannel(&self, ap_set: &[usize], ue_set: &[usize]) -> Result<ChannelRealization> {
        check_indices(ap_set, self.num_aps())?;
        check_indices(ue_set, self.num_ues())?;
        Ok(ChannelRealization {
            beta: DMatrix::from_fn(ap_set.len(), ue_set.len(), |i, j| self.beta[(ap_set[i], ue_set[j])]),
            g_true: linalg::select(&self.g_true, ap_set, ue_set),
            g_hat: linalg::select(&self.g_hat, ap_set, ue_set),
            g_err: linalg::select(&self.g_err, ap_set, ue_set),
        })
    }

    /// Writes every link as one CSV row of real and imaginary parts.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "ap,ue,beta,g_true_re,g_true_im,g_hat_re,g_hat_im,g_err_re,g_err_im"
        )?;
        for m in 0..self.num_aps() {
            for u in 0..self.num_ues() {
                let (t, h, e) = (self.g_true[(m, u)], self.g_hat[(m, u)], self.g_err[(m, u)]);
                writeln!(
                    out,
                    "{m},{u},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                    self.beta[(m, u)],
                    t.re,
                    t.im,
                    h.re,
                    h.im,
                    e.re,
                    e.im
                )?;
            }
        }
        Ok(())
    }
}

fn check_indices(set: &[usize], len: usize) -> Result<()> {
    let mut seen = HashSet::with_capacity(set.len());
    for &i in set {
        if i >= len {
            return Err(Error::IndexOutOfRange { index: i, len });
        }
        if !seen.insert(i) {
            return Err(Error::DuplicateIndex(i));
        }
    }
    Ok(())
}

fn complex_normal(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws large-scale gains, small-scale fading and the estimate/error split.
///
/// The estimate and error are independent zero-mean circular Gaussians with
/// variances `(1 - f) * beta` and `f * beta`, `f` being the CSI error fraction,
/// so the true channel has variance `beta`.
pub fn draw_channel(
    layout: &NetworkLayout,
    params: &ChannelModelParams,
    seed: u64,
) -> Result<ChannelRealization> {
    params.validate()?;
    let (m, k) = (layout.num_aps(), layout.num_ues());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut beta = DMatrix::zeros(m, k);
    let mut g_hat = CMat::zeros(m, k);
    let mut g_err = CMat::zeros(m, k);
    let f = params.csi_error_fraction;
    for a in 0..m {
        for u in 0..k {
            let z: f64 = rng.sample(StandardNormal);
            let b = large_scale_coeff(layout.distance(a, u), z, params);
            let h_hat = complex_normal(&mut rng);
            let h_err = complex_normal(&mut rng);
            beta[(a, u)] = b;
            g_hat[(a, u)] = h_hat * ((1.0 - f) * b).sqrt();
            g_err[(a, u)] = h_err * (f * b).sqrt();
        }
    }
    ChannelRealization::from_parts(beta, g_hat, g_err)
}
