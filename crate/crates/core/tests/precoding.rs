mod common;

use common::{random_matrix, rng};
use proptest::prelude::*;
use smspa::linalg::{self, CMat};
use smspa::precoding::{
    self, equal_power_loading, mmse_raw_weights, zf_raw_weights, PrecoderKind, SystemParams, ZF_CONDITION_CAP,
};
use smspa::Error;

fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[test]
fn zf_matches_pseudo_inverse() {
    let mut r = rng(1);
    for (m, n) in [(4, 2), (8, 4), (8, 8), (16, 5)] {
        let g = random_matrix(&mut r, m, n);
        let raw = zf_raw_weights(&g, ZF_CONDITION_CAP).unwrap();
        // right inverse of G^T through the SVD
        let pinv = g.transpose().pseudo_inverse(1e-14).unwrap();
        assert!(max_abs(&(&raw - &pinv)) < 1e-10 * max_abs(&pinv), "{m}x{n}");
    }
}

#[test]
fn zf_nulls_interference() {
    let mut r = rng(2);
    for _ in 0..100 {
        let g = random_matrix(&mut r, 8, 4);
        let eff = g.transpose() * zf_raw_weights(&g, ZF_CONDITION_CAP).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(eff[(i, j)].norm() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn mmse_matches_push_through_form() {
    let mut r = rng(3);
    for (m, n, xi) in [(4, 2, 0.3), (8, 4, 2.0), (6, 6, 1e-3)] {
        let g = random_matrix(&mut r, m, n);
        let raw = mmse_raw_weights(&g, xi).unwrap();
        // (G* G^T + xi I_M)^-1 G*, solved by LU on the M x M system
        let mut a = g.conjugate() * g.transpose();
        for i in 0..m {
            a[(i, i)] += xi;
        }
        let oracle = a.lu().solve(&g.conjugate()).unwrap();
        assert!(max_abs(&(&raw - &oracle)) < 1e-10 * max_abs(&oracle));
    }
}

#[test]
fn mmse_tends_to_zf_at_high_snr() {
    let mut r = rng(4);
    let g = random_matrix(&mut r, 8, 4);
    let p = SystemParams {
        rho_f: 1e12,
        ..Default::default()
    };
    let mmse = precoding::mmse_weights(&g, &p).unwrap();
    let zf = precoding::zf_weights(&g).unwrap();
    assert!(max_abs(&(&mmse - &zf)) < 1e-8);
}

#[test]
fn mmse_tends_to_matched_filter_at_low_snr() {
    let mut r = rng(5);
    let g = random_matrix(&mut r, 8, 4);
    let p = SystemParams {
        rho_f: 1e-12,
        ..Default::default()
    };
    let mmse = precoding::mmse_weights(&g, &p).unwrap();
    let mf = linalg::normalize_columns(&g.conjugate());
    assert!(max_abs(&(&mmse - &mf)) < 1e-8);
}

#[test]
fn equal_loading_on_unit_columns() {
    let mut r = rng(6);
    let g = random_matrix(&mut r, 8, 5);
    let w = precoding::mmse_weights(&g, &SystemParams::default()).unwrap();
    let d = equal_power_loading(5, &w, 2.5);
    for v in &d {
        assert!((v - (2.5f64 / 5.0).sqrt()).abs() < 1e-12);
    }
}

#[test]
fn zf_condition_cap_names_the_set() {
    let mut r = rng(7);
    let mut g = random_matrix(&mut r, 4, 3);
    let col = g.column(0).clone_owned();
    g.set_column(2, &col.scale(2.0));
    assert!(matches!(
        PrecoderKind::Zf.weights(&g, &SystemParams::default(), ZF_CONDITION_CAP),
        Err(Error::SingularChannel { ref ues, .. }) if ues == &vec![0, 1, 2]
    ));
    // MMSE stays well posed on the same estimate
    assert!(PrecoderKind::Mmse.weights(&g, &SystemParams::default(), ZF_CONDITION_CAP).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_have_unit_columns(seed in any::<u64>(), m in 2usize..10, frac in 0.1f64..1.0, zf in any::<bool>()) {
        let n = ((m as f64 * frac).ceil() as usize).clamp(1, m);
        let mut r = rng(seed);
        let g = random_matrix(&mut r, m, n);
        let kind = if zf { PrecoderKind::Zf } else { PrecoderKind::Mmse };
        let w = kind.weights(&g, &SystemParams::default(), 1e14).unwrap();
        for n2 in linalg::column_norms_sq(&w) {
            prop_assert!((n2 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn assembled_precoder_meets_budget(seed in any::<u64>(), budget in 0.01f64..100.0, n in 1usize..6) {
        let mut r = rng(seed);
        let g = random_matrix(&mut r, 6, n);
        let w = precoding::mmse_weights(&g, &SystemParams::default()).unwrap();
        let d = equal_power_loading(n, &w, budget);
        let pre = precoding::assemble(w, d, budget).unwrap();
        prop_assert!((pre.power() - budget).abs() <= 1e-12 * budget);
    }
}
