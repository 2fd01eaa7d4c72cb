mod common;

use std::collections::HashSet;

use common::{params, random_channel, rng};
use proptest::prelude::*;
use smspa::geometry::ChannelRealization;
use smspa::scheduling::{
    channel_power, channel_powers, es_schedule, esg_schedule, greedy_first_stage, next_swap, set_rate_explicit,
    sg_schedule, ClusterGram, ScheduleState,
};
use smspa::Error;

/// The greedy recursion replayed from its definition with the explicit metric.
fn greedy_oracle(chan: &ChannelRealization, n: usize, snr_db: f64) -> Vec<usize> {
    let p = params(snr_db);
    let powers: Vec<f64> = chan.g_hat.column_iter().map(|c| c.norm_squared()).collect();
    let mut first = 0;
    for u in 1..powers.len() {
        if powers[u] > powers[first] {
            first = u;
        }
    }
    let mut set = vec![first];
    let mut current = set_rate_explicit(chan, &set, &p).unwrap();
    while set.len() < n {
        let mut best: Option<(usize, f64)> = None;
        for u in 0..chan.num_ues() {
            if set.contains(&u) {
                continue;
            }
            let mut trial = set.clone();
            trial.push(u);
            let r = set_rate_explicit(chan, &trial, &p).unwrap();
            if best.is_none_or(|(_, b)| r > b) {
                best = Some((u, r));
            }
        }
        let (u, r) = best.unwrap();
        if r <= current {
            break;
        }
        set.push(u);
        current = r;
    }
    set
}

#[test]
fn channel_power_examples() {
    use num_complex::Complex64 as C;
    assert_eq!(channel_power(&[C::new(0.0, 0.0); 3]), 0.0);
    assert_eq!(channel_power(&[C::new(0.0, 1.0)]), 1.0);
    assert_eq!(channel_power(&[C::new(3.0, 0.0), C::new(0.0, 4.0)]), 25.0);
}

#[test]
fn greedy_replays_definition() {
    let mut r = rng(30);
    for t in 0..20 {
        let chan = random_channel(&mut r, 4, 6, 0.1);
        let snr = [-5.0, 10.0][t % 2];
        let state = greedy_first_stage(&chan, 3, &params(snr)).unwrap();
        assert_eq!(state.selected, greedy_oracle(&chan, 3, snr));
        let powers = channel_powers(&chan);
        let top = powers.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(powers[state.selected[0]], top);
    }
}

#[test]
fn greedy_single_ue_is_strongest() {
    let mut r = rng(31);
    let chan = random_channel(&mut r, 4, 7, 0.1);
    let powers = channel_powers(&chan);
    let best = (0..7).max_by(|&a, &b| powers[a].total_cmp(&powers[b])).unwrap();
    assert_eq!(greedy_first_stage(&chan, 1, &params(10.0)).unwrap().selected, vec![best]);
}

#[test]
fn swap_example() {
    let state = ScheduleState {
        selected: vec![0, 1, 2],
        remaining: vec![3],
        swap_out: None,
        swap_in: None,
        rate: None,
    };
    let next = next_swap(&state, &[4.0, 1.0, 9.0, 16.0]).unwrap();
    assert_eq!((next.swap_out, next.swap_in), (Some(1), Some(3)));
    assert_eq!(next.selected, vec![0, 3, 2]);
    assert!(next.remaining.is_empty());
    assert_eq!(next_swap(&next, &[4.0, 1.0, 9.0, 16.0]).unwrap_err(), Error::EmptyRemaining);
}

#[test]
fn swap_chain_covers_every_ue_once() {
    let mut r = rng(32);
    for _ in 0..30 {
        let chan = random_channel(&mut r, 4, 8, 0.1);
        let res = esg_schedule(&chan, 3, &params(10.0)).unwrap();
        let first: HashSet<usize> = res.candidates[0].set.iter().copied().collect();
        let mut seen = first.clone();
        for pair in res.candidates.windows(2) {
            let prev: HashSet<usize> = pair[0].set.iter().copied().collect();
            let next: HashSet<usize> = pair[1].set.iter().copied().collect();
            let added: Vec<usize> = next.difference(&prev).copied().collect();
            assert_eq!(added.len(), 1);
            assert!(seen.insert(added[0]), "UE {} swapped in twice", added[0]);
        }
        if first.len() == 3 {
            assert_eq!(seen.len(), 8);
        }
        let distinct: HashSet<Vec<usize>> = res
            .candidates
            .iter()
            .map(|c| {
                let mut s = c.set.clone();
                s.sort();
                s
            })
            .collect();
        assert_eq!(distinct.len(), res.candidates.len());
    }
}

#[test]
fn dominance_chain() {
    let mut r = rng(33);
    for t in 0..25 {
        let chan = random_channel(&mut r, 4, 8, 0.1);
        let p = params([0.0, 10.0, 20.0][t % 3]);
        let es = es_schedule(&chan, 4, &p).unwrap();
        let esg = esg_schedule(&chan, 4, &p).unwrap();
        let sg = sg_schedule(&chan, 4, &p).unwrap();
        assert!(es.rate >= esg.rate - 1e-12);
        assert!(esg.rate >= sg.rate);
        assert_eq!(sg.selected, esg.candidates[0].set);
    }
}

#[test]
fn es_single_ue_is_best_by_rate() {
    let mut r = rng(34);
    for _ in 0..10 {
        let chan = random_channel(&mut r, 4, 6, 0.3);
        let p = params(5.0);
        let es = es_schedule(&chan, 1, &p).unwrap();
        let rates: Vec<f64> = (0..6).map(|u| set_rate_explicit(&chan, &[u], &p).unwrap()).collect();
        let best = rates.iter().cloned().fold(f64::MIN, f64::max);
        assert!((es.rate - best).abs() < 1e-9);
        assert!((rates[es.selected[0]] - best).abs() < 1e-9);
    }
}

#[test]
fn relabeling_permutes_selection() {
    let mut r = rng(35);
    let chan = random_channel(&mut r, 4, 7, 0.1);
    let perm = [3, 6, 0, 5, 1, 4, 2];
    let ues: Vec<usize> = perm.to_vec();
    let aps: Vec<usize> = (0..4).collect();
    let permuted = chan.subchannel(&aps, &ues).unwrap();
    let p = params(10.0);
    let a = esg_schedule(&chan, 3, &p).unwrap();
    let b = esg_schedule(&permuted, 3, &p).unwrap();
    let mut mapped: Vec<usize> = b.selected.iter().map(|&i| perm[i]).collect();
    let mut orig = a.selected.clone();
    mapped.sort();
    orig.sort();
    assert_eq!(mapped, orig);
    assert!((a.rate - b.rate).abs() < 1e-9);
}

#[test]
fn all_ues_when_counts_match() {
    let mut r = rng(36);
    let chan = random_channel(&mut r, 4, 4, 0.0);
    let res = esg_schedule(&chan, 4, &params(20.0)).unwrap();
    assert_eq!(res.candidates.len(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn gram_metric_matches_explicit(seed in any::<u64>(), snr in -10.0f64..30.0, err in 0.0f64..0.5, size in 1usize..5) {
        let mut r = rng(seed);
        let chan = random_channel(&mut r, 5, 6, err);
        let set: Vec<usize> = (0..size).map(|i| (i * 5 + seed as usize % 6) % 6).collect::<HashSet<_>>().into_iter().collect();
        let p = params(snr);
        let gram = ClusterGram::new(&chan).set_rate(&set, &p).unwrap();
        let explicit = set_rate_explicit(&chan, &set, &p).unwrap();
        prop_assert!((gram - explicit).abs() <= 1e-9 * explicit.abs().max(1.0));
    }

    #[test]
    fn early_break_is_sound(seed in any::<u64>(), snr in -20.0f64..20.0) {
        let mut r = rng(seed);
        let chan = random_channel(&mut r, 4, 6, 0.2);
        let p = params(snr);
        let st = greedy_first_stage(&chan, 4, &p).unwrap();
        let full = st.rate.unwrap();
        let shorter = set_rate_explicit(&chan, &st.selected[..st.selected.len() - 1], &p).unwrap_or(0.0);
        prop_assert!(st.selected.len() == 1 || full > shorter - 1e-12);
        prop_assert!(st.selected.len() <= 4);
    }
}
