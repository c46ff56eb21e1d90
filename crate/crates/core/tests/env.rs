mod common;

use common::market::{pair_table as table, reward_oracle as oracle, sequences, CLOSE_X, CLOSE_Y};
use proptest::prelude::*;
use trials::env::{episode_return, replay, EnvConfig, PairOption, TradeAction, TradingEnv};

fn pair() -> PairOption {
    PairOption::new(0, 1, 2).unwrap()
}

fn cfg(cost: f64) -> EnvConfig {
    EnvConfig { cost, ..Default::default() }
}

#[test]
fn all_81_sequences_match_direct_evaluation() {
    let t = table(&CLOSE_X, &CLOSE_Y);
    let seqs = sequences(4);
    assert_eq!(seqs.len(), 81);
    for seq in &seqs {
        let rows = replay(pair(), &t, &t, 0..5, cfg(0.001), seq).unwrap();
        let (expected, n) = oracle(&CLOSE_X, &CLOSE_Y, seq, 0.001);
        assert_eq!(rows.len(), 4);
        for (row, r) in rows.iter().zip(&expected) {
            assert!((row.reward - r).abs() <= 1e-12, "{seq:?}: {} vs {r}", row.reward);
        }
        let last = rows.last().unwrap();
        assert!((last.net_value - n).abs() <= 1e-12);
        let rewards: Vec<f64> = rows.iter().map(|r| r.reward).collect();
        assert!((episode_return(&rewards).product - n).abs() <= 1e-12);
    }
}

#[test]
fn common_scaling_leaves_rewards_unchanged() {
    let base = table(&CLOSE_X, &CLOSE_Y);
    let mut scaled = base.clone();
    scaled.scale_prices(0, 8.0);
    scaled.scale_prices(1, 8.0);
    for seq in sequences(4) {
        let a = replay(pair(), &base, &base, 0..5, cfg(0.001), &seq).unwrap();
        let b = replay(pair(), &scaled, &scaled, 0..5, cfg(0.001), &seq).unwrap();
        let ra: Vec<f64> = a.iter().map(|r| r.reward).collect();
        let rb: Vec<f64> = b.iter().map(|r| r.reward).collect();
        assert_eq!(ra, rb);
    }
}

#[test]
fn swapped_legs_with_mirrored_actions_match_at_zero_cost() {
    let base = table(&CLOSE_X, &CLOSE_Y);
    let swapped = table(&CLOSE_Y, &CLOSE_X);
    for seq in sequences(4) {
        let mirrored: Vec<TradeAction> = seq.iter().map(|a| a.mirrored()).collect();
        let a = replay(pair(), &base, &base, 0..5, cfg(0.0), &seq).unwrap();
        let b = replay(pair(), &swapped, &swapped, 0..5, cfg(0.0), &mirrored).unwrap();
        let ra: Vec<f64> = a.iter().map(|r| r.reward).collect();
        let rb: Vec<f64> = b.iter().map(|r| r.reward).collect();
        assert_eq!(ra, rb);
    }
}

#[test]
fn terminal_step_clears_and_charges() {
    let t = table(&CLOSE_X, &CLOSE_Y);
    let rows = replay(pair(), &t, &t, 0..5, cfg(0.001), &[TradeAction::Long; 4]).unwrap();
    assert_eq!(rows[3].action, TradeAction::Clear);
    let hedged = (CLOSE_X[4] / CLOSE_X[3] - 1.0) - (CLOSE_Y[4] / CLOSE_Y[3] - 1.0);
    assert!((rows[3].reward - (hedged - 0.001)).abs() < 1e-15);
    assert_eq!(rows[3].position_value, 0.0);
}

fn price_path() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.05f64..0.05, 2..12).prop_map(|r| {
        let mut p = vec![50.0];
        for x in r {
            p.push(p.last().unwrap() * (1.0 + x));
        }
        p
    })
}

fn paths_and_actions() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<TradeAction>)> {
    (price_path(), price_path()).prop_flat_map(|(x, y)| {
        let n = x.len().min(y.len());
        let (x, y) = (x[..n].to_vec(), y[..n].to_vec());
        let actions = prop::collection::vec(0usize..3, n - 1)
            .prop_map(|v| v.into_iter().map(|k| TradeAction::ALL[k]).collect::<Vec<_>>());
        (Just(x), Just(y), actions)
    })
}

proptest! {
    #[test]
    fn net_value_is_cash_plus_position((x, y, actions) in paths_and_actions(), cost in 0.0f64..0.01) {
        let t = table(&x, &y);
        let (mut env, obs) = TradingEnv::reset(pair(), &t, &t, 0..x.len(), cfg(cost)).unwrap();
        prop_assert_eq!(obs.account.net_value, 1.0);
        for a in &actions {
            let out = env.step(*a).unwrap();
            let acc = out.observation.account;
            prop_assert!((acc.net_value - acc.cash - acc.position_value).abs() < 1e-12);
            if acc.prev_action == TradeAction::Clear {
                prop_assert_eq!(acc.position_value, 0.0);
            }
            if out.done {
                break;
            }
        }
        prop_assert!(env.is_done());
    }

    #[test]
    fn rewards_match_oracle_on_random_paths((x, y, actions) in paths_and_actions(), cost in 0.0f64..0.01) {
        let t = table(&x, &y);
        let rows = replay(pair(), &t, &t, 0..x.len(), cfg(cost), &actions).unwrap();
        let (expected, n) = oracle(&x, &y, &actions, cost);
        for (row, r) in rows.iter().zip(&expected) {
            prop_assert!((row.reward - r).abs() < 1e-12);
        }
        prop_assert!((rows.last().unwrap().net_value - n).abs() < 1e-12);
    }

    #[test]
    fn scaling_both_legs_is_neutral((x, y, actions) in paths_and_actions(), k in 0.01f64..100.0) {
        let base = table(&x, &y);
        let mut scaled = base.clone();
        scaled.scale_prices(0, k);
        scaled.scale_prices(1, k);
        let a = replay(pair(), &base, &base, 0..x.len(), cfg(0.001), &actions).unwrap();
        let b = replay(pair(), &scaled, &scaled, 0..x.len(), cfg(0.001), &actions).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            prop_assert!((ra.reward - rb.reward).abs() < 1e-12);
        }
    }
}
