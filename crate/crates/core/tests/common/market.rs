//! Hand-built price fixtures and direct evaluations of the environment and
//! the drawdown.

use chrono::NaiveDate;
use trials::data::PriceTable;
use trials::env::TradeAction;

pub const CLOSE_X: [f64; 5] = [10.0, 10.3, 10.1, 10.6, 10.45];
pub const CLOSE_Y: [f64; 5] = [20.0, 20.1, 20.5, 20.2, 20.9];

/// Two assets `X` and `Y` with opens equal to closes and unit volume.
pub fn pair_table(x: &[f64], y: &[f64]) -> PriceTable {
    let n = x.len();
    let dates = (0..n)
        .map(|d| NaiveDate::from_ymd_opt(2010, 3, 1).unwrap() + chrono::Duration::days(d as i64))
        .collect();
    let close: Vec<f64> = x.iter().chain(y).copied().collect();
    PriceTable::new(vec!["X".into(), "Y".into()], dates, close.clone(), close, vec![1.0; 2 * n]).unwrap()
}

/// Every action sequence of length `len`.
pub fn sequences(len: usize) -> Vec<Vec<TradeAction>> {
    (0..3usize.pow(len as u32))
        .map(|mut k| {
            (0..len)
                .map(|_| {
                    let a = TradeAction::ALL[k % 3];
                    k /= 3;
                    a
                })
                .collect()
        })
        .collect()
}

/// Direct evaluation of the hedged reward and the compounded net value,
/// with the position cleared on the final day.
pub fn reward_oracle(x: &[f64], y: &[f64], actions: &[TradeAction], c: f64) -> (Vec<f64>, f64) {
    let steps = x.len() - 1;
    let mut pos = vec![0.0; steps + 1];
    for t in 1..steps {
        pos[t] = actions[t - 1].value() as f64;
    }
    let mut rewards = Vec::new();
    let mut n = 1.0;
    for t in 1..=steps {
        let r = pos[t - 1] * ((x[t] / x[t - 1] - 1.0) - (y[t] / y[t - 1] - 1.0)) - c * (pos[t] - pos[t - 1]).abs();
        n *= 1.0 + r;
        rewards.push(r);
    }
    (rewards, n)
}

/// Every (peak, trough) pair of the wealth path, starting from wealth 1.
pub fn brute_force_mdd(returns: &[f64]) -> f64 {
    let mut wealth = vec![1.0];
    for r in returns {
        wealth.push(wealth.last().unwrap() * (1.0 + r));
    }
    let mut worst: f64 = 0.0;
    for i in 0..wealth.len() {
        for j in i..wealth.len() {
            worst = worst.min(wealth[j] / wealth[i] - 1.0);
        }
    }
    worst
}
