//! Deterministic pair-trading environment.
//!
//! Each step realizes `R_t = a_{t−1}(r_{X,t} − r_{Y,t}) − c|a_t − a_{t−1}|`:
//! the position held over the last day earns the hedged simple return of the
//! two legs, and changing position costs `c` per unit of action change. The
//! account compounds `N_t = N_{t−1}(1 + R_t)`. On the final day of the period
//! the book is cleared whatever action is submitted.

use std::io::Write;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{PriceScale, PriceTable};
use crate::error::{Error, Result};

/// Position on the spread: long X / short Y, flat, or short X / long Y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TradeAction {
    #[serde(rename = "L")]
    Long,
    #[serde(rename = "C")]
    Clear,
    #[serde(rename = "S")]
    Short,
}

impl TradeAction {
    /// Order used by probability vectors and the embedding table.
    pub const ALL: [TradeAction; 3] = [TradeAction::Long, TradeAction::Clear, TradeAction::Short];

    pub fn value(self) -> i8 {
        match self {
            TradeAction::Long => 1,
            TradeAction::Clear => 0,
            TradeAction::Short => -1,
        }
    }

    pub fn signed(self) -> f64 {
        f64::from(self.value())
    }

    pub fn index(self) -> usize {
        match self {
            TradeAction::Long => 0,
            TradeAction::Clear => 1,
            TradeAction::Short => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            TradeAction::Long => "L",
            TradeAction::Clear => "C",
            TradeAction::Short => "S",
        }
    }

    /// Same exposure with the legs exchanged.
    pub fn mirrored(self) -> Self {
        match self {
            TradeAction::Long => TradeAction::Short,
            TradeAction::Clear => TradeAction::Clear,
            TradeAction::Short => TradeAction::Long,
        }
    }
}

/// An unordered asset pair `i < j` and its position in the row-major
/// flattened strict upper triangle of an `n × n` matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairOption {
    pub i: usize,
    pub j: usize,
    pub flat_index: usize,
}

impl PairOption {
    pub fn count(n: usize) -> usize {
        n * n.saturating_sub(1) / 2
    }

    pub fn new(i: usize, j: usize, n: usize) -> Result<Self> {
        if !(i < j && j < n) {
            return Err(Error::Config(format!("invalid pair ({i}, {j}) for {n} assets")));
        }
        // rows 0..i contribute (n−1) + (n−2) + … + (n−i) entries
        let flat_index = i * (2 * n - i - 1) / 2 + (j - i - 1);
        Ok(Self { i, j, flat_index })
    }

    pub fn from_flat(k: usize, n: usize) -> Result<Self> {
        if k >= Self::count(n) {
            return Err(Error::Config(format!("option {k} out of range for {n} assets")));
        }
        let mut i = 0;
        let mut start = 0;
        loop {
            let row_len = n - i - 1;
            if k < start + row_len {
                return Ok(Self {
                    i,
                    j: i + 1 + (k - start),
                    flat_index: k,
                });
            }
            start += row_len;
            i += 1;
        }
    }

    /// Every pair, in flat-index order.
    pub fn all(n: usize) -> Vec<Self> {
        let mut out = Vec::with_capacity(Self::count(n));
        for i in 0..n {
            for j in i + 1..n {
                out.push(Self::new(i, j, n).expect("valid pair"));
            }
        }
        out
    }
}

/// Worker-side bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccountState {
    pub prev_action: TradeAction,
    pub cash: f64,
    pub position_value: f64,
    pub net_value: f64,
}

impl Default for AccountState {
    fn default() -> Self {
        Self {
            prev_action: TradeAction::Clear,
            cash: 1.0,
            position_value: 0.0,
            net_value: 1.0,
        }
    }
}

/// What the worker sees at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeObservation {
    /// Step index within the episode.
    pub step: usize,
    /// Absolute day index in the table.
    pub day: usize,
    pub account: AccountState,
    /// Normalized (open, close, volume) of leg X then leg Y.
    pub prices: [[f64; 3]; 2],
    /// Simple close-to-close returns of X and Y into this day (0 at step 0).
    pub returns: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriceField {
    Open,
    Close,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Cost per unit of |a_t − a_{t−1}|, as a fraction of notional.
    pub cost: f64,
    pub price_field: PriceField,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            cost: 0.001,
            price_field: PriceField::Close,
        }
    }
}

/// Result of one [`TradingEnv::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub observation: TradeObservation,
    pub reward: f64,
    pub done: bool,
    /// The action actually applied (C on the final day).
    pub applied: TradeAction,
}

/// One row of an exported trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: usize,
    pub action: TradeAction,
    pub r_x: f64,
    pub r_y: f64,
    pub reward: f64,
    pub net_value: f64,
    pub cash: f64,
    pub position_value: f64,
}

#[derive(Debug, Clone)]
pub struct TradingEnv<'a> {
    pair: PairOption,
    raw: &'a PriceTable,
    features: &'a PriceTable,
    period: Range<usize>,
    config: EnvConfig,
    step: usize,
    account: AccountState,
    done: bool,
    trajectory: Vec<TrajectoryRow>,
}

impl<'a> TradingEnv<'a> {
    /// Creates an environment and returns it with the step-0 observation.
    /// `raw` supplies returns, `features` (usually log-normalized) supplies
    /// observations; both must share the same axes.
    pub fn reset(
        pair: PairOption,
        raw: &'a PriceTable,
        features: &'a PriceTable,
        period: Range<usize>,
        config: EnvConfig,
    ) -> Result<(Self, TradeObservation)> {
        if period.len() < 2 {
            return Err(Error::Data(format!(
                "trading period needs at least 2 days, got {}",
                period.len()
            )));
        }
        if period.end > raw.n_days() || raw.n_days() != features.n_days() {
            return Err(Error::Data("period exceeds table length".into()));
        }
        if pair.j >= raw.n_assets() || raw.n_assets() != features.n_assets() {
            return Err(Error::Data("pair outside the table".into()));
        }
        if raw.scale() != PriceScale::Raw {
            return Err(Error::Data("returns need raw prices".into()));
        }
        if !(config.cost >= 0.0) {
            return Err(Error::Config("transaction cost must be non-negative".into()));
        }
        let env = Self {
            pair,
            raw,
            features,
            period,
            config,
            step: 0,
            account: AccountState::default(),
            done: false,
            trajectory: Vec::new(),
        };
        let obs = env.observation((0.0, 0.0));
        Ok((env, obs))
    }

    pub fn pair(&self) -> PairOption {
        self.pair
    }

    pub fn len(&self) -> usize {
        self.period.len()
    }

    pub fn is_empty(&self) -> bool {
        self.period.is_empty()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn account(&self) -> AccountState {
        self.account
    }

    pub fn trajectory(&self) -> &[TrajectoryRow] {
        &self.trajectory
    }

    fn price(&self, asset: usize, day: usize) -> f64 {
        match self.config.price_field {
            PriceField::Close => self.raw.close(asset)[day],
            PriceField::Open => self.raw.open(asset)[day],
        }
    }

    fn observation(&self, returns: (f64, f64)) -> TradeObservation {
        let day = self.period.start + self.step;
        TradeObservation {
            step: self.step,
            day,
            account: self.account,
            prices: [
                self.features.features(self.pair.i, day),
                self.features.features(self.pair.j, day),
            ],
            returns,
        }
    }

    /// Simple returns of both legs from step − 1 to step.
    pub fn leg_returns(&self, step: usize) -> (f64, f64) {
        if step == 0 {
            return (0.0, 0.0);
        }
        let d = self.period.start + step;
        let r = |a: usize| self.price(a, d) / self.price(a, d - 1) - 1.0;
        (r(self.pair.i), r(self.pair.j))
    }

    /// Advances one day. The submitted action is the position held from
    /// this step to the next; the reward pairs the incoming position's hedged
    /// return with the cost of the change.
    pub fn step(&mut self, action: TradeAction) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Data("step after episode end".into()));
        }
        self.step += 1;
        let last = self.step == self.period.len() - 1;
        let (r_x, r_y) = self.leg_returns(self.step);
        let prev = self.account.prev_action;
        // forced clear on the final day
        let applied = if last { TradeAction::Clear } else { action };
        let hedged = prev.signed() * (r_x - r_y);
        let reward = hedged - self.config.cost * (applied.signed() - prev.signed()).abs();
        self.apply(reward, applied);
        self.trajectory.push(TrajectoryRow {
            step: self.step,
            action: applied,
            r_x,
            r_y,
            reward,
            net_value: self.account.net_value,
            cash: self.account.cash,
            position_value: self.account.position_value,
        });
        self.done = last;
        Ok(StepOutcome {
            observation: self.observation((r_x, r_y)),
            reward,
            done: self.done,
            applied,
        })
    }

    fn apply(&mut self, reward: f64, action: TradeAction) {
        let acc = &mut self.account;
        acc.net_value *= 1.0 + reward;
        if action != acc.prev_action || action == TradeAction::Clear {
            acc.cash = acc.net_value;
            acc.position_value = 0.0;
        } else {
            acc.position_value = acc.net_value - acc.cash;
        }
        acc.prev_action = action;
    }
}

/// Per-step rewards of an action sequence, via the environment.
pub fn replay(
    pair: PairOption,
    raw: &PriceTable,
    features: &PriceTable,
    period: Range<usize>,
    config: EnvConfig,
    actions: &[TradeAction],
) -> Result<Vec<TrajectoryRow>> {
    let (mut env, _) = TradingEnv::reset(pair, raw, features, period, config)?;
    for a in actions {
        if env.is_done() {
            break;
        }
        env.step(*a)?;
    }
    while !env.is_done() {
        env.step(TradeAction::Clear)?;
    }
    Ok(env.trajectory)
}

/// Compounded profit `∏(1 + R_t) − 1` and the raw product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeReturn {
    pub profit: f64,
    pub product: f64,
    pub bankrupt: bool,
}

/// Compounds per-step rewards; any `R_t ≤ −1` saturates the profit at −1.
pub fn episode_return(rewards: &[f64]) -> EpisodeReturn {
    if rewards.iter().any(|r| *r <= -1.0) {
        return EpisodeReturn {
            profit: -1.0,
            product: 0.0,
            bankrupt: true,
        };
    }
    let product: f64 = rewards.iter().map(|r| 1.0 + r).product();
    EpisodeReturn {
        profit: product - 1.0,
        product,
        bankrupt: false,
    }
}

/// Writes `step,action,r_x,r_y,reward,net_value,cash,position_value`.
pub fn write_trajectory(path: &Path, rows: &[TrajectoryRow]) -> Result<()> {
    let mut out = String::from("step,action,r_x,r_y,reward,net_value,cash,position_value\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.step,
            r.action.label(),
            r.r_x,
            r.r_y,
            r.reward,
            r.net_value,
            r.cash,
            r.position_value
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::log_normalize;
    use chrono::NaiveDate;

    /// Two legs whose returns on day 1 are exactly `rx` and `ry`.
    fn fixture(rx: f64, ry: f64) -> PriceTable {
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let dates = (0..3).map(|k| d0 + chrono::Duration::days(k)).collect();
        let cx = [1.0, 1.0 + rx, 1.0 + rx];
        let cy = [1.0, 1.0 + ry, 1.0 + ry];
        let close: Vec<f64> = cx.iter().chain(&cy).copied().collect();
        PriceTable::new(
            vec!["X".into(), "Y".into()],
            dates,
            close.clone(),
            close,
            vec![1.0; 6],
        )
        .unwrap()
    }

    fn env_with_prev<'a>(
        raw: &'a PriceTable,
        feat: &'a PriceTable,
        prev: TradeAction,
    ) -> TradingEnv<'a> {
        let pair = PairOption::new(0, 1, 2).unwrap();
        let (mut env, _) = TradingEnv::reset(pair, raw, feat, 0..3, EnvConfig::default()).unwrap();
        env.account.prev_action = prev;
        env
    }

    #[test]
    fn reset_initializes_account() {
        let raw = fixture(0.0, 0.0);
        let feat = log_normalize(&raw, true);
        let pair = PairOption::new(0, 1, 2).unwrap();
        let (_, o1) = TradingEnv::reset(pair, &raw, &feat, 0..3, EnvConfig::default()).unwrap();
        let (_, o2) = TradingEnv::reset(pair, &raw, &feat, 0..3, EnvConfig::default()).unwrap();
        assert_eq!(o1, o2);
        assert_eq!(o1.account.net_value, 1.0);
        assert_eq!(o1.account.position_value, 0.0);
        assert_eq!(o1.account.prev_action, TradeAction::Clear);
        assert!(TradingEnv::reset(pair, &raw, &feat, 0..1, EnvConfig::default()).is_err());
    }

    #[test]
    fn reward_examples() {
        let raw = fixture(0.02, 0.005);
        let feat = log_normalize(&raw, true);
        let mut env = env_with_prev(&raw, &feat, TradeAction::Long);
        let r = env.step(TradeAction::Long).unwrap().reward;
        assert!((r - 0.015).abs() < 1e-12);

        let mut env = env_with_prev(&raw, &feat, TradeAction::Clear);
        let r = env.step(TradeAction::Long).unwrap().reward;
        assert!((r + 0.001).abs() < 1e-12);

        let raw = fixture(0.0, 0.01);
        let feat = log_normalize(&raw, true);
        let mut env = env_with_prev(&raw, &feat, TradeAction::Short);
        let r = env.step(TradeAction::Long).unwrap().reward;
        assert!((r - 0.008).abs() < 1e-12);
    }

    #[test]
    fn all_clear_is_flat() {
        let raw = fixture(0.03, -0.02);
        let feat = log_normalize(&raw, true);
        let rows = replay(
            PairOption::new(0, 1, 2).unwrap(),
            &raw,
            &feat,
            0..3,
            EnvConfig::default(),
            &[TradeAction::Clear, TradeAction::Clear],
        )
        .unwrap();
        assert!(rows.iter().all(|r| r.reward == 0.0));
        assert_eq!(rows.last().unwrap().net_value, 1.0);
    }

    #[test]
    fn step_after_done_errors() {
        let raw = fixture(0.0, 0.0);
        let feat = log_normalize(&raw, true);
        let pair = PairOption::new(0, 1, 2).unwrap();
        let (mut env, _) = TradingEnv::reset(pair, &raw, &feat, 0..2, EnvConfig::default()).unwrap();
        let out = env.step(TradeAction::Long).unwrap();
        assert!(out.done);
        assert_eq!(out.applied, TradeAction::Clear);
        assert!(env.step(TradeAction::Clear).is_err());
    }

    #[test]
    fn episode_return_examples() {
        assert_eq!(episode_return(&[0.0, 0.0, 0.0]).profit, 0.0);
        assert!((episode_return(&[0.10, -0.10]).profit + 0.01).abs() < 1e-12);
        assert!((episode_return(&[0.01, 0.01]).profit - 0.0201).abs() < 1e-12);
        let b = episode_return(&[0.5, -1.0]);
        assert!(b.bankrupt);
        assert_eq!(b.profit, -1.0);
    }

    #[test]
    fn triu_index_matches_enumeration() {
        for n in 2..12 {
            for (k, p) in PairOption::all(n).iter().enumerate() {
                assert_eq!(p.flat_index, k);
                assert_eq!(PairOption::from_flat(k, n).unwrap(), *p);
            }
        }
    }
}
