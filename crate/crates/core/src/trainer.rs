//! The nested manager/worker training loop, greedy evaluation, and the
//! threshold-trading ablation.

use std::ops::Range;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{threshold_trade, SpreadModel, ThresholdConfig};
use crate::data::{PeriodSplit, PriceTable};
use crate::env::{episode_return, EnvConfig, PairOption, TradeAction, TradeObservation, TradingEnv, TrajectoryRow};
use crate::error::{Error, Result};
use crate::manager::{extrinsic_reward, manager_update, select_option, ManagerArch};
use crate::metrics::{euclid_distance, MetricsConfig, MetricsReport};
use crate::numerics::{Graph, ParameterStore, RmsProp};
use crate::worker::{act, worker_update, A2cCoefficients, ActMode, Transition, UpdateStats, WorkerArch};
use crate::{ManagerNet, WorkerNet};

/// Where the manager's reward comes from during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtrinsicSource {
    /// Greedy run of the jointly trained worker.
    #[default]
    Worker,
    /// The fixed-threshold trader.
    Threshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Manager iterations (M).
    pub iterations: usize,
    /// Worker episodes per sampled option.
    pub inner_episodes: usize,
    pub lr_h: f64,
    pub lr_l: f64,
    pub gamma: f64,
    /// Worker entropy weight.
    pub beta: f64,
    /// Manager entropy weight.
    pub beta_h: f64,
    pub env: EnvConfig,
    pub worker: WorkerArch,
    pub manager: ManagerArch,
    pub seed: u64,
    pub manager_bootstrap: bool,
    pub reset_worker_per_option: bool,
    /// Keep a snapshot every this many iterations (and after the last).
    pub eval_cadence: usize,
    /// Length of each worker episode, drawn at a random offset inside the
    /// formation window; `None` runs the whole window.
    pub episode_len: Option<usize>,
    pub extrinsic: ExtrinsicSource,
    /// Trader behind [`ExtrinsicSource::Threshold`]; set by the caller.
    #[serde(skip)]
    pub threshold: ThresholdConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            inner_episodes: 4,
            lr_h: 3e-3,
            lr_l: 1e-3,
            gamma: 0.99,
            beta: 0.01,
            beta_h: 0.0,
            env: EnvConfig::default(),
            worker: WorkerArch::default(),
            manager: ManagerArch::default(),
            seed: 0,
            manager_bootstrap: false,
            reset_worker_per_option: false,
            eval_cadence: 20,
            episode_len: Some(1000),
            extrinsic: ExtrinsicSource::Worker,
            threshold: ThresholdConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.iterations == 0 || self.inner_episodes == 0 {
            return bad("iterations and inner_episodes must be at least 1".into());
        }
        if !(self.lr_h >= 0.0 && self.lr_l >= 0.0) {
            return bad("learning rates must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(self.beta >= 0.0 && self.beta_h >= 0.0) {
            return bad("entropy weights must be non-negative".into());
        }
        if self.eval_cadence == 0 {
            return bad("eval_cadence must be at least 1".into());
        }
        if matches!(self.episode_len, Some(n) if n < 2) {
            return bad("episode_len must be at least 2".into());
        }
        if !(self.env.cost >= 0.0) {
            return bad("transaction cost must be non-negative".into());
        }
        Ok(())
    }

    fn coefficients(&self) -> A2cCoefficients {
        A2cCoefficients {
            gamma: self.gamma,
            beta: self.beta,
        }
    }
}

/// Raw prices for returns and normalized features for observations, on the
/// same axes.
#[derive(Debug, Clone, Copy)]
pub struct MarketView<'a> {
    pub raw: &'a PriceTable,
    pub features: &'a PriceTable,
}

impl<'a> MarketView<'a> {
    pub fn new(raw: &'a PriceTable, features: &'a PriceTable) -> Result<Self> {
        if raw.n_assets() != features.n_assets() || raw.n_days() != features.n_days() {
            return Err(Error::Shape("raw and feature tables disagree in shape".into()));
        }
        Ok(Self { raw, features })
    }
}

/// The history window the manager encodes before `period`: as long as the
/// formation window, ending where `period` starts.
pub fn lookback_window(split: &PeriodSplit, period: &Range<usize>) -> Range<usize> {
    period.start.saturating_sub(split.formation.len())..period.start
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionRecord {
    pub i: usize,
    pub j: usize,
    pub flat_index: usize,
}

impl From<PairOption> for OptionRecord {
    fn from(o: PairOption) -> Self {
        Self {
            i: o.i,
            j: o.j,
            flat_index: o.flat_index,
        }
    }
}

/// One manager iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub option: OptionRecord,
    pub option_prob: f64,
    pub intrinsic_returns: Vec<f64>,
    pub extrinsic_reward: f64,
    pub bankrupt: bool,
    pub manager: UpdateStats,
    /// Means over every worker update of the iteration.
    pub worker: UpdateStats,
}

/// Append-only training record. Wall-clock times are kept apart from the
/// records so the JSON-lines file is reproducible.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<IterationRecord>,
    pub wall_clock_secs: Vec<f64>,
}

impl TrainLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).map_err(|e| Error::Data(e.to_string()))?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()?).map_err(|e| Error::io(path, e))
    }

    pub fn write_timings(&self, path: &Path) -> Result<()> {
        let mut out = String::from("iteration,seconds\n");
        for (k, s) in self.wall_clock_secs.iter().enumerate() {
            out.push_str(&format!("{k},{s:.6}\n"));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Both nets after iteration `iteration` (zero-based).
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub iteration: usize,
    pub manager: ManagerNet,
    pub worker: WorkerNet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SnapshotMeta {
    iteration: usize,
    manager_arch: ManagerArch,
    worker_arch: WorkerArch,
    #[serde(default)]
    extra: serde_json::Value,
}

impl Snapshot {
    /// One `.psnap` holding both stores; `extra` lands in the header.
    pub fn save(&self, path: &Path, extra: serde_json::Value) -> Result<()> {
        let mut merged = ParameterStore::new();
        for store in [&self.manager.store, &self.worker.store] {
            for id in store.ids() {
                merged.insert(store.name(id), store.value(id).clone())?;
            }
        }
        let meta = SnapshotMeta {
            iteration: self.iteration,
            manager_arch: self.manager.arch,
            worker_arch: self.worker.arch,
            extra,
        };
        merged.save(path, serde_json::to_value(meta).map_err(|e| Error::Data(e.to_string()))?)
    }

    /// Reads a snapshot written by [`Snapshot::save`] with its `extra` field.
    pub fn load(path: &Path) -> Result<(Self, serde_json::Value)> {
        let (merged, meta) = ParameterStore::<f64>::load(path)?;
        let meta: SnapshotMeta =
            serde_json::from_value(meta).map_err(|e| Error::Data(format!("bad snapshot header: {e}")))?;
        let mut m = ParameterStore::new();
        let mut w = ParameterStore::new();
        for id in merged.ids() {
            let name = merged.name(id);
            let dst = if name.starts_with("manager.") { &mut m } else { &mut w };
            dst.insert(name, merged.value(id).clone())?;
        }
        Ok((
            Self {
                iteration: meta.iteration,
                manager: ManagerNet::from_store(m, meta.manager_arch)?,
                worker: WorkerNet::from_store(w, meta.worker_arch)?,
            },
            meta.extra,
        ))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub manager: ManagerNet,
    pub worker: WorkerNet,
    pub log: TrainLog,
    pub snapshots: Vec<Snapshot>,
}

/// Result of driving the worker through one period.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    /// Actions as submitted, one per environment step.
    pub actions: Vec<TradeAction>,
    pub trajectory: Vec<TrajectoryRow>,
    pub rewards: Vec<f64>,
    pub updates: Vec<UpdateStats>,
    /// Attention of the final decision over its keys.
    pub last_attention: Vec<f64>,
}

/// Runs `worker` over `period` on `pair`. With `learn` set, every acting
/// step is followed by an A2C update on the reward that action realizes:
/// its cost now plus the hedged return it earns over the next day (and, for
/// the last acting step, the forced closing cost).
#[allow(clippy::too_many_arguments)]
pub fn run_worker_episode<R: Rng>(
    worker: &mut WorkerNet,
    mut learn: Option<(&mut RmsProp<f64>, A2cCoefficients)>,
    market: MarketView<'_>,
    pair: PairOption,
    period: Range<usize>,
    env_cfg: EnvConfig,
    mode: ActMode,
    rng: &mut R,
) -> Result<EpisodeOutcome> {
    let len = period.len();
    let (mut env, obs0) = TradingEnv::reset(pair, market.raw, market.features, period, env_cfg)?;
    let mut history: Vec<TradeObservation> = Vec::with_capacity(len);
    history.push(obs0);
    let mut actions = Vec::with_capacity(len - 1);
    let mut updates = Vec::new();
    let mut last_attention = Vec::new();
    for k in 1..len {
        let t = k - 1;
        let action = if k == len - 1 {
            TradeAction::Clear
        } else {
            let out = worker.evaluate(&history, t)?;
            last_attention = out.attention;
            act(&out.probs, mode, rng)
        };
        let prev = env.account().prev_action;
        let step = env.step(action)?;
        history.push(step.observation);
        actions.push(action);
        if let Some((opt, coef)) = learn.as_mut() {
            if k + 1 < len {
                let (rx, ry) = env.leg_returns(k + 1);
                let done = k + 2 == len;
                let mut reward = action.signed() * (rx - ry)
                    - env_cfg.cost * (action.signed() - prev.signed()).abs();
                if done {
                    reward -= env_cfg.cost * action.signed().abs();
                }
                let tr = Transition {
                    history: &history,
                    t,
                    action,
                    reward,
                    done,
                };
                updates.push(worker_update(worker, opt, tr, *coef)?);
            }
        }
    }
    let trajectory = env.trajectory().to_vec();
    Ok(EpisodeOutcome {
        actions,
        rewards: trajectory.iter().map(|r| r.reward).collect(),
        trajectory,
        updates,
        last_attention,
    })
}

fn mean_stats(all: &[UpdateStats]) -> UpdateStats {
    if all.is_empty() {
        return UpdateStats::default();
    }
    let n = all.len() as f64;
    let mut m = UpdateStats::default();
    for s in all {
        m.advantage += s.advantage / n;
        m.value += s.value / n;
        m.actor_loss += s.actor_loss / n;
        m.critic_loss += s.critic_loss / n;
        m.entropy += s.entropy / n;
    }
    m
}

fn episode_window<R: Rng>(formation: &Range<usize>, len: Option<usize>, rng: &mut R) -> Range<usize> {
    match len {
        Some(l) if l < formation.len() => {
            let start = rng.random_range(formation.start..=formation.end - l);
            start..start + l
        }
        _ => formation.clone(),
    }
}

/// Manager reward for `option` on the trading window: compounded profit of
/// the greedy worker (or the threshold trader).
pub fn trading_reward(
    worker: &mut WorkerNet,
    market: MarketView<'_>,
    split: &PeriodSplit,
    option: PairOption,
    cfg: &TrainConfig,
) -> Result<(Vec<f64>, crate::env::EpisodeReturn)> {
    let rewards = match cfg.extrinsic {
        ExtrinsicSource::Worker => {
            // greedy evaluation draws nothing from the RNG
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            run_worker_episode(
                worker,
                None,
                market,
                option,
                split.trading.clone(),
                cfg.env,
                ActMode::Greedy,
                &mut rng,
            )?
            .rewards
        }
        ExtrinsicSource::Threshold => {
            let model = SpreadModel::fit(cfg.threshold.spread, market.raw, option, split.formation.clone())?;
            threshold_trade(
                option,
                &model,
                market.raw,
                market.features,
                split.trading.clone(),
                &cfg.threshold,
                cfg.env,
            )?
            .rewards
        }
    };
    let ret = extrinsic_reward(&rewards);
    Ok((rewards, ret))
}

/// Nested training: sample a pair, train the worker on formation-window
/// episodes of that pair, score the greedy worker on the trading window,
/// update the manager with that score.
pub fn train(market: MarketView<'_>, split: &PeriodSplit, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if split.trading.end > market.raw.n_days() {
        return Err(Error::Data(format!(
            "training needs {} days, table has {}",
            split.trading.end,
            market.raw.n_days()
        )));
    }
    let n = market.raw.n_assets();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut manager = ManagerNet::new(cfg.manager, &mut rng)?;
    let mut worker = WorkerNet::new(cfg.worker, &mut rng)?;
    let mut opt_h = RmsProp::new(cfg.lr_h);
    let mut opt_l = RmsProp::new(cfg.lr_l);
    let mut log = TrainLog::default();
    let mut snapshots = Vec::new();
    let coef = cfg.coefficients();
    let successor = if cfg.manager_bootstrap {
        Some(split.trading.end.saturating_sub(split.formation.len())..split.trading.end)
    } else {
        None
    };

    for it in 0..cfg.iterations {
        let started = Instant::now();
        let mut graph = Graph::new();
        let heads = manager.forward(&mut graph, market.features, split.formation.clone())?;
        let logits = graph.value(heads.logits).data().to_vec();
        let option = select_option(&logits, n, ActMode::Sample, &mut rng)?;
        let option_prob = crate::numerics::softmax_slice(&logits)?[option.flat_index];

        if cfg.reset_worker_per_option && it > 0 {
            worker = WorkerNet::new(cfg.worker, &mut rng)?;
            opt_l = RmsProp::new(cfg.lr_l);
        }
        let mut intrinsic = Vec::new();
        let mut updates = Vec::new();
        if cfg.extrinsic == ExtrinsicSource::Worker {
            for _ in 0..cfg.inner_episodes {
                let window = episode_window(&split.formation, cfg.episode_len, &mut rng);
                let ep = run_worker_episode(
                    &mut worker,
                    Some((&mut opt_l, coef)),
                    market,
                    option,
                    window,
                    cfg.env,
                    ActMode::Sample,
                    &mut rng,
                )?;
                intrinsic.push(episode_return(&ep.rewards).profit);
                updates.extend(ep.updates);
            }
        }

        let (_, ret) = trading_reward(&mut worker, market, split, option, cfg)?;
        let mut target = ret.profit;
        if let Some(next) = &successor {
            let (_, v) = manager.option_distribution(market.features, next.clone())?;
            target += cfg.gamma * v;
        }
        let mstats = manager_update(&mut manager, &mut opt_h, &mut graph, &heads, option, target, cfg.beta_h)?;

        log.records.push(IterationRecord {
            iteration: it,
            option: option.into(),
            option_prob,
            intrinsic_returns: intrinsic,
            extrinsic_reward: ret.profit,
            bankrupt: ret.bankrupt,
            manager: mstats,
            worker: mean_stats(&updates),
        });
        log.wall_clock_secs.push(started.elapsed().as_secs_f64());
        if (it + 1) % cfg.eval_cadence == 0 || it + 1 == cfg.iterations {
            snapshots.push(Snapshot {
                iteration: it,
                manager: manager.clone(),
                worker: worker.clone(),
            });
        }
        if (it + 1) % 10 == 0 {
            log::info!(
                "iteration {}: pair ({}, {}) p={:.3} R^h={:+.4}",
                it + 1,
                option.i,
                option.j,
                option_prob,
                ret.profit
            );
        }
    }
    Ok(TrainOutcome {
        manager,
        worker,
        log,
        snapshots,
    })
}

/// Trains only the worker, on a fixed pair, for the same number of episodes
/// the joint loop would run.
pub fn train_worker_on_pair(
    market: MarketView<'_>,
    split: &PeriodSplit,
    pair: PairOption,
    cfg: &TrainConfig,
) -> Result<(WorkerNet, Vec<f64>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worker = WorkerNet::new(cfg.worker, &mut rng)?;
    let mut opt = RmsProp::new(cfg.lr_l);
    let mut returns = Vec::new();
    for _ in 0..cfg.iterations * cfg.inner_episodes {
        let window = episode_window(&split.formation, cfg.episode_len, &mut rng);
        let ep = run_worker_episode(
            &mut worker,
            Some((&mut opt, cfg.coefficients())),
            market,
            pair,
            window,
            cfg.env,
            ActMode::Sample,
            &mut rng,
        )?;
        returns.push(episode_return(&ep.rewards).profit);
    }
    Ok((worker, returns))
}

/// Greedy behavior of a method over one period.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub pair: PairOption,
    /// Manager probability of `pair` (1 for fixed selections).
    pub option_prob: f64,
    pub actions: Vec<TradeAction>,
    pub rewards: Vec<f64>,
    pub trajectory: Vec<TrajectoryRow>,
    pub profit: f64,
    pub metrics: MetricsReport,
}

impl EvaluationReport {
    fn build(
        market: MarketView<'_>,
        history: Range<usize>,
        pair: PairOption,
        option_prob: f64,
        actions: Vec<TradeAction>,
        trajectory: Vec<TrajectoryRow>,
        mcfg: &MetricsConfig,
    ) -> Result<Self> {
        let rewards: Vec<f64> = trajectory.iter().map(|r| r.reward).collect();
        let ed = euclid_distance(market.raw, pair, history, mcfg.distance)?;
        let metrics = MetricsReport::compute(&rewards, ed, mcfg)?;
        Ok(Self {
            pair,
            option_prob,
            actions,
            profit: episode_return(&rewards).profit,
            rewards,
            trajectory,
            metrics,
        })
    }
}

/// Greedy option of `manager` on the formation window of `formation_features`,
/// with its probability.
pub fn greedy_option(
    manager: &ManagerNet,
    formation_features: &PriceTable,
    split: &PeriodSplit,
) -> Result<(PairOption, f64)> {
    let (probs, _) = manager.option_distribution(formation_features, split.formation.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let pair = select_option(&log_probs(&probs), formation_features.n_assets(), ActMode::Greedy, &mut rng)?;
    Ok((pair, probs[pair.flat_index]))
}

/// Greedy option from the formation window, then greedy trading over
/// `period`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    manager: &ManagerNet,
    worker: &WorkerNet,
    formation_features: &PriceTable,
    market: MarketView<'_>,
    split: &PeriodSplit,
    period: Range<usize>,
    cfg: &TrainConfig,
    mcfg: &MetricsConfig,
) -> Result<EvaluationReport> {
    let (pair, prob) = greedy_option(manager, formation_features, split)?;
    evaluate_worker_on_pair(worker, market, split, pair, prob, period, cfg, mcfg)
}

/// Greedy trading of a fixed pair.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_worker_on_pair(
    worker: &WorkerNet,
    market: MarketView<'_>,
    split: &PeriodSplit,
    pair: PairOption,
    option_prob: f64,
    period: Range<usize>,
    cfg: &TrainConfig,
    mcfg: &MetricsConfig,
) -> Result<EvaluationReport> {
    let history = lookback_window(split, &period);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut w = worker.clone();
    let ep = run_worker_episode(&mut w, None, market, pair, period, cfg.env, ActMode::Greedy, &mut rng)?;
    EvaluationReport::build(market, history, pair, option_prob, ep.actions, ep.trajectory, mcfg)
}

/// Greedy manager pair, traded by the threshold rule with a spread fitted on
/// the window before `period`.
#[allow(clippy::too_many_arguments)]
pub fn run_ablation_wo_tr(
    manager: &ManagerNet,
    formation_features: &PriceTable,
    market: MarketView<'_>,
    split: &PeriodSplit,
    period: Range<usize>,
    threshold: &ThresholdConfig,
    env_cfg: EnvConfig,
    mcfg: &MetricsConfig,
) -> Result<EvaluationReport> {
    let (pair, prob) = greedy_option(manager, formation_features, split)?;
    evaluate_threshold_on_pair(market, split, pair, prob, period, threshold, env_cfg, mcfg)
}

/// Threshold trading of a fixed pair.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_threshold_on_pair(
    market: MarketView<'_>,
    split: &PeriodSplit,
    pair: PairOption,
    option_prob: f64,
    period: Range<usize>,
    threshold: &ThresholdConfig,
    env_cfg: EnvConfig,
    mcfg: &MetricsConfig,
) -> Result<EvaluationReport> {
    let history = lookback_window(split, &period);
    let model = SpreadModel::fit(threshold.spread, market.raw, pair, history.clone())?;
    let out = threshold_trade(pair, &model, market.raw, market.features, period, threshold, env_cfg)?;
    let n_steps = out.trajectory.len();
    let mut actions = out.actions;
    actions.truncate(n_steps);
    EvaluationReport::build(market, history, pair, option_prob, actions, out.trajectory, mcfg)
}

/// Probabilities back to logits (up to a constant), for greedy selection.
fn log_probs(p: &[f64]) -> Vec<f64> {
    p.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).collect()
}

/// Writes the `train_log.jsonl` of an outcome and every snapshot as
/// `snapshot_<iteration>.psnap` into `dir`.
pub fn persist(outcome: &TrainOutcome, dir: &Path, extra: serde_json::Value) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    outcome.log.write_jsonl(&dir.join("train_log.jsonl"))?;
    for s in &outcome.snapshots {
        s.save(&dir.join(format!("snapshot_{:05}.psnap", s.iteration)), extra.clone())?;
    }
    outcome.log.write_timings(&dir.join("timings.csv"))
}
