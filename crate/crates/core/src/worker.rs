//! Low-level A2C trading agent.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::encoder::{encode_trading_history, AttentionKeys, EncoderParams, WORKER_RAW_FEATURES};
use crate::env::{TradeAction, TradeObservation};
use crate::error::{Error, Result};
use crate::numerics::{softmax_slice, Graph, ParamId, ParameterStore, RmsProp, Tensor, Var};
use crate::scalar::Scalar;

/// Exploration mode for action and option selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActMode {
    Sample,
    Greedy,
}

/// Shape of a [`WorkerNet`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkerArch {
    pub d_h: usize,
    pub d_a: usize,
    /// Steps of history fed to the encoder; `None` uses the whole prefix.
    pub lookback: Option<usize>,
    pub keys: AttentionKeys,
    /// Give the critic its own encoder instead of sharing the actor's.
    pub separate_critic: bool,
}

impl Default for WorkerArch {
    fn default() -> Self {
        Self {
            d_h: 16,
            d_a: 8,
            lookback: Some(8),
            keys: AttentionKeys::IncludeSelf,
            separate_critic: false,
        }
    }
}

/// Policy over {L, C, S} plus a state-value critic.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerNet<T> {
    pub store: ParameterStore<T>,
    pub arch: WorkerArch,
    pub actor: EncoderParams,
    pub critic: Option<EncoderParams>,
    /// [3 × d_h] and [3].
    pub w_pi: ParamId,
    pub b_pi: ParamId,
    /// [1 × d_h] and [1].
    pub w_v: ParamId,
    pub b_v: ParamId,
}

/// Forward quantities at one step.
#[derive(Debug, Clone)]
pub struct WorkerHeads<T> {
    pub logits: Var,
    pub value: Var,
    /// Attention of the query step over its keys (actor encoder).
    pub attention: Vec<T>,
}

/// Plain-number view of [`WorkerHeads`].
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerOutput<T> {
    /// Probabilities in L, C, S order.
    pub probs: [T; 3],
    pub value: T,
    pub attention: Vec<T>,
}

/// Per-update diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub advantage: f64,
    pub value: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
}

/// One online transition. The successor state is `history[..=t + 1]`.
#[derive(Debug, Clone, Copy)]
pub struct Transition<'a> {
    pub history: &'a [TradeObservation],
    pub t: usize,
    pub action: TradeAction,
    pub reward: f64,
    pub done: bool,
}

/// Discount, entropy weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct A2cCoefficients {
    pub gamma: f64,
    pub beta: f64,
}

impl<T: Scalar> WorkerNet<T> {
    pub fn new<R: Rng>(arch: WorkerArch, rng: &mut R) -> Result<Self> {
        if arch.d_a == 0 {
            return Err(Error::Config("d_a must be positive".into()));
        }
        let mut store = ParameterStore::new();
        let actor = EncoderParams::init(
            &mut store,
            "worker.actor",
            WORKER_RAW_FEATURES,
            arch.d_h,
            Some(arch.d_a),
            arch.keys,
            rng,
        )?;
        let critic = if arch.separate_critic {
            Some(EncoderParams::init(
                &mut store,
                "worker.critic",
                WORKER_RAW_FEATURES,
                arch.d_h,
                Some(arch.d_a),
                arch.keys,
                rng,
            )?)
        } else {
            None
        };
        let w_pi = store.insert_uniform("worker.w_pi", 3, arch.d_h, rng)?;
        let b_pi = store.insert("worker.b_pi", Tensor::zeros(&[3]))?;
        let w_v = store.insert_uniform("worker.w_v", 1, arch.d_h, rng)?;
        let b_v = store.insert("worker.b_v", Tensor::zeros(&[1]))?;
        Ok(Self {
            store,
            arch,
            actor,
            critic,
            w_pi,
            b_pi,
            w_v,
            b_v,
        })
    }

    /// Rebuilds a net around a loaded store; names must match those of
    /// [`WorkerNet::new`] with the same `arch`.
    pub fn from_store(store: ParameterStore<T>, arch: WorkerArch) -> Result<Self> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let template = Self::new(arch, &mut rng)?;
        for id in template.store.ids() {
            let name = template.store.name(id);
            let other = store
                .id(name)
                .ok_or_else(|| Error::Data(format!("snapshot lacks {name}")))?;
            if other != id || store.value(other).shape() != template.store.value(id).shape() {
                return Err(Error::Data(format!("snapshot entry {name} does not fit the worker")));
            }
        }
        if store.len() != template.store.len() {
            return Err(Error::Data("snapshot has extra worker entries".into()));
        }
        Ok(Self { store, ..template })
    }

    /// Records the policy logits and value at step `t` onto `graph`.
    pub fn forward(
        &self,
        graph: &mut Graph<T>,
        history: &[TradeObservation],
        t: usize,
    ) -> Result<WorkerHeads<T>> {
        let enc = self.actor.bind(graph, &self.store);
        let pooled = encode_trading_history(graph, &enc, history, t, self.arch.lookback)?;
        let w_pi = self.store.var(graph, self.w_pi);
        let b_pi = self.store.var(graph, self.b_pi);
        let z = graph.matvec(w_pi, pooled.output)?;
        let logits = graph.add(z, b_pi)?;
        let critic_state = match &self.critic {
            Some(c) => {
                let enc = c.bind(graph, &self.store);
                encode_trading_history(graph, &enc, history, t, self.arch.lookback)?.output
            }
            None => pooled.output,
        };
        let w_v = self.store.var(graph, self.w_v);
        let b_v = self.store.var(graph, self.b_v);
        let v = graph.matvec(w_v, critic_state)?;
        let value = graph.add(v, b_v)?;
        Ok(WorkerHeads {
            logits,
            value,
            attention: pooled.weights,
        })
    }

    /// Action probabilities, value and attention at step `t`, without
    /// keeping a tape.
    pub fn evaluate(&self, history: &[TradeObservation], t: usize) -> Result<WorkerOutput<T>> {
        let mut graph = Graph::new();
        let heads = self.forward(&mut graph, history, t)?;
        let probs = action_distribution(graph.value(heads.logits).data())?;
        Ok(WorkerOutput {
            probs,
            value: graph.scalar(heads.value),
            attention: heads.attention,
        })
    }

    /// Per-step A2C loss with a fixed bootstrap target
    /// `target = r + γ·V(s')·(1 − done)`:
    /// `−log π(a|s)·A − β·H(π) + ½A²` with `A = target − V(s)` held constant
    /// in the actor term.
    pub fn a2c_loss(
        &self,
        graph: &mut Graph<T>,
        history: &[TradeObservation],
        t: usize,
        action: TradeAction,
        target: T,
        beta: T,
    ) -> Result<(Var, UpdateStats)> {
        let heads = self.forward(graph, history, t)?;
        a2c_objective(graph, heads.logits, heads.value, action.index(), target, beta)
    }

    /// `V(s)` at step `t`, as a plain number.
    pub fn value(&self, history: &[TradeObservation], t: usize) -> Result<T> {
        Ok(self.evaluate(history, t)?.value)
    }
}

/// Shared actor-critic objective over a categorical head.
pub(crate) fn a2c_objective<T: Scalar>(
    graph: &mut Graph<T>,
    logits: Var,
    value: Var,
    action: usize,
    target: T,
    beta: T,
) -> Result<(Var, UpdateStats)> {
    let v = graph.scalar(value);
    let advantage = target - v;
    let log_p = graph.log_softmax(logits)?;
    let log_pa = graph.gather(log_p, vec![action])?;
    let actor = graph.scale(log_pa, -advantage)?;
    let target_var = graph.input_vec(vec![target])?;
    let diff = graph.sub(target_var, value)?;
    let sq = graph.mul(diff, diff)?;
    let critic = graph.scale(sq, T::lit(0.5))?;
    let p = graph.softmax(logits)?;
    let plogp = graph.dot(p, log_p)?;
    // −β·H = β·Σ p log p
    let ent = graph.scale(plogp, beta)?;
    let ac = graph.add(actor, critic)?;
    let total = graph.add(ac, ent)?;
    let loss = graph.sum(total)?;
    let stats = UpdateStats {
        advantage: advantage.as_f64(),
        value: v.as_f64(),
        actor_loss: graph.scalar(actor).as_f64(),
        critic_loss: graph.scalar(critic).as_f64(),
        entropy: -graph.scalar(plogp).as_f64(),
    };
    if !graph.scalar(loss).is_finite() {
        return Err(Error::Numeric("non-finite A2C loss".into()));
    }
    Ok((loss, stats))
}

/// `softmax(logits)` in L, C, S order.
pub fn action_distribution<T: Scalar>(logits: &[T]) -> Result<[T; 3]> {
    if logits.len() != 3 {
        return Err(Error::Shape(format!("expected 3 logits, got {}", logits.len())));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite policy logits".into()));
    }
    let p = softmax_slice(logits)?;
    Ok([p[0], p[1], p[2]])
}

/// Draws or picks an action. Greedy ties go to C, then L, then S.
pub fn act<T: Scalar, R: Rng>(probs: &[T; 3], mode: ActMode, rng: &mut R) -> TradeAction {
    match mode {
        ActMode::Greedy => {
            let order = [TradeAction::Clear, TradeAction::Long, TradeAction::Short];
            let mut best = order[0];
            for a in &order[1..] {
                if probs[a.index()] > probs[best.index()] {
                    best = *a;
                }
            }
            best
        }
        ActMode::Sample => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut last = TradeAction::Long;
            for a in TradeAction::ALL {
                let p = probs[a.index()].as_f64();
                if p > 0.0 {
                    last = a;
                }
                acc += p;
                if u < acc {
                    return a;
                }
            }
            last
        }
    }
}

/// One online A2C step on `net` with a stop-gradient target.
pub fn worker_update<T: Scalar>(
    net: &mut WorkerNet<T>,
    opt: &mut RmsProp<T>,
    tr: Transition<'_>,
    coef: A2cCoefficients,
) -> Result<UpdateStats> {
    if !(0.0..=1.0).contains(&coef.gamma) {
        return Err(Error::Config(format!("gamma {} outside [0, 1]", coef.gamma)));
    }
    let bootstrap = if tr.done {
        T::zero()
    } else {
        net.value(tr.history, tr.t + 1)?
    };
    let target = T::lit(tr.reward) + T::lit(coef.gamma) * bootstrap;
    let mut graph = Graph::new();
    let (loss, stats) = net.a2c_loss(&mut graph, tr.history, tr.t, tr.action, target, T::lit(coef.beta))?;
    let grads = graph.backward(loss)?;
    net.store.zero_grads();
    net.store.accumulate(&graph, &grads);
    opt.step(&mut net.store);
    if !net.store.all_finite() {
        return Err(Error::Numeric("worker parameters became non-finite".into()));
    }
    Ok(stats)
}
