//! Bidirectional GRU plus temporal attention, turning observation windows
//! into latent states for both controllers.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::PriceTable;
use crate::env::TradeObservation;
use crate::error::{Error, Result};
use crate::numerics::{
    GruParams, GruVars, Graph, ParamId, ParameterStore, Tensor, Var, LAYER_NORM_EPS, LEAKY_SLOPE,
};
use crate::scalar::Scalar;

/// Which hidden states a query attends over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionKeys {
    /// Steps `0..=q`.
    #[default]
    IncludeSelf,
    /// Steps `0..q`; the first step attends to itself.
    Preceding,
}

/// Raw per-step feature width of the worker (account + two legs' prices).
pub const WORKER_RAW_FEATURES: usize = 3 + 6;
/// Per-step feature width of the manager (open, close, volume).
pub const MANAGER_FEATURES: usize = 3;

/// Handles of one encoder's weights inside a [`ParameterStore`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderParams {
    pub forward: GruParams,
    pub backward: GruParams,
    /// [d_h × 2·d_h] projection of the concatenated query and context.
    pub w_c: ParamId,
    pub ln_gain: ParamId,
    pub ln_bias: ParamId,
    /// [3 × d_a] previous-action embedding (worker variant only).
    pub action_embedding: Option<ParamId>,
    pub d_h: usize,
    pub keys: AttentionKeys,
}

impl EncoderParams {
    /// Registers a fresh encoder under `prefix`. `d_raw` is the width of the
    /// numeric features; with `d_a = Some(k)` a 3 × k action embedding is
    /// prepended to them.
    pub fn init<T: Scalar, R: Rng>(
        store: &mut ParameterStore<T>,
        prefix: &str,
        d_raw: usize,
        d_h: usize,
        d_a: Option<usize>,
        keys: AttentionKeys,
        rng: &mut R,
    ) -> Result<Self> {
        if d_h < 2 || !d_h.is_multiple_of(2) {
            return Err(Error::Config(format!("d_h must be even and >= 2, got {d_h}")));
        }
        let d_in = d_raw + d_a.unwrap_or(0);
        let half = d_h / 2;
        let forward = GruParams::init(store, &format!("{prefix}.gru_fwd"), d_in, half, rng)?;
        let backward = GruParams::init(store, &format!("{prefix}.gru_bwd"), d_in, half, rng)?;
        let w_c = store.insert_uniform(format!("{prefix}.w_c"), d_h, 2 * d_h, rng)?;
        let ln_gain = store.insert(format!("{prefix}.ln_gain"), Tensor::filled(&[d_h], T::one()))?;
        let ln_bias = store.insert(format!("{prefix}.ln_bias"), Tensor::zeros(&[d_h]))?;
        let action_embedding = match d_a {
            Some(k) => Some(store.insert_uniform(format!("{prefix}.action_embedding"), 3, k, rng)?),
            None => None,
        };
        Ok(Self {
            forward,
            backward,
            w_c,
            ln_gain,
            ln_bias,
            action_embedding,
            d_h,
            keys,
        })
    }

    pub fn d_in(&self) -> usize {
        self.forward.d_in
    }

    pub fn bind<T: Scalar>(&self, graph: &mut Graph<T>, store: &ParameterStore<T>) -> EncoderVars {
        EncoderVars {
            forward: self.forward.bind(graph, store),
            backward: self.backward.bind(graph, store),
            w_c: store.var(graph, self.w_c),
            ln_gain: store.var(graph, self.ln_gain),
            ln_bias: store.var(graph, self.ln_bias),
            action_embedding: self.action_embedding.map(|id| store.var(graph, id)),
            d_h: self.d_h,
            keys: self.keys,
        }
    }
}

/// [`EncoderParams`] bound to a graph.
#[derive(Debug, Clone, Copy)]
pub struct EncoderVars {
    pub forward: GruVars,
    pub backward: GruVars,
    pub w_c: Var,
    pub ln_gain: Var,
    pub ln_bias: Var,
    pub action_embedding: Option<Var>,
    pub d_h: usize,
    pub keys: AttentionKeys,
}

/// Concatenated forward/backward states, one per input step.
#[derive(Debug, Clone)]
pub struct HiddenSequence {
    pub states: Vec<Var>,
}

impl HiddenSequence {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Attention output plus the weights that produced it.
#[derive(Debug, Clone)]
pub struct Pooled<T> {
    pub output: Var,
    /// Key step indices, aligned with `weights`.
    pub keys: Range<usize>,
    pub weights: Vec<T>,
}

/// Forward GRU left to right from a zero state, backward GRU right to left
/// from a zero state, concatenated per step.
pub fn bi_gru_encode<T: Scalar>(
    graph: &mut Graph<T>,
    enc: &EncoderVars,
    window: &[Var],
) -> Result<HiddenSequence> {
    if window.is_empty() {
        return Err(Error::Shape("bi_gru_encode of an empty window".into()));
    }
    let half = enc.d_h / 2;
    let zero = graph.input(Tensor::zeros(&[half]))?;
    let mut fwd = Vec::with_capacity(window.len());
    let mut h = zero;
    for x in window {
        h = enc.forward.step(graph, *x, h)?;
        fwd.push(h);
    }
    let mut bwd = vec![zero; window.len()];
    let mut h = zero;
    for (k, x) in window.iter().enumerate().rev() {
        h = enc.backward.step(graph, *x, h)?;
        bwd[k] = h;
    }
    let states = fwd
        .into_iter()
        .zip(bwd)
        .map(|(f, b)| graph.concat(&[f, b]))
        .collect::<Result<Vec<_>>>()?;
    Ok(HiddenSequence { states })
}

/// Scaled dot-product attention of step `query` over its keys, then
/// `LayerNorm(LeakyRelu(W_c [h_q, c]))`.
pub fn attention_pool<T: Scalar>(
    graph: &mut Graph<T>,
    enc: &EncoderVars,
    hidden: &HiddenSequence,
    query: usize,
) -> Result<Pooled<T>> {
    if query >= hidden.len() {
        return Err(Error::Shape(format!(
            "query {query} outside a {}-step sequence",
            hidden.len()
        )));
    }
    let keys = match enc.keys {
        AttentionKeys::IncludeSelf => 0..query + 1,
        AttentionKeys::Preceding if query == 0 => 0..1,
        AttentionKeys::Preceding => 0..query,
    };
    let hq = hidden.states[query];
    let k_mat = graph.stack_rows(&hidden.states[keys.clone()])?;
    let scores = graph.matvec(k_mat, hq)?;
    let scores = graph.scale(scores, T::one() / T::lit(enc.d_h as f64).sqrt())?;
    let alpha = graph.softmax(scores)?;
    let context = graph.mat_t_vec(k_mat, alpha)?;
    let joined = graph.concat(&[hq, context])?;
    let projected = graph.matvec(enc.w_c, joined)?;
    let act = graph.leaky_relu(projected, T::lit(LEAKY_SLOPE))?;
    let output = graph.layer_norm(act, enc.ln_gain, enc.ln_bias, T::lit(LAYER_NORM_EPS))?;
    Ok(Pooled {
        output,
        keys,
        weights: graph.value(alpha).data().to_vec(),
    })
}

/// Manager state: one row per asset, each from a shared Bi-GRU over that
/// asset's (open, close, volume) sequence and attention with the final step
/// as query.
#[derive(Debug, Clone)]
pub struct ManagerEncoding<T> {
    /// [N × d_h].
    pub state: Var,
    pub rows: Vec<Var>,
    /// Per asset, attention weights of the final query over its keys.
    pub attention: Vec<Vec<T>>,
}

pub fn encode_formation<T: Scalar>(
    graph: &mut Graph<T>,
    enc: &EncoderVars,
    features: &PriceTable,
    formation: Range<usize>,
) -> Result<ManagerEncoding<T>> {
    if formation.is_empty() || formation.end > features.n_days() {
        return Err(Error::Data(format!(
            "formation window {formation:?} invalid for {} days",
            features.n_days()
        )));
    }
    let mut rows = Vec::with_capacity(features.n_assets());
    let mut attention = Vec::with_capacity(features.n_assets());
    for a in 0..features.n_assets() {
        let window = formation
            .clone()
            .map(|d| {
                let f = features.features(a, d);
                graph.input_vec(f.iter().map(|v| T::lit(*v)).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        let hidden = bi_gru_encode(graph, enc, &window)?;
        let pooled = attention_pool(graph, enc, &hidden, hidden.len() - 1)?;
        rows.push(pooled.output);
        attention.push(pooled.weights);
    }
    let state = graph.stack_rows(&rows)?;
    Ok(ManagerEncoding {
        state,
        rows,
        attention,
    })
}

/// Worker state at step `t` from the observations `history[..=t]`, optionally
/// restricted to the last `lookback` steps. Nothing after `t` is read.
pub fn encode_trading_history<T: Scalar>(
    graph: &mut Graph<T>,
    enc: &EncoderVars,
    history: &[TradeObservation],
    t: usize,
    lookback: Option<usize>,
) -> Result<Pooled<T>> {
    if history.len() < t + 1 {
        return Err(Error::Data(format!(
            "history has {} steps, need {}",
            history.len(),
            t + 1
        )));
    }
    let table = enc
        .action_embedding
        .ok_or_else(|| Error::Config("worker encoder needs an action embedding".into()))?;
    let start = lookback.map_or(0, |w| (t + 1).saturating_sub(w.max(1)));
    let mut window = Vec::with_capacity(t + 1 - start);
    for obs in &history[start..=t] {
        let emb = graph.row(table, obs.account.prev_action.index())?;
        let numeric = graph.input_vec(worker_numeric_features(obs))?;
        window.push(graph.concat(&[emb, numeric])?);
    }
    let hidden = bi_gru_encode(graph, enc, &window)?;
    let mut pooled = attention_pool(graph, enc, &hidden, hidden.len() - 1)?;
    pooled.keys = pooled.keys.start + start..pooled.keys.end + start;
    Ok(pooled)
}

/// Cash, position value, net value, then both legs' (open, close, volume).
pub fn worker_numeric_features<T: Scalar>(obs: &TradeObservation) -> Vec<T> {
    let a = &obs.account;
    let mut v = Vec::with_capacity(WORKER_RAW_FEATURES);
    v.push(T::lit(a.cash));
    v.push(T::lit(a.position_value));
    v.push(T::lit(a.net_value));
    for leg in &obs.prices {
        v.extend(leg.iter().map(|x| T::lit(*x)));
    }
    v
}
