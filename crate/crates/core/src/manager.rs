//! High-level pair-selection bandit: Gram-matrix option policy over encoded
//! assets and a mean-pooled critic.

use std::io::Write;
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::data::PriceTable;
use crate::encoder::{
    attention_pool, bi_gru_encode, encode_formation, AttentionKeys, EncoderParams, MANAGER_FEATURES,
};
use crate::env::{episode_return, EpisodeReturn, PairOption};
use crate::error::{Error, Result};
use crate::numerics::{softmax_slice, Graph, ParamId, ParameterStore, RmsProp, Tensor, Var};
use crate::scalar::Scalar;
use crate::worker::{a2c_objective, ActMode, UpdateStats};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManagerArch {
    pub d_h: usize,
    pub keys: AttentionKeys,
    /// Encode only the last this-many formation days; `None` uses all.
    pub window: Option<usize>,
}

impl Default for ManagerArch {
    fn default() -> Self {
        Self {
            d_h: 32,
            keys: AttentionKeys::IncludeSelf,
            window: None,
        }
    }
}

impl ManagerArch {
    /// The day range actually encoded for a formation period.
    pub fn encoded_range(&self, formation: &Range<usize>) -> Range<usize> {
        match self.window {
            Some(w) if w < formation.len() => formation.end - w.max(1)..formation.end,
            _ => formation.clone(),
        }
    }
}

/// Formation encoder plus value head; the policy itself has no weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ManagerNet<T> {
    pub store: ParameterStore<T>,
    pub arch: ManagerArch,
    pub encoder: EncoderParams,
    /// [1 × d_h] and [1].
    pub w_v: ParamId,
    pub b_v: ParamId,
}

#[derive(Debug, Clone)]
pub struct ManagerHeads<T> {
    /// [N × d_h].
    pub state: Var,
    /// Flattened strict upper triangle of the state Gram matrix.
    pub logits: Var,
    pub value: Var,
    pub attention: Vec<Vec<T>>,
    pub n_assets: usize,
}

impl<T: Scalar> ManagerNet<T> {
    pub fn new<R: Rng>(arch: ManagerArch, rng: &mut R) -> Result<Self> {
        let mut store = ParameterStore::new();
        let encoder = EncoderParams::init(
            &mut store,
            "manager.encoder",
            MANAGER_FEATURES,
            arch.d_h,
            None,
            arch.keys,
            rng,
        )?;
        // unit-gain states give Gram logits of spread sqrt(d_h); start near uniform
        let g = T::lit((arch.d_h as f64).powf(-0.5));
        store.value_mut(encoder.ln_gain).data_mut().iter_mut().for_each(|v| *v = g);
        let w_v = store.insert_uniform("manager.w_v", 1, arch.d_h, rng)?;
        let b_v = store.insert("manager.b_v", Tensor::zeros(&[1]))?;
        Ok(Self {
            store,
            arch,
            encoder,
            w_v,
            b_v,
        })
    }

    pub fn from_store(store: ParameterStore<T>, arch: ManagerArch) -> Result<Self> {
        let template = Self::new(arch, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0))?;
        if store.len() != template.store.len() {
            return Err(Error::Data("snapshot does not fit the manager".into()));
        }
        for id in template.store.ids() {
            let name = template.store.name(id);
            match store.id(name) {
                Some(o) if o == id && store.value(o).shape() == template.store.value(id).shape() => {}
                _ => return Err(Error::Data(format!("snapshot entry {name} does not fit the manager"))),
            }
        }
        Ok(Self { store, ..template })
    }

    /// Encodes the formation window and records logits and value.
    pub fn forward(
        &self,
        graph: &mut Graph<T>,
        features: &PriceTable,
        formation: Range<usize>,
    ) -> Result<ManagerHeads<T>> {
        let n = features.n_assets();
        if n < 2 {
            return Err(Error::Data(format!("need at least 2 assets, got {n}")));
        }
        let enc = self.encoder.bind(graph, &self.store);
        let encoding = encode_formation(graph, &enc, features, self.arch.encoded_range(&formation))?;
        let logits = pair_logits(graph, encoding.state, n)?;
        let pooled = graph.mean_rows(encoding.state)?;
        let w_v = self.store.var(graph, self.w_v);
        let b_v = self.store.var(graph, self.b_v);
        let v = graph.matvec(w_v, pooled)?;
        let value = graph.add(v, b_v)?;
        Ok(ManagerHeads {
            state: encoding.state,
            logits,
            value,
            attention: encoding.attention,
            n_assets: n,
        })
    }

    /// Option probabilities in flat triu order, with the critic's value.
    pub fn option_distribution(&self, features: &PriceTable, formation: Range<usize>) -> Result<(Vec<T>, T)> {
        let mut graph = Graph::new();
        let heads = self.forward(&mut graph, features, formation)?;
        let probs = softmax_slice(graph.value(heads.logits).data())?;
        Ok((probs, graph.scalar(heads.value)))
    }

    /// Bandit A2C loss against a fixed target (`R^h`, optionally plus a
    /// bootstrapped successor value).
    pub fn a2c_loss(
        &self,
        graph: &mut Graph<T>,
        heads: &ManagerHeads<T>,
        option: PairOption,
        target: T,
        beta: T,
    ) -> Result<(Var, UpdateStats)> {
        if option.flat_index >= PairOption::count(heads.n_assets) {
            return Err(Error::Shape(format!("option {} out of range", option.flat_index)));
        }
        a2c_objective(graph, heads.logits, heads.value, option.flat_index, target, beta)
    }
}

/// `triu(S Sᵀ)` without the diagonal, flattened row-major.
pub fn pair_logits<T: Scalar>(graph: &mut Graph<T>, state: Var, n: usize) -> Result<Var> {
    if n < 2 {
        return Err(Error::Shape(format!("pair logits need N >= 2, got {n}")));
    }
    let gram = graph.matmul_nt(state, state)?;
    let idx = PairOption::all(n).iter().map(|o| o.i * n + o.j).collect();
    graph.gather(gram, idx)
}

/// Samples or picks an option; greedy ties go to the lowest flat index.
pub fn select_option<T: Scalar, R: Rng>(
    logits: &[T],
    n_assets: usize,
    mode: ActMode,
    rng: &mut R,
) -> Result<PairOption> {
    if logits.is_empty() || logits.len() != PairOption::count(n_assets) {
        return Err(Error::Shape(format!(
            "{} logits for {n_assets} assets",
            logits.len()
        )));
    }
    let probs = softmax_slice(logits)?;
    let k = match mode {
        ActMode::Greedy => {
            let mut best = 0;
            for (k, p) in probs.iter().enumerate() {
                if *p > probs[best] {
                    best = k;
                }
            }
            best
        }
        ActMode::Sample => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = None;
            for (k, p) in probs.iter().enumerate() {
                acc += p.as_f64();
                if u < acc {
                    pick = Some(k);
                    break;
                }
            }
            pick.unwrap_or_else(|| {
                probs
                    .iter()
                    .rposition(|p| *p > T::zero())
                    .unwrap_or(probs.len() - 1)
            })
        }
    };
    PairOption::from_flat(k, n_assets)
}

/// `∏(1 + R^h_t) − 1` over the trading period.
pub fn extrinsic_reward(trading_rewards: &[f64]) -> EpisodeReturn {
    episode_return(trading_rewards)
}

/// One bandit A2C step. The graph must hold `heads` from the current
/// parameters.
pub fn manager_update<T: Scalar>(
    net: &mut ManagerNet<T>,
    opt: &mut RmsProp<T>,
    graph: &mut Graph<T>,
    heads: &ManagerHeads<T>,
    option: PairOption,
    target: f64,
    beta: f64,
) -> Result<UpdateStats> {
    if !target.is_finite() {
        return Err(Error::Numeric("non-finite extrinsic reward".into()));
    }
    let (loss, stats) = net.a2c_loss(graph, heads, option, T::lit(target), T::lit(beta))?;
    let grads = graph.backward(loss)?;
    net.store.zero_grads();
    net.store.accumulate(graph, &grads);
    opt.step(&mut net.store);
    if !net.store.all_finite() {
        return Err(Error::Numeric("manager parameters became non-finite".into()));
    }
    Ok(stats)
}

/// Symmetric N×N matrix of option probabilities with a zero diagonal.
pub fn pair_probability_matrix<T: Scalar>(probs: &[T], n: usize) -> Result<Vec<Vec<f64>>> {
    if probs.len() != PairOption::count(n) {
        return Err(Error::Shape(format!("{} probabilities for {n} assets", probs.len())));
    }
    let mut m = vec![vec![0.0; n]; n];
    for o in PairOption::all(n) {
        let p = probs[o.flat_index].as_f64();
        m[o.i][o.j] = p;
        m[o.j][o.i] = p;
    }
    Ok(m)
}

/// Writes `pair_probs.csv`-style output and returns the matrix.
pub fn export_pair_probabilities<T: Scalar>(
    net: &ManagerNet<T>,
    features: &PriceTable,
    formation: Range<usize>,
    path: &Path,
) -> Result<Vec<Vec<f64>>> {
    let (probs, _) = net.option_distribution(features, formation)?;
    let m = pair_probability_matrix(&probs, features.n_assets())?;
    let mut out = String::from("asset");
    for a in features.assets() {
        out.push(',');
        out.push_str(a);
    }
    out.push('\n');
    for (a, row) in features.assets().iter().zip(&m) {
        out.push_str(a);
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
    Ok(m)
}

/// Attention of each of the last `queries` formation steps over its keys,
/// for one asset. Row `q` has zeros outside its key range.
pub fn attention_matrix<T: Scalar>(
    net: &ManagerNet<T>,
    features: &PriceTable,
    formation: Range<usize>,
    asset: usize,
    queries: usize,
) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let range = net.arch.encoded_range(&formation);
    let mut graph = Graph::new();
    let enc = net.encoder.bind(&mut graph, &net.store);
    let window = range
        .clone()
        .map(|d| {
            let f = features.features(asset, d);
            graph.input_vec(f.iter().map(|v| T::lit(*v)).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let hidden = bi_gru_encode(&mut graph, &enc, &window)?;
    let len = hidden.len();
    let first = len.saturating_sub(queries.max(1));
    let mut steps = Vec::new();
    let mut rows = Vec::new();
    for q in first..len {
        let pooled = attention_pool(&mut graph, &enc, &hidden, q)?;
        let mut row = vec![0.0; len];
        for (k, w) in pooled.keys.clone().zip(&pooled.weights) {
            row[k] = w.as_f64();
        }
        steps.push(q);
        rows.push(row);
    }
    Ok((steps, rows))
}

/// Writes `attention_<asset>.csv`: rows are query steps, columns key steps.
pub fn write_attention_csv(path: &Path, steps: &[usize], rows: &[Vec<f64>]) -> Result<()> {
    let width = rows.first().map_or(0, |r| r.len());
    let mut out = String::from("query");
    for k in 0..width {
        out.push_str(&format!(",{k}"));
    }
    out.push('\n');
    for (q, row) in steps.iter().zip(rows) {
        out.push_str(&q.to_string());
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
