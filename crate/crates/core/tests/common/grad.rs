//! Finite-difference checks of every graph primitive and both A2C losses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use trials::data::PriceTable;
use trials::env::{AccountState, PairOption, TradeAction, TradeObservation};
use trials::manager::{ManagerArch, ManagerNet};
use trials::numerics::{grad_check, GradCheckConfig, Graph, ParameterStore, Tensor, Var};
use trials::worker::{WorkerArch, WorkerNet};
use trials::Result;

pub const SEEDS: u64 = 20;
pub const TOL: f64 = 1e-4;

type Primitive = fn(&mut Graph<f64>, &[Var]) -> Result<Var>;

/// Name, parameter shapes and output of every checked primitive.
pub fn primitives() -> Vec<(&'static str, Vec<Vec<usize>>, Primitive)> {
    vec![
        ("matvec", vec![vec![4, 5], vec![5]], |g, v| g.matvec(v[0], v[1])),
        ("mat_t_vec", vec![vec![4, 5], vec![4]], |g, v| g.mat_t_vec(v[0], v[1])),
        ("matmul_nt", vec![vec![3, 4], vec![5, 4]], |g, v| g.matmul_nt(v[0], v[1])),
        ("add", vec![vec![6], vec![6]], |g, v| g.add(v[0], v[1])),
        ("sub", vec![vec![6], vec![6]], |g, v| g.sub(v[0], v[1])),
        ("mul", vec![vec![6], vec![6]], |g, v| g.mul(v[0], v[1])),
        ("scale", vec![vec![6]], |g, v| g.scale(v[0], -1.7)),
        ("dot", vec![vec![6], vec![6]], |g, v| g.dot(v[0], v[1])),
        ("sum", vec![vec![6]], |g, v| g.sum(v[0])),
        ("sigmoid", vec![vec![7]], |g, v| g.sigmoid(v[0])),
        ("tanh", vec![vec![7]], |g, v| g.tanh(v[0])),
        ("leaky_relu", vec![vec![7]], |g, v| g.leaky_relu(v[0], 0.01)),
        ("softmax", vec![vec![5]], |g, v| g.softmax(v[0])),
        ("log_softmax", vec![vec![5]], |g, v| g.log_softmax(v[0])),
        ("layer_norm", vec![vec![6], vec![6], vec![6]], |g, v| g.layer_norm(v[0], v[1], v[2], 1e-5)),
        ("concat", vec![vec![3], vec![4]], |g, v| g.concat(&[v[0], v[1], v[0]])),
        ("stack_rows", vec![vec![3], vec![3]], |g, v| g.stack_rows(&[v[1], v[0]])),
        ("gather", vec![vec![6]], |g, v| g.gather(v[0], vec![4, 0, 4, 2])),
        ("row", vec![vec![3, 4]], |g, v| g.row(v[0], 1)),
        ("mean_rows", vec![vec![3, 4]], |g, v| g.mean_rows(v[0])),
        ("gru_cell", vec![vec![3], vec![4], vec![12, 3], vec![12, 4], vec![12]], |g, v| {
            let h1 = g.gru_cell(v[0], v[1], v[2], v[3], v[4])?;
            g.gru_cell(v[0], h1, v[2], v[3], v[4])
        }),
    ]
}

fn randn(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Random parameters named `p0, p1, ...` with the given shapes.
fn store(seed: u64, shapes: &[Vec<usize>]) -> ParameterStore<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParameterStore::new();
    for (k, shape) in shapes.iter().enumerate() {
        s.insert(format!("p{k}"), randn(&mut rng, shape)).unwrap();
    }
    s
}

/// Weighted sum with fixed pseudo-random weights, so every output
/// coordinate carries a different gradient.
fn project(g: &mut Graph<f64>, v: Var) -> Result<Var> {
    let n = g.value(v).len();
    let w: Vec<f64> = (0..n).map(|k| ((k * 7 + 3) % 11) as f64 / 5.0 - 1.0).collect();
    let flat = if g.value(v).shape().len() == 1 {
        v
    } else {
        let rows = g.value(v).shape()[0];
        let parts: Vec<Var> = (0..rows).map(|i| g.row(v, i)).collect::<Result<_>>()?;
        g.concat(&parts)?
    };
    let wv = g.input_vec(w)?;
    g.dot(flat, wv)
}

/// Worst relative error of one primitive over all seeds.
pub fn primitive_error(shapes: &[Vec<usize>], f: Primitive) -> f64 {
    (0..SEEDS)
        .map(|seed| {
            let s = store(seed, shapes);
            grad_check(&s, GradCheckConfig { seed, ..Default::default() }, |g, s| {
                let v: Vec<Var> = s.ids().map(|id| s.var(g, id)).collect();
                let out = f(g, &v)?;
                project(g, out)
            })
            .unwrap()
            .max_rel_err()
        })
        .fold(0.0, f64::max)
}

fn history(rng: &mut ChaCha8Rng, len: usize) -> Vec<TradeObservation> {
    (0..len)
        .map(|t| {
            let mut p = [[0.0; 3]; 2];
            for leg in p.iter_mut() {
                for v in leg.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
            }
            TradeObservation {
                step: t,
                day: t,
                account: AccountState {
                    prev_action: TradeAction::from_index(t % 3).unwrap(),
                    cash: 1.0 + 0.01 * t as f64,
                    position_value: 0.02 * t as f64,
                    net_value: 1.0 + 0.03 * t as f64,
                },
                prices: p,
                returns: (0.01 * rng.sample::<f64, _>(StandardNormal), 0.01 * rng.sample::<f64, _>(StandardNormal)),
            }
        })
        .collect()
}

/// Loss with the actor's advantage pinned at `a0`, which is what the A2C
/// update differentiates.
fn frozen_loss(g: &mut Graph<f64>, logits: Var, value: Var, action: usize, target: f64, a0: f64) -> Result<Var> {
    let log_p = g.log_softmax(logits)?;
    let log_pa = g.gather(log_p, vec![action])?;
    let actor = g.scale(log_pa, -a0)?;
    let t = g.input_vec(vec![target])?;
    let diff = g.sub(t, value)?;
    let sq = g.mul(diff, diff)?;
    let critic = g.scale(sq, 0.5)?;
    let total = g.add(actor, critic)?;
    g.sum(total)
}

fn grads_of(s: &ParameterStore<f64>, f: impl Fn(&mut Graph<f64>) -> Result<Var>) -> Vec<f64> {
    let mut g = Graph::new();
    let out = f(&mut g).unwrap();
    let grads = g.backward(out).unwrap();
    let mut acc = s.clone();
    acc.zero_grads();
    acc.accumulate(&g, &grads);
    acc.ids().flat_map(|id| acc.grad(id).data().to_vec()).collect()
}

/// Largest gap between the library loss gradients and the frozen-advantage
/// reference, relative to `1 + |reference|`.
fn library_gap(lib: &[f64], reference: &[f64]) -> f64 {
    assert_eq!(lib.len(), reference.len());
    lib.iter()
        .zip(reference)
        .map(|(x, y)| (x - y).abs() / (1.0 + y.abs()))
        .fold(0.0, f64::max)
}

/// Worst finite-difference error of the worker loss and worst gap between
/// the library loss and the reference, over all seeds.
pub fn worker_loss_errors() -> (f64, f64) {
    let (mut worst, mut gap) = (0.0f64, 0.0f64);
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arch = WorkerArch {
            d_h: 6,
            d_a: 3,
            lookback: Some(5),
            separate_critic: seed % 2 == 1,
            ..Default::default()
        };
        let net = WorkerNet::<f64>::new(arch, &mut rng).unwrap();
        let hist = history(&mut rng, 8);
        let t = 6;
        let action = TradeAction::from_index(seed as usize % 3).unwrap();
        let target = rng.random_range(-1.0..1.0);
        let a0 = target - net.value(&hist, t).unwrap();
        let frozen = |g: &mut Graph<f64>, s: &ParameterStore<f64>| {
            let probe = WorkerNet { store: s.clone(), ..net.clone() };
            let heads = probe.forward(g, &hist, t)?;
            frozen_loss(g, heads.logits, heads.value, action.index(), target, a0)
        };
        let report = grad_check(&net.store, GradCheckConfig { seed, ..Default::default() }, frozen).unwrap();
        worst = worst.max(report.max_rel_err());
        let lib = grads_of(&net.store, |g| Ok(net.a2c_loss(g, &hist, t, action, target, 0.0)?.0));
        gap = gap.max(library_gap(&lib, &grads_of(&net.store, |g| frozen(g, &net.store))));
    }
    (worst, gap)
}

fn feature_table(rng: &mut ChaCha8Rng, n_assets: usize, n_days: usize) -> PriceTable {
    let dates = (0..n_days)
        .map(|d| chrono::NaiveDate::from_ymd_opt(2001, 1, 1).unwrap() + chrono::Duration::days(d as i64))
        .collect();
    let mut cols =
        || -> Vec<f64> { (0..n_assets * n_days).map(|_| (0.3 * rng.sample::<f64, _>(StandardNormal)).exp()).collect() };
    let (o, c, v) = (cols(), cols(), cols());
    PriceTable::new((0..n_assets).map(|i| format!("A{i}")).collect(), dates, o, c, v).unwrap()
}

/// Same as [`worker_loss_errors`] for the manager's bandit loss.
pub fn manager_loss_errors() -> (f64, f64) {
    let (mut worst, mut gap) = (0.0f64, 0.0f64);
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = ManagerNet::<f64>::new(ManagerArch { d_h: 6, ..Default::default() }, &mut rng).unwrap();
        let n = 4;
        let features = feature_table(&mut rng, n, 7);
        let option = PairOption::from_flat(seed as usize % PairOption::count(n), n).unwrap();
        let target = rng.random_range(-1.0..1.0);
        let (_, v0) = net.option_distribution(&features, 0..7).unwrap();
        let a0 = target - v0;
        let frozen = |g: &mut Graph<f64>, s: &ParameterStore<f64>| {
            let probe = ManagerNet { store: s.clone(), ..net.clone() };
            let heads = probe.forward(g, &features, 0..7)?;
            frozen_loss(g, heads.logits, heads.value, option.flat_index, target, a0)
        };
        let report = grad_check(&net.store, GradCheckConfig { seed, ..Default::default() }, frozen).unwrap();
        worst = worst.max(report.max_rel_err());
        let lib = grads_of(&net.store, |g| {
            let heads = net.forward(g, &features, 0..7)?;
            Ok(net.a2c_loss(g, &heads, option, target, 0.0)?.0)
        });
        gap = gap.max(library_gap(&lib, &grads_of(&net.store, |g| frozen(g, &net.store))));
    }
    (worst, gap)
}
