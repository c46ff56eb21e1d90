//! Experiment orchestration: asset subsets, the method matrix, per-cell
//! output files and the summary table.

use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    coint_choice, coint_select, corr_select, ssd_select, write_pair_ranking, CointConfig, RankingRow, SpreadKind,
    ThresholdConfig,
};
use crate::data::{
    gen_synthetic_universe, load_price_table, prepare_features, split_periods, CsvSchema, FeatureConfig, Period,
    PeriodSplit, PriceTable, SplitFractions, SyntheticSpec,
};
use crate::env::{write_trajectory, PairOption};
use crate::error::{Error, Result};
use crate::manager::{attention_matrix, export_pair_probabilities, write_attention_csv};
use crate::metrics::MetricsConfig;
use crate::trainer::{
    evaluate, evaluate_threshold_on_pair, evaluate_worker_on_pair, lookback_window, persist, run_ablation_wo_tr,
    train, train_worker_on_pair, EvaluationReport, ExtrinsicSource, MarketView, Snapshot, TrainConfig,
};

/// The method registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Trials,
    TrialsWoTr,
    Ggr,
    Correlation,
    Cointegration,
    CointRl,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Trials,
        Method::TrialsWoTr,
        Method::Ggr,
        Method::Correlation,
        Method::Cointegration,
        Method::CointRl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Trials => "trials",
            Method::TrialsWoTr => "trials_wo_tr",
            Method::Ggr => "ggr",
            Method::Correlation => "correlation",
            Method::Cointegration => "cointegration",
            Method::CointRl => "coint_rl",
        }
    }

    fn id(self) -> u64 {
        Method::ALL.iter().position(|m| *m == self).unwrap_or(0) as u64
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// A panel on disk; relative paths resolve against the config file.
    Csv {
        path: PathBuf,
        #[serde(default)]
        schema: CsvSchema,
    },
    Synthetic(SyntheticSpec),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticSpec::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitLengths {
    pub formation: usize,
    pub trading: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SplitSpec {
    Fractions(SplitFractions),
    /// Windows of fixed length tiling the table from its first day.
    Lengths(SplitLengths),
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::Lengths(SplitLengths {
            formation: 4000,
            trading: 250,
            validation: 250,
            test: 250,
        })
    }
}

impl SplitSpec {
    pub fn resolve(&self, n_days: usize) -> Result<PeriodSplit> {
        match self {
            SplitSpec::Fractions(f) => split_periods(n_days, *f),
            SplitSpec::Lengths(l) => {
                let s = PeriodSplit::from_lengths(l.formation, l.trading, l.validation, l.test)?;
                if s.n_days() > n_days {
                    return Err(Error::Data(format!("split needs {} days, data has {n_days}", s.n_days())));
                }
                Ok(s)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubsetConfig {
    pub count: usize,
    /// Assets per subset; `None` splits the universe evenly.
    pub size: Option<usize>,
    pub seed: u64,
}

impl Default for SubsetConfig {
    fn default() -> Self {
        Self {
            count: 1,
            size: None,
            seed: 0,
        }
    }
}

/// Threshold trader settings for every method that uses one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdParams {
    pub k_open: f64,
    pub k_close: f64,
    /// Spread traded after distance or correlation selection.
    pub distance_spread: SpreadKind,
    /// Spread traded after cointegration selection.
    pub cointegration_spread: SpreadKind,
    /// Spread traded by the TRIALS-wo-TR ablation.
    pub ablation_spread: SpreadKind,
}

impl Default for ThresholdParams {
    fn default() -> Self {
        Self {
            k_open: 2.0,
            k_close: 0.0,
            distance_spread: SpreadKind::NormalizedDiff,
            cointegration_spread: SpreadKind::OlsResidual,
            ablation_spread: SpreadKind::OlsResidual,
        }
    }
}

impl ThresholdParams {
    pub fn for_method(&self, method: Method) -> ThresholdConfig {
        let spread = match method {
            Method::Ggr | Method::Correlation => self.distance_spread,
            Method::Cointegration | Method::CointRl => self.cointegration_spread,
            Method::Trials | Method::TrialsWoTr => self.ablation_spread,
        };
        ThresholdConfig {
            k_open: self.k_open,
            k_close: self.k_close,
            spread,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output: PathBuf,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    /// Query steps exported per `attention_<asset>.csv`; 0 disables them.
    pub attention_queries: usize,
    pub data: DataSource,
    pub features: FeatureConfig,
    pub split: SplitSpec,
    pub subsets: SubsetConfig,
    pub train: TrainConfig,
    pub threshold: ThresholdParams,
    pub coint: CointConfig,
    pub metrics: MetricsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output: PathBuf::from("results"),
            seeds: vec![0],
            methods: Method::ALL.to_vec(),
            attention_queries: 16,
            data: DataSource::default(),
            features: FeatureConfig::default(),
            split: SplitSpec::default(),
            subsets: SubsetConfig::default(),
            train: TrainConfig::default(),
            threshold: ThresholdParams::default(),
            coint: CointConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML file; a relative CSV path is taken relative to it.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let DataSource::Csv { path: data, .. } = &mut cfg.data {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("method list is empty".into()));
        }
        for (k, m) in self.methods.iter().enumerate() {
            if self.methods[..k].contains(m) {
                return Err(Error::Config(format!("method {m} listed twice")));
            }
        }
        if self.subsets.count == 0 || self.subsets.size == Some(0) {
            return Err(Error::Config("subset count and size must be positive".into()));
        }
        if !(self.threshold.k_open > 0.0 && self.threshold.k_close >= 0.0 && self.threshold.k_close < self.threshold.k_open)
        {
            return Err(Error::Config("thresholds need 0 <= k_close < k_open".into()));
        }
        if let DataSource::Synthetic(spec) = &self.data {
            spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        self.train.validate()
    }

    /// The raw panel plus the identifiers dropped while loading.
    pub fn load_data(&self) -> Result<(PriceTable, Vec<String>)> {
        match &self.data {
            DataSource::Csv { path, schema } => {
                let loaded = load_price_table(path, *schema)?;
                Ok((loaded.table, loaded.dropped))
            }
            DataSource::Synthetic(spec) => Ok((gen_synthetic_universe(spec)?, Vec::new())),
        }
    }
}

/// Seeded shuffle of `assets`, cut into `k` disjoint lists of `size`. Each
/// list keeps the original asset order.
pub fn make_subsets(assets: &[String], k: usize, size: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    if k == 0 || size == 0 {
        return Err(Error::Config("subset count and size must be positive".into()));
    }
    if k * size > assets.len() {
        return Err(Error::Data(format!(
            "insufficient assets: {k} subsets of {size} need {}, have {}",
            k * size,
            assets.len()
        )));
    }
    let mut idx: Vec<usize> = (0..assets.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(idx
        .chunks(size)
        .take(k)
        .map(|c| {
            let mut c = c.to_vec();
            c.sort_unstable();
            c.into_iter().map(|i| assets[i].clone()).collect()
        })
        .collect())
}

/// Independent seed of one matrix cell.
pub fn cell_seed(base: u64, subset: usize, method: Method) -> u64 {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&base.to_le_bytes());
    key[8..16].copy_from_slice(&(subset as u64).to_le_bytes());
    key[16..24].copy_from_slice(&method.id().to_le_bytes());
    ChaCha8Rng::from_seed(key).next_u64()
}

/// One asset subset with its windows and per-period features. Each
/// period's features are standardized on the formation-length window just
/// before it, so an agent never sees statistics from the days it trades.
#[derive(Debug, Clone)]
pub struct SubsetData {
    pub index: usize,
    pub raw: PriceTable,
    pub split: PeriodSplit,
    /// Formation and trading, validation, test.
    features: [PriceTable; 3],
}

impl SubsetData {
    pub fn new(index: usize, raw: PriceTable, cfg: FeatureConfig, split: PeriodSplit) -> Result<Self> {
        let features = [
            prepare_features(&raw, cfg, split.formation.clone())?,
            prepare_features(&raw, cfg, lookback_window(&split, &split.validation))?,
            prepare_features(&raw, cfg, lookback_window(&split, &split.test))?,
        ];
        Ok(Self {
            index,
            raw,
            split,
            features,
        })
    }

    pub fn features(&self, period: Period) -> &PriceTable {
        match period {
            Period::Formation | Period::Trading => &self.features[0],
            Period::Validation => &self.features[1],
            Period::Test => &self.features[2],
        }
    }

    pub fn market(&self, period: Period) -> MarketView<'_> {
        MarketView {
            raw: &self.raw,
            features: self.features(period),
        }
    }

    /// The same subset cut at the end of the validation window, for training
    /// and model selection.
    pub fn without_test(&self) -> Result<Self> {
        let end = self.split.validation.end;
        Ok(Self {
            index: self.index,
            raw: self.raw.head_days(end)?,
            split: self.split.clone(),
            features: [
                self.features[0].head_days(end)?,
                self.features[1].head_days(end)?,
                self.features[2].head_days(end)?,
            ],
        })
    }
}

/// One row of `metrics.csv`: test-window metrics of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub subset: usize,
    pub seed: u64,
    pub asset_x: String,
    pub asset_y: String,
    pub option_prob: f64,
    pub validation_sr: f64,
    pub sr: f64,
    pub ar: f64,
    pub mdd: f64,
    pub av: f64,
    pub ed: f64,
}

impl MetricsRow {
    fn new(method: Method, subset: &SubsetData, seed: u64, validation: &EvaluationReport, test: &EvaluationReport) -> Self {
        let names = subset.raw.assets();
        let m = &test.metrics;
        Self {
            method: method.name().into(),
            subset: subset.index,
            seed,
            asset_x: names[test.pair.i].clone(),
            asset_y: names[test.pair.j].clone(),
            option_prob: test.option_prob,
            validation_sr: validation.metrics.sr,
            sr: m.sr,
            ar: m.ar,
            mdd: m.mdd,
            av: m.av,
            ed: m.ed,
        }
    }
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    if !path.exists() {
        return Err(Error::Data(format!("missing {}", path.display())));
    }
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// What `trials eval` needs to rebuild the inputs of a snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotContext {
    pub method: Method,
    pub assets: Vec<String>,
    pub split: PeriodSplit,
    pub features: FeatureConfig,
    pub train: TrainConfig,
    pub threshold: ThresholdConfig,
    pub metrics: MetricsConfig,
}

/// Everything a finished cell produced.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub method: Method,
    pub row: MetricsRow,
    pub validation: EvaluationReport,
    pub test: EvaluationReport,
    /// Iteration of the snapshot chosen on validation, for trained managers.
    pub selected_iteration: Option<usize>,
}

fn ranking_rows(method: Method, ranked: impl Iterator<Item = (PairOption, f64, Option<bool>)>) -> Vec<RankingRow> {
    ranked
        .map(|(o, score, reject)| RankingRow {
            i: o.i,
            j: o.j,
            method: method.name().into(),
            score,
            reject,
        })
        .collect()
}

/// The snapshot whose greedy validation run has the best Sharpe ratio; the
/// earliest wins ties.
fn select_snapshot(
    snapshots: &[Snapshot],
    mut validate: impl FnMut(&Snapshot) -> Result<EvaluationReport>,
) -> Result<(&Snapshot, EvaluationReport)> {
    let mut best: Option<(&Snapshot, EvaluationReport)> = None;
    for s in snapshots {
        let report = validate(s)?;
        if best.as_ref().is_none_or(|(_, b)| report.metrics.sr > b.metrics.sr) {
            best = Some((s, report));
        }
    }
    best.ok_or_else(|| Error::Data("training produced no snapshot".into()))
}

/// Pair choice of a classical selection method on `window`, with the
/// full ranking.
fn classical_pair(
    cfg: &ExperimentConfig,
    method: Method,
    raw: &PriceTable,
    window: Range<usize>,
) -> Result<(PairOption, Vec<RankingRow>)> {
    match method {
        Method::Ggr => {
            let ranked = ssd_select(raw, window, cfg.metrics.distance)?;
            Ok((ranked[0].0, ranking_rows(method, ranked.into_iter().map(|(o, s)| (o, s, None)))))
        }
        Method::Correlation => {
            let ranked = corr_select(raw, window)?;
            let first = ranked
                .first()
                .ok_or_else(|| Error::Data("no pair has a defined correlation".into()))?
                .0;
            Ok((first, ranking_rows(method, ranked.into_iter().map(|(o, s)| (o, s, None)))))
        }
        Method::Cointegration | Method::CointRl => {
            let ranked = coint_select(raw, window, &cfg.coint)?;
            let (pair, _) = coint_choice(&ranked)?;
            let rows = ranked.iter().map(|(o, r)| (*o, r.adf_statistic, Some(r.reject)));
            Ok((pair, ranking_rows(method, rows)))
        }
        Method::Trials | Method::TrialsWoTr => Err(Error::Config(format!("{method} has no fixed selection rule"))),
    }
}

/// Runs one (subset, seed, method) cell and writes its files under `dir`.
/// Training and model selection only see data up to the end of the
/// validation window. Every method picks its pair on the formation window
/// and trades it in the later periods.
pub fn run_cell(cfg: &ExperimentConfig, subset: &SubsetData, method: Method, seed: u64, dir: &Path) -> Result<CellResult> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let seen = subset.without_test()?;
    let split = &subset.split;
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = cell_seed(seed, subset.index, method);
    let threshold = cfg.threshold.for_method(method);
    let mcfg = &cfg.metrics;
    let (val_period, test_period) = (split.validation.clone(), split.test.clone());
    let (val_market, test_market) = (seen.market(Period::Validation), subset.market(Period::Test));
    let formation_features = seen.features(Period::Formation);

    let mut selected_iteration = None;
    let (validation, test) = match method {
        Method::Trials | Method::TrialsWoTr => {
            let ablation = method == Method::TrialsWoTr;
            if ablation {
                train_cfg.extrinsic = ExtrinsicSource::Threshold;
                train_cfg.threshold = threshold;
            }
            let outcome = train(seen.market(Period::Trading), split, &train_cfg)?;
            let context = SnapshotContext {
                method,
                assets: subset.raw.assets().to_vec(),
                split: split.clone(),
                features: cfg.features,
                train: train_cfg.clone(),
                threshold,
                metrics: *mcfg,
            };
            persist(&outcome, dir, serde_json::to_value(&context).map_err(|e| Error::Data(e.to_string()))?)?;
            let run = |s: &Snapshot, market: MarketView<'_>, period: Range<usize>| {
                if ablation {
                    run_ablation_wo_tr(&s.manager, formation_features, market, split, period, &threshold, train_cfg.env, mcfg)
                } else {
                    evaluate(&s.manager, &s.worker, formation_features, market, split, period, &train_cfg, mcfg)
                }
            };
            let (best, validation) = select_snapshot(&outcome.snapshots, |s| run(s, val_market, val_period.clone()))?;
            selected_iteration = Some(best.iteration);
            let test = run(best, test_market, test_period.clone())?;
            let formation = split.formation.clone();
            export_pair_probabilities(&best.manager, formation_features, formation.clone(), &dir.join("pair_probs.csv"))?;
            if cfg.attention_queries > 0 {
                for asset in [test.pair.i, test.pair.j] {
                    let (steps, rows) = attention_matrix(
                        &best.manager,
                        formation_features,
                        formation.clone(),
                        asset,
                        cfg.attention_queries,
                    )?;
                    let name = &subset.raw.assets()[asset];
                    write_attention_csv(&dir.join(format!("attention_{name}.csv")), &steps, &rows)?;
                }
            }
            (validation, test)
        }
        Method::Ggr | Method::Correlation | Method::Cointegration | Method::CointRl => {
            let (pair, rows) = classical_pair(cfg, method, &seen.raw, split.formation.clone())?;
            write_pair_ranking(&dir.join("pair_ranking.csv"), &rows)?;
            if method == Method::CointRl {
                let (worker, _) = train_worker_on_pair(seen.market(Period::Trading), split, pair, &train_cfg)?;
                let run = |market, period| evaluate_worker_on_pair(&worker, market, split, pair, 1.0, period, &train_cfg, mcfg);
                (run(val_market, val_period)?, run(test_market, test_period)?)
            } else {
                let run = |market, period| {
                    evaluate_threshold_on_pair(market, split, pair, 1.0, period, &threshold, train_cfg.env, mcfg)
                };
                (run(val_market, val_period)?, run(test_market, test_period)?)
            }
        }
    };
    write_trajectory(&dir.join("trajectory_validation.csv"), &validation.trajectory)?;
    write_trajectory(&dir.join("trajectory_test.csv"), &test.trajectory)?;
    let row = MetricsRow::new(method, subset, seed, &validation, &test);
    write_metrics_csv(&dir.join("metrics.csv"), std::slice::from_ref(&row))?;
    Ok(CellResult {
        method,
        row,
        validation,
        test,
        selected_iteration,
    })
}

fn cell_dir(root: &Path, subset: usize, seed: u64, method: Method) -> PathBuf {
    root.join(format!("subset_{subset}"))
        .join(format!("seed_{seed}"))
        .join(method.name())
}

/// Builds the subsets of the configured universe.
pub fn prepare_subsets(cfg: &ExperimentConfig, raw: &PriceTable) -> Result<Vec<SubsetData>> {
    let split = cfg.split.resolve(raw.n_days())?;
    let count = cfg.subsets.count;
    let size = cfg.subsets.size.unwrap_or(raw.n_assets() / count);
    let lists = make_subsets(raw.assets(), count, size, cfg.subsets.seed)?;
    lists
        .into_iter()
        .enumerate()
        .map(|(k, names)| {
            let idx: Vec<usize> = names.iter().filter_map(|n| raw.asset_index(n)).collect();
            SubsetData::new(k, raw.select_assets(&idx)?, cfg.features, split.clone())
        })
        .collect()
}

/// Runs the whole (subset × seed × method) matrix with at most `jobs` cells
/// in flight, then writes `metrics.csv` and the summary into the output
/// directory. Each cell writes its own files as soon as it finishes.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<PathBuf> {
    cfg.validate()?;
    let out = cfg.output.clone();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let (raw, dropped) = cfg.load_data()?;
    if !dropped.is_empty() || matches!(cfg.data, DataSource::Csv { .. }) {
        crate::data::LoadedTable {
            table: raw.clone(),
            dropped,
        }
        .write_drop_report(&out)?;
    }
    let config_copy = out.join("config.toml");
    fs::write(&config_copy, cfg.to_toml()?).map_err(|e| Error::io(&config_copy, e))?;
    let subsets = prepare_subsets(cfg, &raw)?;

    let mut cells = Vec::new();
    for s in &subsets {
        for &seed in &cfg.seeds {
            for &m in &cfg.methods {
                cells.push((s, seed, m));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<CellResult>> = pool.install(|| {
        cells
            .par_iter()
            .map(|(s, seed, m)| {
                let dir = cell_dir(&out, s.index, *seed, *m);
                log::info!("cell subset {} seed {} method {}", s.index, seed, m);
                run_cell(cfg, s, *m, *seed, &dir)
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        rows.push(r?.row);
    }
    write_metrics_csv(&out.join("metrics.csv"), &rows)?;
    emit_summary(&out)?;
    Ok(out)
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-method `Mean(Std)` cells, methods in order of first appearance.
pub fn summarize(rows: &[MetricsRow]) -> Vec<(String, usize, [String; 5])> {
    let mut methods: Vec<&str> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    methods
        .into_iter()
        .map(|m| {
            let sel: Vec<&MetricsRow> = rows.iter().filter(|r| r.method == m).collect();
            let cell = |f: fn(&MetricsRow) -> f64| {
                let (mean, sd) = mean_std(&sel.iter().map(|r| f(r)).collect::<Vec<_>>());
                format!("{mean:.3}({sd:.3})")
            };
            let cells = [cell(|r| r.sr), cell(|r| r.ar), cell(|r| r.mdd), cell(|r| r.av), cell(|r| r.ed)];
            (m.to_string(), sel.len(), cells)
        })
        .collect()
}

/// Reads `<dir>/metrics.csv` and writes `summary.md` and `summary.csv`.
pub fn emit_summary(dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let rows = read_metrics_csv(&dir.join("metrics.csv"))?;
    if rows.is_empty() {
        return Err(Error::Data(format!("no rows in {}", dir.join("metrics.csv").display())));
    }
    let table = summarize(&rows);
    let mut csv_out = String::from("method,n,sr,ar,mdd,av,ed\n");
    let mut md = String::from("| Method | n | SR | AR | MDD | AV | ED |\n|---|---|---|---|---|---|---|\n");
    for (m, n, cells) in &table {
        csv_out.push_str(&format!("{m},{n},{}\n", cells.join(",")));
        md.push_str(&format!("| {m} | {n} | {} |\n", cells.join(" | ")));
    }
    let (csv_path, md_path) = (dir.join("summary.csv"), dir.join("summary.md"));
    fs::write(&csv_path, csv_out).map_err(|e| Error::io(&csv_path, e))?;
    fs::write(&md_path, md).map_err(|e| Error::io(&md_path, e))?;
    Ok((md_path, csv_path))
}

/// Re-evaluates a saved TRIALS or TRIALS-wo-TR snapshot on a CSV panel.
pub fn evaluate_snapshot(snapshot: &Path, data: &Path, schema: CsvSchema, period: Period) -> Result<EvaluationReport> {
    let (snap, extra) = Snapshot::load(snapshot)?;
    let ctx: SnapshotContext =
        serde_json::from_value(extra).map_err(|e| Error::Data(format!("snapshot lacks its run context: {e}")))?;
    let loaded = load_price_table(data, schema)?;
    let idx = ctx
        .assets
        .iter()
        .map(|a| {
            loaded
                .table
                .asset_index(a)
                .ok_or_else(|| Error::Data(format!("asset {a} missing from {}", data.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    let raw = loaded.table.select_assets(&idx)?;
    if raw.n_days() < ctx.split.n_days() {
        return Err(Error::Data(format!(
            "snapshot split needs {} days, data has {}",
            ctx.split.n_days(),
            raw.n_days()
        )));
    }
    let subset = SubsetData::new(0, raw, ctx.features, ctx.split.clone())?;
    let range = ctx.split.period(period);
    let market = subset.market(period);
    let formation = subset.features(Period::Formation);
    match ctx.method {
        Method::Trials => evaluate(
            &snap.manager,
            &snap.worker,
            formation,
            market,
            &ctx.split,
            range,
            &ctx.train,
            &ctx.metrics,
        ),
        Method::TrialsWoTr => run_ablation_wo_tr(
            &snap.manager,
            formation,
            market,
            &ctx.split,
            range,
            &ctx.threshold,
            ctx.train.env,
            &ctx.metrics,
        ),
        other => Err(Error::Config(format!("method {other} has no snapshot to evaluate"))),
    }
}

/// Reads a synthetic-universe spec from TOML.
pub fn load_synthetic_spec(path: &Path) -> Result<SyntheticSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let spec: SyntheticSpec = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    spec.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(spec)
}
