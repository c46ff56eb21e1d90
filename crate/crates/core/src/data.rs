//! Daily price panels: CSV ingestion, log normalization, period splits and a
//! seeded synthetic universe with a planted mean-reverting pair.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// Whether the cells hold raw prices or their logarithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriceScale {
    Raw,
    Log,
}

/// Per-asset, per-day open/close/volume panel. Matrices are stored asset-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTable {
    assets: Vec<String>,
    dates: Vec<NaiveDate>,
    open: Vec<f64>,
    close: Vec<f64>,
    volume: Vec<f64>,
    scale: PriceScale,
}

impl PriceTable {
    /// Builds a raw-price table, checking shapes, date order and positivity.
    pub fn new(
        assets: Vec<String>,
        dates: Vec<NaiveDate>,
        open: Vec<f64>,
        close: Vec<f64>,
        volume: Vec<f64>,
    ) -> Result<Self> {
        let t = Self {
            assets,
            dates,
            open,
            close,
            volume,
            scale: PriceScale::Raw,
        };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        let cells = self.assets.len() * self.dates.len();
        if self.open.len() != cells || self.close.len() != cells || self.volume.len() != cells {
            return Err(Error::Data(format!(
                "matrix shape mismatch: expected {} cells per field",
                cells
            )));
        }
        if self.assets.is_empty() {
            return Err(Error::Data("no assets".into()));
        }
        if self.dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data("dates are not strictly increasing".into()));
        }
        let unique: BTreeSet<_> = self.assets.iter().collect();
        if unique.len() != self.assets.len() {
            return Err(Error::Data("duplicate asset identifiers".into()));
        }
        if self.scale == PriceScale::Raw {
            if self.open.iter().chain(&self.close).any(|p| !(*p > 0.0)) {
                return Err(Error::Data("non-positive price".into()));
            }
            if self.volume.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::Data("negative volume".into()));
            }
        }
        Ok(())
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn scale(&self) -> PriceScale {
        self.scale
    }

    pub fn open(&self, asset: usize) -> &[f64] {
        let n = self.n_days();
        &self.open[asset * n..(asset + 1) * n]
    }

    pub fn close(&self, asset: usize) -> &[f64] {
        let n = self.n_days();
        &self.close[asset * n..(asset + 1) * n]
    }

    pub fn volume(&self, asset: usize) -> &[f64] {
        let n = self.n_days();
        &self.volume[asset * n..(asset + 1) * n]
    }

    /// (open, close, volume) of one asset on one day.
    pub fn features(&self, asset: usize, day: usize) -> [f64; 3] {
        let k = asset * self.n_days() + day;
        [self.open[k], self.close[k], self.volume[k]]
    }

    pub fn asset_index(&self, id: &str) -> Option<usize> {
        self.assets.iter().position(|a| a == id)
    }

    /// Table restricted to the given assets, in the given order.
    pub fn select_assets(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Data("empty asset selection".into()));
        }
        let n = self.n_days();
        let mut out = Self {
            assets: Vec::with_capacity(indices.len()),
            dates: self.dates.clone(),
            open: Vec::with_capacity(indices.len() * n),
            close: Vec::with_capacity(indices.len() * n),
            volume: Vec::with_capacity(indices.len() * n),
            scale: self.scale,
        };
        for &i in indices {
            if i >= self.n_assets() {
                return Err(Error::Data(format!("asset index {i} out of range")));
            }
            out.assets.push(self.assets[i].clone());
            out.open.extend_from_slice(self.open(i));
            out.close.extend_from_slice(self.close(i));
            out.volume.extend_from_slice(self.volume(i));
        }
        out.validate()?;
        Ok(out)
    }

    /// The first `end` days of every asset.
    pub fn head_days(&self, end: usize) -> Result<Self> {
        if end == 0 || end > self.n_days() {
            return Err(Error::Data(format!("cannot keep {end} of {} days", self.n_days())));
        }
        let n = self.n_days();
        let cut = |v: &[f64]| -> Vec<f64> { v.chunks_exact(n).flat_map(|row| row[..end].iter().copied()).collect() };
        Ok(Self {
            assets: self.assets.clone(),
            dates: self.dates[..end].to_vec(),
            open: cut(&self.open),
            close: cut(&self.close),
            volume: cut(&self.volume),
            scale: self.scale,
        })
    }

    /// Multiplies one asset's open and close series by `factor`.
    pub fn scale_prices(&mut self, asset: usize, factor: f64) {
        let n = self.n_days();
        for k in asset * n..(asset + 1) * n {
            self.open[k] *= factor;
            self.close[k] *= factor;
        }
    }
}

/// CSV layouts accepted by [`load_price_table`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CsvSchema {
    /// One file with header `date,asset,open,close,volume`.
    #[default]
    Long,
    /// A directory holding `open.csv`, `close.csv` and `volume.csv`, each
    /// with header `date,<asset>,...`.
    Wide,
}

impl std::str::FromStr for CsvSchema {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "long" => Ok(CsvSchema::Long),
            "wide" => Ok(CsvSchema::Wide),
            other => Err(Error::Config(format!("unknown csv schema {other}"))),
        }
    }
}

/// A loaded table plus the assets dropped for incomplete histories.
#[derive(Debug, Clone)]
pub struct LoadedTable {
    pub table: PriceTable,
    pub dropped: Vec<String>,
}

impl LoadedTable {
    /// Writes `dropped_assets.txt`, one identifier per line.
    pub fn write_drop_report(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("dropped_assets.txt");
        let mut body = self.dropped.join("\n");
        if !body.is_empty() {
            body.push('\n');
        }
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

type Cells = BTreeMap<String, BTreeMap<NaiveDate, [Option<f64>; 3]>>;

fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT)
        .map_err(|e| Error::Data(format!("bad date {s:?}: {e}")))
}

fn parse_cell(s: &str) -> Result<Option<f64>> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("nan") || s.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|e| Error::Data(format!("bad number {s:?}: {e}")))
}

fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(f))
}

fn read_long(path: &Path, cells: &mut Cells, order: &mut Vec<String>) -> Result<()> {
    let mut rdr = open_csv(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != ["date", "asset", "open", "close", "volume"] {
        return Err(Error::Data(format!(
            "long schema header must be date,asset,open,close,volume; got {}",
            header.join(",")
        )));
    }
    let mut last: HashMap<String, NaiveDate> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let date = parse_date(&rec[0])?;
        let asset = rec[1].to_string();
        if let Some(prev) = last.get(&asset) {
            if date <= *prev {
                return Err(Error::Data(format!(
                    "non-monotone dates for asset {asset} at {date}"
                )));
            }
        }
        last.insert(asset.clone(), date);
        if !cells.contains_key(&asset) {
            order.push(asset.clone());
        }
        let v = [parse_cell(&rec[2])?, parse_cell(&rec[3])?, parse_cell(&rec[4])?];
        cells.entry(asset).or_default().insert(date, v);
    }
    Ok(())
}

fn read_wide_field(path: &Path, field: usize, cells: &mut Cells, order: &mut Vec<String>) -> Result<()> {
    let mut rdr = open_csv(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("date") || header.len() < 2 {
        return Err(Error::Data(format!(
            "wide schema header must start with date in {}",
            path.display()
        )));
    }
    let mut prev: Option<NaiveDate> = None;
    for rec in rdr.records() {
        let rec = rec?;
        let date = parse_date(&rec[0])?;
        if prev.is_some_and(|p| date <= p) {
            return Err(Error::Data(format!(
                "non-monotone dates in {} at {date}",
                path.display()
            )));
        }
        prev = Some(date);
        for (col, asset) in header.iter().enumerate().skip(1) {
            if !cells.contains_key(asset) {
                order.push(asset.clone());
            }
            let v = parse_cell(rec.get(col).unwrap_or(""))?;
            cells.entry(asset.clone()).or_default().entry(date).or_default()[field] = v;
        }
    }
    Ok(())
}

/// Loads a panel, keeping exactly the assets with complete histories.
pub fn load_price_table(path: &Path, schema: CsvSchema) -> Result<LoadedTable> {
    let mut cells = Cells::new();
    let mut order = Vec::new();
    match schema {
        CsvSchema::Long => read_long(path, &mut cells, &mut order)?,
        CsvSchema::Wide => {
            for (field, name) in ["open.csv", "close.csv", "volume.csv"].iter().enumerate() {
                read_wide_field(&path.join(name), field, &mut cells, &mut order)?;
            }
        }
    }
    for per_asset in cells.values() {
        for v in per_asset.values() {
            if v[0].is_some_and(|p| p <= 0.0) || v[1].is_some_and(|p| p <= 0.0) {
                return Err(Error::Data("non-positive price".into()));
            }
            if v[2].is_some_and(|p| p < 0.0) {
                return Err(Error::Data("negative volume".into()));
            }
        }
    }
    let dates: BTreeSet<NaiveDate> = cells.values().flat_map(|m| m.keys().copied()).collect();
    let dates: Vec<NaiveDate> = dates.into_iter().collect();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for asset in order {
        let per = &cells[&asset];
        let complete = dates
            .iter()
            .all(|d| per.get(d).is_some_and(|v| v.iter().all(Option::is_some)));
        if complete {
            kept.push(asset);
        } else {
            dropped.push(asset);
        }
    }
    if kept.is_empty() {
        return Err(Error::Data("no asset has a complete history".into()));
    }
    for d in &dropped {
        log::warn!("dropping asset {d}: incomplete history");
    }
    let n = dates.len();
    let mut open = Vec::with_capacity(kept.len() * n);
    let mut close = Vec::with_capacity(kept.len() * n);
    let mut volume = Vec::with_capacity(kept.len() * n);
    for asset in &kept {
        let per = &cells[asset];
        for d in &dates {
            let v = per[d];
            open.push(v[0].expect("complete"));
            close.push(v[1].expect("complete"));
            volume.push(v[2].expect("complete"));
        }
    }
    let table = PriceTable::new(kept, dates, open, close, volume)?;
    Ok(LoadedTable { table, dropped })
}

/// Writes a panel in either schema; [`load_price_table`] reads it back exactly.
pub fn save_price_table(table: &PriceTable, path: &Path, schema: CsvSchema) -> Result<()> {
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |e: csv::Error| match e.into_kind() {
            csv::ErrorKind::Io(e) => Error::io(p, e),
            other => Error::Data(format!("{other:?}")),
        }
    };
    match schema {
        CsvSchema::Long => {
            let mut w = csv::Writer::from_path(path).map_err(io(path))?;
            w.write_record(["date", "asset", "open", "close", "volume"])
                .map_err(io(path))?;
            for (d, date) in table.dates.iter().enumerate() {
                let ds = date.format(DATE_FORMAT).to_string();
                for a in 0..table.n_assets() {
                    let [o, c, v] = table.features(a, d);
                    w.write_record([
                        ds.clone(),
                        table.assets[a].clone(),
                        o.to_string(),
                        c.to_string(),
                        v.to_string(),
                    ])
                    .map_err(io(path))?;
                }
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        CsvSchema::Wide => {
            fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;
            for (field, name) in ["open.csv", "close.csv", "volume.csv"].iter().enumerate() {
                let fp = path.join(name);
                let mut w = csv::Writer::from_path(&fp).map_err(io(&fp))?;
                let mut header = vec!["date".to_string()];
                header.extend(table.assets.iter().cloned());
                w.write_record(&header).map_err(io(&fp))?;
                for (d, date) in table.dates.iter().enumerate() {
                    let mut row = vec![date.format(DATE_FORMAT).to_string()];
                    for a in 0..table.n_assets() {
                        row.push(table.features(a, d)[field].to_string());
                    }
                    w.write_record(&row).map_err(io(&fp))?;
                }
                w.flush().map_err(|e| Error::io(&fp, e))?;
            }
        }
    }
    Ok(())
}

/// Natural log of open/close, and `ln(1 + volume)` unless disabled.
pub fn log_normalize(table: &PriceTable, log_volume: bool) -> PriceTable {
    let mut out = table.clone();
    if table.scale == PriceScale::Log {
        return out;
    }
    out.open.iter_mut().for_each(|p| *p = p.ln());
    out.close.iter_mut().for_each(|p| *p = p.ln());
    if log_volume {
        out.volume.iter_mut().for_each(|v| *v = v.ln_1p());
    }
    out.scale = PriceScale::Log;
    out
}

/// Standardizes a log-scale table per asset and field with the mean and
/// standard deviation over `window`. Only `window` is read for the
/// statistics; constant rows are centered but not scaled.
pub fn standardize_features(table: &PriceTable, window: Range<usize>) -> Result<PriceTable> {
    if table.scale != PriceScale::Log {
        return Err(Error::Data("standardizing expects log-normalized features".into()));
    }
    if window.is_empty() || window.end > table.n_days() {
        return Err(Error::Data(format!("standardizing window {window:?} out of range")));
    }
    let mut out = table.clone();
    let n = table.n_days();
    let len = window.len() as f64;
    for field in [&mut out.open, &mut out.close, &mut out.volume] {
        for row in field.chunks_exact_mut(n) {
            let m = row[window.clone()].iter().sum::<f64>() / len;
            let var = row[window.clone()].iter().map(|v| (v - m) * (v - m)).sum::<f64>() / len;
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            row.iter_mut().for_each(|v| *v = (*v - m) / sd);
        }
    }
    Ok(out)
}

/// How raw prices become observation features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub log_volume: bool,
    /// Standardize with formation-window statistics after the log transform.
    pub standardize: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            log_volume: true,
            standardize: true,
        }
    }
}

/// Log-normalizes `raw` and, if configured, standardizes it on `formation`.
pub fn prepare_features(raw: &PriceTable, cfg: FeatureConfig, formation: Range<usize>) -> Result<PriceTable> {
    let logged = log_normalize(raw, cfg.log_volume);
    if cfg.standardize {
        standardize_features(&logged, formation)
    } else {
        Ok(logged)
    }
}

/// Contiguous formation, trading, validation and test windows, as half-open
/// day-index ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodSplit {
    pub formation: Range<usize>,
    pub trading: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

impl PeriodSplit {
    /// Tiles `[0, sum of lengths)` with the four windows in order.
    pub fn from_lengths(formation: usize, trading: usize, validation: usize, test: usize) -> Result<Self> {
        let a = formation;
        let b = a + trading;
        let c = b + validation;
        let d = c + test;
        let s = Self {
            formation: 0..a,
            trading: a..b,
            validation: b..c,
            test: c..d,
        };
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<()> {
        for (name, r) in self.named() {
            if r.is_empty() {
                return Err(Error::Data(format!("empty range: {name} window has no days")));
            }
        }
        Ok(())
    }

    pub fn named(&self) -> [(&'static str, &Range<usize>); 4] {
        [
            ("formation", &self.formation),
            ("trading", &self.trading),
            ("validation", &self.validation),
            ("test", &self.test),
        ]
    }

    pub fn n_days(&self) -> usize {
        self.test.end
    }

    pub fn period(&self, which: Period) -> Range<usize> {
        match which {
            Period::Formation => self.formation.clone(),
            Period::Trading => self.trading.clone(),
            Period::Validation => self.validation.clone(),
            Period::Test => self.test.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Period {
    Formation,
    Trading,
    Validation,
    Test,
}

impl std::str::FromStr for Period {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "formation" => Ok(Period::Formation),
            "trading" => Ok(Period::Trading),
            "validation" => Ok(Period::Validation),
            "test" => Ok(Period::Test),
            other => Err(Error::Config(format!("unknown period {other}"))),
        }
    }
}

/// Window fractions for [`split_periods`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitFractions {
    pub train: f64,
    pub formation: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.90,
            formation: 0.85,
            validation: 0.05,
            test: 0.05,
        }
    }
}

/// Floors the cumulative fractions left to right so the windows tile `[0, n)`.
pub fn split_periods(n_days: usize, fr: SplitFractions) -> Result<PeriodSplit> {
    let in_unit = |v: f64| v > 0.0 && v < 1.0;
    if ![fr.train, fr.formation, fr.validation, fr.test].into_iter().all(in_unit) {
        return Err(Error::Config("split fractions must lie in (0, 1)".into()));
    }
    if fr.formation >= fr.train {
        return Err(Error::Config("formation fraction must be below train fraction".into()));
    }
    if (fr.train + fr.validation + fr.test - 1.0).abs() > 1e-9 {
        return Err(Error::Config("split fractions must sum to 1".into()));
    }
    let n = n_days as f64;
    let cut = |f: f64| ((f * n) + 1e-9).floor() as usize;
    let a = cut(fr.formation);
    let b = cut(fr.train);
    let c = cut(fr.train + fr.validation);
    let s = PeriodSplit {
        formation: 0..a,
        trading: a..b,
        validation: b..c,
        test: c..n_days,
    };
    s.check()?;
    Ok(s)
}

/// A second near-identical pair whose spread is too small to trade through
/// costs: the most similar pair by price distance, yet not the profitable one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoySpec {
    pub pair: (usize, usize),
    pub ou_sigma: f64,
}

/// Parameters of the seeded synthetic universe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_assets: usize,
    pub n_days: usize,
    pub planted_pair: (usize, usize),
    pub factor_vol: f64,
    pub idio_vol: f64,
    pub ou_kappa: f64,
    pub ou_sigma: f64,
    pub initial_spread: f64,
    pub decoy: Option<DecoySpec>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_assets: 6,
            n_days: 4750,
            planted_pair: (0, 1),
            factor_vol: 0.01,
            idio_vol: 0.015,
            ou_kappa: 0.2,
            ou_sigma: 0.03,
            initial_spread: 0.0,
            decoy: None,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("invalid synthetic spec: {m}")));
        if self.n_assets < 3 {
            return bad("n_assets must be at least 3");
        }
        if self.n_days < 2 {
            return bad("n_days must be at least 2");
        }
        let pair_ok = |(i, j): (usize, usize)| i != j && i < self.n_assets && j < self.n_assets;
        if !pair_ok(self.planted_pair) {
            return bad("planted pair indices must be distinct and in range");
        }
        if !(self.factor_vol > 0.0 && self.idio_vol > 0.0 && self.ou_sigma >= 0.0) {
            return bad("volatilities must be positive");
        }
        if !(self.ou_kappa > 0.0 && self.ou_kappa < 1.0) {
            return bad("ou_kappa must lie in (0, 1)");
        }
        if let Some(d) = &self.decoy {
            let (pi, pj) = self.planted_pair;
            let (di, dj) = d.pair;
            if !pair_ok(d.pair) || [pi, pj].contains(&di) || [pi, pj].contains(&dj) {
                return bad("decoy pair must be distinct, in range and disjoint from the planted pair");
            }
            if d.ou_sigma < 0.0 {
                return bad("decoy ou_sigma must be non-negative");
            }
        }
        Ok(())
    }
}

fn business_days(n: usize) -> Vec<NaiveDate> {
    let mut d = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

/// Log-price paths of a co-moving pair: shared random-walk factor plus and
/// minus half of a discrete Ornstein–Uhlenbeck spread.
fn pair_paths(
    rng: &mut ChaCha8Rng,
    n: usize,
    base: f64,
    factor_vol: f64,
    kappa: f64,
    sigma: f64,
    s0: f64,
) -> (Vec<f64>, Vec<f64>) {
    let mut f = 0.0;
    let mut s = s0;
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for t in 0..n {
        if t > 0 {
            let e1: f64 = rng.sample(StandardNormal);
            let e2: f64 = rng.sample(StandardNormal);
            f += factor_vol * e1;
            s = (1.0 - kappa) * s + sigma * e2;
        }
        x.push(base + f + 0.5 * s);
        y.push(base + f - 0.5 * s);
    }
    (x, y)
}

/// Deterministic synthetic panel. The planted pair's log spread is a discrete
/// OU process; the optional decoy pair is built the same way with a tiny
/// spread; every other asset is an independent Gaussian random walk in log
/// price. Opens are the geometric midpoint of consecutive closes and volumes
/// are log-normal.
pub fn gen_synthetic_universe(spec: &SyntheticSpec) -> Result<PriceTable> {
    spec.validate()?;
    let n = spec.n_days;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let bases: Vec<f64> = (0..spec.n_assets)
        .map(|_| rng.random_range(20.0f64..100.0).ln())
        .collect();
    let mut log_close: Vec<Option<Vec<f64>>> = vec![None; spec.n_assets];
    let (pi, pj) = spec.planted_pair;
    let (x, y) = pair_paths(
        &mut rng,
        n,
        bases[pi],
        spec.factor_vol,
        spec.ou_kappa,
        spec.ou_sigma,
        spec.initial_spread,
    );
    log_close[pi] = Some(x);
    log_close[pj] = Some(y);
    if let Some(d) = &spec.decoy {
        let (x, y) = pair_paths(
            &mut rng,
            n,
            bases[d.pair.0],
            spec.factor_vol,
            spec.ou_kappa,
            d.ou_sigma,
            0.0,
        );
        log_close[d.pair.0] = Some(x);
        log_close[d.pair.1] = Some(y);
    }
    for (a, slot) in log_close.iter_mut().enumerate() {
        if slot.is_none() {
            let mut p = bases[a];
            let mut path = Vec::with_capacity(n);
            for t in 0..n {
                if t > 0 {
                    let e: f64 = rng.sample(StandardNormal);
                    p += spec.idio_vol * e;
                }
                path.push(p);
            }
            *slot = Some(path);
        }
    }
    let vol_dist = rand_distr::LogNormal::new(1e6f64.ln(), 0.25).expect("valid log-normal");
    let mut open = Vec::with_capacity(spec.n_assets * n);
    let mut close = Vec::with_capacity(spec.n_assets * n);
    let mut volume = Vec::with_capacity(spec.n_assets * n);
    for path in log_close.iter().flatten() {
        for t in 0..n {
            let prev = if t == 0 { path[0] } else { path[t - 1] };
            open.push((0.5 * (prev + path[t])).exp());
            close.push(path[t].exp());
        }
    }
    for _ in 0..spec.n_assets * n {
        volume.push(vol_dist.sample(&mut rng).round());
    }
    let assets = (0..spec.n_assets).map(|i| format!("A{i:02}")).collect();
    PriceTable::new(assets, business_days(n), open, close, volume)
}
