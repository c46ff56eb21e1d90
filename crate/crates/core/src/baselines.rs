//! Classical pair selection (distance, correlation, Engle–Granger
//! cointegration) and the fixed-threshold spread trader.

use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{PriceScale, PriceTable};
use crate::env::{PairOption, TradeAction, TradingEnv, TrajectoryRow, EnvConfig};
use crate::error::{Error, Result};

/// Whether the squared-distance score is averaged or summed over days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMode {
    #[default]
    Mean,
    Sum,
}

/// `p_t / p_0`.
pub fn normalize_to_unit_start(prices: &[f64]) -> Result<Vec<f64>> {
    let p0 = *prices
        .first()
        .ok_or_else(|| Error::Data("cannot normalize an empty series".into()))?;
    if !(p0 > 0.0) {
        return Err(Error::Data(format!("first price must be positive, got {p0}")));
    }
    Ok(prices.iter().map(|p| p / p0).collect())
}

/// Squared distance between two paths that are already normalized.
pub fn squared_distance(a: &[f64], b: &[f64], mode: DistanceMode) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape("series lengths differ or are empty".into()));
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(match mode {
        DistanceMode::Mean => sum / a.len() as f64,
        DistanceMode::Sum => sum,
    })
}

/// Squared distance between two unit-start-normalized price paths.
pub fn ssd_score(a: &[f64], b: &[f64], mode: DistanceMode) -> Result<f64> {
    squared_distance(&normalize_to_unit_start(a)?, &normalize_to_unit_start(b)?, mode)
}

fn all_pairs(n: usize) -> Result<Vec<PairOption>> {
    if n < 2 {
        return Err(Error::Data(format!("pair selection needs at least 2 assets, got {n}")));
    }
    Ok(PairOption::all(n))
}

fn check_window(table: &PriceTable, window: &Range<usize>) -> Result<()> {
    if window.is_empty() || window.end > table.n_days() {
        return Err(Error::Data(format!(
            "window {window:?} invalid for {} days",
            table.n_days()
        )));
    }
    Ok(())
}

/// Pairs ranked by ascending distance; ties keep flat-index order.
pub fn ssd_select(
    table: &PriceTable,
    formation: Range<usize>,
    mode: DistanceMode,
) -> Result<Vec<(PairOption, f64)>> {
    check_window(table, &formation)?;
    let mut out = all_pairs(table.n_assets())?
        .into_par_iter()
        .map(|o| {
            let s = ssd_score(
                &table.close(o.i)[formation.clone()],
                &table.close(o.j)[formation.clone()],
                mode,
            )?;
            Ok((o, s))
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(out)
}

/// Close-to-close simple returns.
pub fn simple_returns(prices: &[f64]) -> Vec<f64> {
    prices.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa > 0.0 && sbb > 0.0 {
        Some(sab / (saa.sqrt() * sbb.sqrt()))
    } else {
        None
    }
}

/// Pairs ranked by descending return correlation. Assets with flat returns
/// are left out.
pub fn corr_select(table: &PriceTable, formation: Range<usize>) -> Result<Vec<(PairOption, f64)>> {
    check_window(table, &formation)?;
    if formation.len() < 3 {
        return Err(Error::Data("correlation needs at least 3 formation days".into()));
    }
    let returns: Vec<Vec<f64>> = (0..table.n_assets())
        .map(|a| simple_returns(&table.close(a)[formation.clone()]))
        .collect();
    let mut flat = vec![false; returns.len()];
    for (a, r) in returns.iter().enumerate() {
        if r.iter().all(|v| *v == r[0]) {
            log::warn!("asset {} has zero return variance; excluded", table.assets()[a]);
            flat[a] = true;
        }
    }
    let mut out: Vec<(PairOption, f64)> = all_pairs(table.n_assets())?
        .into_par_iter()
        .filter(|o| !flat[o.i] && !flat[o.j])
        .filter_map(|o| pearson(&returns[o.i], &returns[o.j]).map(|r| (o, r)))
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(out)
}

/// Symmetric positive-definite solve via Cholesky; `None` if not SPD.
fn cholesky(a: &[f64], k: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut s = a[i * k + j];
            for p in 0..j {
                s -= l[i * k + p] * l[j * k + p];
            }
            if i == j {
                // relative pivot guard against numerically singular designs
                if !(s > 1e-12 * a[i * k + i].abs().max(f64::MIN_POSITIVE)) {
                    return None;
                }
                l[i * k + i] = s.sqrt();
            } else {
                l[i * k + j] = s / l[j * k + j];
            }
        }
    }
    Some(l)
}

fn chol_solve(l: &[f64], k: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; k];
    for i in 0..k {
        let mut s = b[i];
        for p in 0..i {
            s -= l[i * k + p] * y[p];
        }
        y[i] = s / l[i * k + i];
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = y[i];
        for p in i + 1..k {
            s -= l[p * k + i] * x[p];
        }
        x[i] = s / l[i * k + i];
    }
    x
}

/// Ordinary least squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coef: Vec<f64>,
    pub std_err: Vec<f64>,
    pub ssr: f64,
    pub nobs: usize,
}

impl OlsFit {
    pub fn t_value(&self, i: usize) -> f64 {
        self.coef[i] / self.std_err[i]
    }

    /// Gaussian AIC, `−2·llf + 2k`.
    pub fn aic(&self) -> f64 {
        aic(self.ssr, self.nobs, self.coef.len())
    }
}

fn aic(ssr: f64, nobs: usize, k: usize) -> f64 {
    let n = nobs as f64;
    let llf = -n / 2.0 * ((2.0 * std::f64::consts::PI).ln() + (ssr / n).ln() + 1.0);
    -2.0 * llf + 2.0 * k as f64
}

/// Cross products of a row-major design `x` [n × k] with itself and `y`.
fn cross_products(x: &[f64], y: &[f64], k: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let mut xtx = vec![0.0; k * k];
    let mut xty = vec![0.0; k];
    for (row, yv) in x.chunks_exact(k).zip(y) {
        for i in 0..k {
            xty[i] += row[i] * yv;
            for j in 0..=i {
                xtx[i * k + j] += row[i] * row[j];
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            xtx[j * k + i] = xtx[i * k + j];
        }
    }
    (xtx, xty, y.iter().map(|v| v * v).sum())
}

fn leading(m: &[f64], k: usize, p: usize) -> Vec<f64> {
    (0..p).flat_map(|i| m[i * k..i * k + p].to_vec()).collect()
}

/// OLS of `y` on a row-major design [n × k].
pub fn ols(x: &[f64], y: &[f64], k: usize) -> Result<OlsFit> {
    let n = y.len();
    if x.len() != n * k || n <= k {
        return Err(Error::Shape(format!("design {}x{k} with {n} observations", x.len() / k.max(1))));
    }
    let (xtx, xty, _) = cross_products(x, y, k);
    let l = cholesky(&xtx, k).ok_or_else(|| Error::Numeric("singular design matrix".into()))?;
    let coef = chol_solve(&l, k, &xty);
    let ssr: f64 = x
        .chunks_exact(k)
        .zip(y)
        .map(|(row, yv)| {
            let fit: f64 = row.iter().zip(&coef).map(|(a, b)| a * b).sum();
            (yv - fit) * (yv - fit)
        })
        .sum();
    let sigma2 = ssr / (n - k) as f64;
    let std_err = (0..k)
        .map(|i| {
            let mut e = vec![0.0; k];
            e[i] = 1.0;
            (sigma2 * chol_solve(&l, k, &e)[i]).sqrt()
        })
        .collect();
    Ok(OlsFit {
        coef,
        std_err,
        ssr,
        nobs: n,
    })
}

/// Design for `Δs_t = ρ·s_{t−1} + Σ_{k≤lags} φ_k Δs_{t−k} + δ` on the last
/// `nobs` usable observations. Columns: level, lagged differences, constant.
fn adf_design(s: &[f64], lags: usize, nobs: usize) -> (Vec<f64>, Vec<f64>) {
    let d: Vec<f64> = s.windows(2).map(|w| w[1] - w[0]).collect();
    let k = lags + 2;
    let mut x = Vec::with_capacity(nobs * k);
    let mut y = Vec::with_capacity(nobs);
    for t in d.len() - nobs..d.len() {
        x.push(s[t]);
        for l in 1..=lags {
            x.push(d[t - l]);
        }
        x.push(1.0);
        y.push(d[t]);
    }
    (x, y)
}

/// Default lag cap `⌊12·(n/100)^¼⌋`.
pub fn default_max_lag(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    pub statistic: f64,
    pub lag: usize,
    pub nobs: usize,
}

/// Augmented Dickey–Fuller t-statistic with a constant. The lag is picked
/// by AIC over `0..=max_lag` on a common sample, then the regression is
/// refit on every observation the chosen lag allows.
pub fn adf_statistic(series: &[f64], max_lag: usize) -> Result<AdfResult> {
    if series.len() <= max_lag + 2 {
        return Err(Error::Data(format!(
            "ADF needs more than {} observations, got {}",
            max_lag + 2,
            series.len()
        )));
    }
    let common = series.len() - 1 - max_lag;
    if common <= max_lag + 2 {
        return Err(Error::Data("series too short for the lag cap".into()));
    }
    // All candidate lags share one sample; reorder columns so each candidate
    // is a leading block: constant, level, then lags.
    let (x, y) = adf_design(series, max_lag, common);
    let k = max_lag + 2;
    let reordered: Vec<f64> = x
        .chunks_exact(k)
        .flat_map(|row| {
            std::iter::once(row[k - 1])
                .chain(std::iter::once(row[0]))
                .chain(row[1..k - 1].iter().copied())
        })
        .collect();
    let (xtx, xty, yty) = cross_products(&reordered, &y, k);
    let mut best: Option<(f64, usize)> = None;
    for lags in 0..=max_lag {
        let p = lags + 2;
        let sub = leading(&xtx, k, p);
        let Some(l) = cholesky(&sub, p) else { continue };
        let b = chol_solve(&l, p, &xty[..p]);
        let ssr = (yty - b.iter().zip(&xty[..p]).map(|(u, v)| u * v).sum::<f64>()).max(0.0);
        let ic = aic(ssr, common, p);
        if best.is_none_or(|(v, _)| ic < v) {
            best = Some((ic, lags));
        }
    }
    let (_, lag) = best.ok_or_else(|| Error::Numeric("singular design matrix".into()))?;
    let nobs = series.len() - 1 - lag;
    let (x, y) = adf_design(series, lag, nobs);
    let fit = ols(&x, &y, lag + 2)?;
    Ok(AdfResult {
        statistic: fit.t_value(0),
        lag,
        nobs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Significance {
    #[serde(rename = "1%")]
    P1,
    #[default]
    #[serde(rename = "5%")]
    P5,
    #[serde(rename = "10%")]
    P10,
}

impl FromStr for Significance {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim_end_matches('%') {
            "1" => Ok(Self::P1),
            "5" => Ok(Self::P5),
            "10" => Ok(Self::P10),
            other => Err(Error::Config(format!("unknown significance level {other}"))),
        }
    }
}

/// Which table of critical values the residual test is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalValues {
    /// Unit-root test on an observed series, constant only.
    DickeyFuller,
    /// Residuals of an estimated two-variable cointegrating regression.
    #[default]
    EngleGranger,
}

impl CriticalValues {
    /// MacKinnon (1994/2010) asymptotic values.
    pub fn value(self, level: Significance) -> f64 {
        match (self, level) {
            (Self::DickeyFuller, Significance::P1) => -3.43,
            (Self::DickeyFuller, Significance::P5) => -2.86,
            (Self::DickeyFuller, Significance::P10) => -2.57,
            (Self::EngleGranger, Significance::P1) => -3.90,
            (Self::EngleGranger, Significance::P5) => -3.34,
            (Self::EngleGranger, Significance::P10) => -3.04,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CointResult {
    pub adf_statistic: f64,
    pub lags: usize,
    pub beta: f64,
    pub alpha: f64,
    pub reject: bool,
    /// Residuals (or the regressor) had no variation; the pair is untestable.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CointConfig {
    pub significance: Significance,
    pub critical: CriticalValues,
    /// `None` uses [`default_max_lag`].
    pub max_lag: Option<usize>,
}

impl Default for CointConfig {
    fn default() -> Self {
        Self {
            significance: Significance::P5,
            critical: CriticalValues::EngleGranger,
            max_lag: None,
        }
    }
}

fn log_close(table: &PriceTable, asset: usize, window: &Range<usize>) -> Vec<f64> {
    let c = &table.close(asset)[window.clone()];
    match table.scale() {
        PriceScale::Raw => c.iter().map(|p| p.ln()).collect(),
        PriceScale::Log => c.to_vec(),
    }
}

/// Intercept and slope of `y = α + β·x`; `None` when `x` is flat.
fn simple_regression(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    if !(sxx > 0.0) {
        return None;
    }
    let beta = sxy / sxx;
    Some((my - beta * mx, beta))
}

/// Two-step Engle–Granger test of one pair: OLS of log close of `j` on log
/// close of `i`, then ADF on the residuals.
pub fn coint_test(
    table: &PriceTable,
    pair: PairOption,
    formation: &Range<usize>,
    cfg: &CointConfig,
) -> Result<CointResult> {
    let x = log_close(table, pair.i, formation);
    let y = log_close(table, pair.j, formation);
    let degenerate = CointResult {
        adf_statistic: f64::NAN,
        lags: 0,
        beta: f64::NAN,
        alpha: f64::NAN,
        reject: false,
        degenerate: true,
    };
    let Some((alpha, beta)) = simple_regression(&x, &y) else {
        return Ok(degenerate);
    };
    let resid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| b - alpha - beta * a).collect();
    let scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    if resid.iter().all(|r| r.abs() <= 1e-10 * scale) {
        return Ok(CointResult { alpha, beta, ..degenerate });
    }
    let max_lag = cfg.max_lag.unwrap_or_else(|| default_max_lag(resid.len()));
    let adf = match adf_statistic(&resid, max_lag) {
        Ok(a) => a,
        Err(Error::Numeric(_)) => return Ok(CointResult { alpha, beta, ..degenerate }),
        Err(e) => return Err(e),
    };
    Ok(CointResult {
        adf_statistic: adf.statistic,
        lags: adf.lag,
        beta,
        alpha,
        reject: adf.statistic < cfg.critical.value(cfg.significance),
        degenerate: false,
    })
}

/// Pairs ranked by ascending ADF statistic; degenerate pairs go last.
pub fn coint_select(
    table: &PriceTable,
    formation: Range<usize>,
    cfg: &CointConfig,
) -> Result<Vec<(PairOption, CointResult)>> {
    check_window(table, &formation)?;
    let mut out = all_pairs(table.n_assets())?
        .into_par_iter()
        .map(|o| Ok((o, coint_test(table, o, &formation, cfg)?)))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| match (a.1.degenerate, b.1.degenerate) {
        (false, false) => a.1.adf_statistic.total_cmp(&b.1.adf_statistic),
        (x, y) => x.cmp(&y),
    });
    Ok(out)
}

/// The pair a cointegration scan trades: the best rejecting pair, else the
/// best overall.
pub fn coint_choice(ranking: &[(PairOption, CointResult)]) -> Result<(PairOption, CointResult)> {
    if let Some(hit) = ranking.iter().find(|(_, r)| r.reject) {
        return Ok(*hit);
    }
    let first = ranking
        .iter()
        .find(|(_, r)| !r.degenerate)
        .ok_or_else(|| Error::Numeric("every pair is degenerate".into()))?;
    log::warn!(
        "no pair rejects the unit root; using ({}, {})",
        first.0.i,
        first.0.j
    );
    Ok(*first)
}

/// One row of `pair_ranking.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankingRow {
    pub i: usize,
    pub j: usize,
    pub method: String,
    pub score: f64,
    pub reject: Option<bool>,
}

pub fn write_pair_ranking(path: &Path, rows: &[RankingRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpreadKind {
    /// `p_i/p_i0 − p_j/p_j0` over unit-start-normalized closes.
    NormalizedDiff,
    /// `β·ln p_i + α − ln p_j` from the cointegrating regression.
    OlsResidual,
}

/// A spread fitted on the formation window. Oriented so that a high value
/// means leg X (the pair's `i`) is rich relative to leg Y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadModel {
    pub kind: SpreadKind,
    pub beta: f64,
    pub alpha: f64,
    pub mu: f64,
    pub sigma: f64,
    /// Formation-start closes used for normalization.
    pub anchor: (f64, f64),
}

impl SpreadModel {
    pub fn fit(kind: SpreadKind, raw: &PriceTable, pair: PairOption, formation: Range<usize>) -> Result<Self> {
        check_window(raw, &formation)?;
        if raw.scale() != PriceScale::Raw {
            return Err(Error::Data("spread models need raw prices".into()));
        }
        let anchor = (raw.close(pair.i)[formation.start], raw.close(pair.j)[formation.start]);
        let (alpha, beta) = match kind {
            SpreadKind::NormalizedDiff => (0.0, 1.0),
            SpreadKind::OlsResidual => {
                let x = log_close(raw, pair.i, &formation);
                let y = log_close(raw, pair.j, &formation);
                simple_regression(&x, &y)
                    .ok_or_else(|| Error::Numeric("degenerate spread".into()))?
            }
        };
        let mut model = Self {
            kind,
            beta,
            alpha,
            mu: 0.0,
            sigma: 0.0,
            anchor,
        };
        let s: Vec<f64> = formation.map(|d| model.spread(raw, pair, d)).collect();
        let n = s.len() as f64;
        model.mu = s.iter().sum::<f64>() / n;
        model.sigma = (s.iter().map(|v| (v - model.mu) * (v - model.mu)).sum::<f64>() / n).sqrt();
        let scale = model.mu.abs().max(1.0);
        if !(model.sigma > 1e-12 * scale) {
            return Err(Error::Numeric("degenerate spread".into()));
        }
        Ok(model)
    }

    pub fn spread(&self, raw: &PriceTable, pair: PairOption, day: usize) -> f64 {
        let (pi, pj) = (raw.close(pair.i)[day], raw.close(pair.j)[day]);
        match self.kind {
            SpreadKind::NormalizedDiff => pi / self.anchor.0 - pj / self.anchor.1,
            SpreadKind::OlsResidual => self.beta * pi.ln() + self.alpha - pj.ln(),
        }
    }

    pub fn z_score(&self, raw: &PriceTable, pair: PairOption, day: usize) -> f64 {
        (self.spread(raw, pair, day) - self.mu) / self.sigma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdConfig {
    pub k_open: f64,
    pub k_close: f64,
    pub spread: SpreadKind,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            k_open: 2.0,
            k_close: 0.0,
            spread: SpreadKind::NormalizedDiff,
        }
    }
}

/// Position rule on a z-score path: open against a ±`k_open` breach, close
/// once the score crosses back through ±`k_close`, otherwise hold.
pub fn threshold_actions(z: &[f64], k_open: f64, k_close: f64) -> Vec<TradeAction> {
    let mut pos = TradeAction::Clear;
    z.iter()
        .map(|&zt| {
            pos = match pos {
                TradeAction::Clear if zt > k_open => TradeAction::Short,
                TradeAction::Clear if zt < -k_open => TradeAction::Long,
                TradeAction::Short if zt <= k_close => TradeAction::Clear,
                TradeAction::Long if zt >= -k_close => TradeAction::Clear,
                held => held,
            };
            pos
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdOutcome {
    /// Decision per period day, taken on that day's close.
    pub actions: Vec<TradeAction>,
    pub rewards: Vec<f64>,
    pub trajectory: Vec<TrajectoryRow>,
}

/// Trades `pair` over `period` with the threshold rule. The decision on day
/// `t` is submitted with the day-`t` observation, so accounting runs
/// through [`TradingEnv`].
pub fn threshold_trade(
    pair: PairOption,
    model: &SpreadModel,
    raw: &PriceTable,
    features: &PriceTable,
    period: Range<usize>,
    cfg: &ThresholdConfig,
    env_cfg: EnvConfig,
) -> Result<ThresholdOutcome> {
    if !(model.sigma > 0.0) {
        return Err(Error::Numeric("degenerate spread".into()));
    }
    let z: Vec<f64> = period.clone().map(|d| model.z_score(raw, pair, d)).collect();
    let actions = threshold_actions(&z, cfg.k_open, cfg.k_close);
    let (mut env, _) = TradingEnv::reset(pair, raw, features, period, env_cfg)?;
    for a in &actions {
        if env.is_done() {
            break;
        }
        env.step(*a)?;
    }
    let trajectory = env.trajectory().to_vec();
    Ok(ThresholdOutcome {
        actions,
        rewards: trajectory.iter().map(|r| r.reward).collect(),
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use TradeAction::{Clear as C, Long as L, Short as S};

    #[test]
    fn unit_start_examples() {
        assert_eq!(normalize_to_unit_start(&[3.0; 4]).unwrap(), vec![1.0; 4]);
        assert_eq!(normalize_to_unit_start(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(normalize_to_unit_start(&[4.0, 2.0]).unwrap(), vec![1.0, 0.5]);
        assert!(normalize_to_unit_start(&[]).is_err());
    }

    #[test]
    fn ssd_examples() {
        let a = [1.0, 1.3, 0.8, 1.1];
        let b: Vec<f64> = a.iter().map(|v| v - 0.1).collect();
        assert!((squared_distance(&a, &b, DistanceMode::Mean).unwrap() - 0.01).abs() < 1e-15);
        assert!((squared_distance(&a, &b, DistanceMode::Sum).unwrap() - 0.04).abs() < 1e-15);
        let scaled: Vec<f64> = a.iter().map(|v| v * 7.5).collect();
        assert_eq!(ssd_score(&a, &scaled, DistanceMode::Mean).unwrap(), 0.0);
    }

    #[test]
    fn threshold_rule_trace() {
        let a = threshold_actions(&[0.0, 2.5, 1.0, -0.1, 0.0], 2.0, 0.0);
        assert_eq!(a, vec![C, S, S, C, C]);
        let a = threshold_actions(&[-2.1, -1.0, 0.3, 1.9], 2.0, 0.0);
        assert_eq!(a, vec![L, L, C, C]);
        assert!(threshold_actions(&[1.9, -1.9, 0.0], 2.0, 0.0).iter().all(|a| *a == C));
    }

    #[test]
    fn significance_parsing() {
        assert_eq!("5%".parse::<Significance>().unwrap(), Significance::P5);
        assert_eq!("1".parse::<Significance>().unwrap(), Significance::P1);
        assert!("2%".parse::<Significance>().is_err());
    }

    #[test]
    fn ols_recovers_exact_line() {
        let x: Vec<f64> = (0..10).flat_map(|i| [i as f64, 1.0]).collect();
        let y: Vec<f64> = (0..10).map(|i| 3.0 * i as f64 - 2.0).collect();
        let fit = ols(&x, &y, 2).unwrap();
        assert!((fit.coef[0] - 3.0).abs() < 1e-12 && (fit.coef[1] + 2.0).abs() < 1e-12);
        let singular: Vec<f64> = (0..10).flat_map(|i| [i as f64, 2.0 * i as f64]).collect();
        assert!(matches!(ols(&singular, &y, 2), Err(Error::Numeric(_))));
    }
}
