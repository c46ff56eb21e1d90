//! Backtest measures over a daily return series.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::baselines::{ssd_score, DistanceMode};
use crate::data::PriceTable;
use crate::env::PairOption;
use crate::error::{Error, Result};

/// Daily risk-free rate.
pub const RISK_FREE_DAILY: f64 = 0.000085;
pub const TRADING_DAYS: f64 = 252.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub risk_free: f64,
    pub periods_per_year: f64,
    pub sr_annualize: bool,
    pub distance: DistanceMode,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            risk_free: RISK_FREE_DAILY,
            periods_per_year: TRADING_DAYS,
            sr_annualize: true,
            distance: DistanceMode::Mean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sr: f64,
    pub ar: f64,
    pub mdd: f64,
    pub av: f64,
    pub ed: f64,
    pub n_days: usize,
    pub r_f: f64,
}

impl MetricsReport {
    /// All five measures. A flat series has no defined Sharpe ratio; it is
    /// reported as 0.
    pub fn compute(returns: &[f64], ed: f64, cfg: &MetricsConfig) -> Result<Self> {
        let sr = match sharpe(returns, cfg) {
            Ok(v) => v,
            Err(Error::Numeric(_)) if returns.len() >= 2 => 0.0,
            Err(e) => return Err(e),
        };
        Ok(Self {
            sr,
            ar: annualized_return_with(returns, cfg.periods_per_year)?,
            mdd: max_drawdown(returns)?,
            av: annualized_vol_with(returns, cfg.periods_per_year)?,
            ed,
            n_days: returns.len(),
            r_f: cfg.risk_free,
        })
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (n − 1).
pub fn sample_std(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)).sqrt()
}

/// `(mean − r_f) / std`, times `√252` when annualizing.
pub fn sharpe(returns: &[f64], cfg: &MetricsConfig) -> Result<f64> {
    if returns.len() < 2 {
        return Err(Error::Data("Sharpe ratio needs at least 2 returns".into()));
    }
    let sd = sample_std(returns);
    if !(sd > 0.0) {
        return Err(Error::Numeric("zero dispersion".into()));
    }
    let sr = (mean(returns) - cfg.risk_free) / sd;
    Ok(if cfg.sr_annualize {
        sr * cfg.periods_per_year.sqrt()
    } else {
        sr
    })
}

/// `∏(1 + r)^(252/n) − 1`.
pub fn annualized_return(returns: &[f64]) -> Result<f64> {
    annualized_return_with(returns, TRADING_DAYS)
}

fn annualized_return_with(returns: &[f64], per_year: f64) -> Result<f64> {
    if returns.is_empty() {
        return Err(Error::Data("annualized return of an empty series".into()));
    }
    if returns.iter().any(|r| *r <= -1.0) {
        return Err(Error::Numeric("return at or below -100%".into()));
    }
    let log_growth: f64 = returns.iter().map(|r| r.ln_1p()).sum();
    Ok((log_growth * per_year / returns.len() as f64).exp_m1())
}

/// Worst peak-to-trough loss of the wealth path, as a non-positive number.
/// The path starts at wealth 1 before the first return.
pub fn max_drawdown(returns: &[f64]) -> Result<f64> {
    if returns.is_empty() {
        return Err(Error::Data("max drawdown of an empty series".into()));
    }
    let mut wealth = 1.0;
    let mut peak: f64 = 1.0;
    let mut worst: f64 = 0.0;
    for r in returns {
        wealth *= 1.0 + r;
        peak = peak.max(wealth);
        worst = worst.min(wealth / peak - 1.0);
    }
    Ok(worst)
}

/// Sample standard deviation times `√252`.
pub fn annualized_vol(returns: &[f64]) -> Result<f64> {
    annualized_vol_with(returns, TRADING_DAYS)
}

fn annualized_vol_with(returns: &[f64], per_year: f64) -> Result<f64> {
    if returns.len() < 2 {
        return Err(Error::Data("volatility needs at least 2 returns".into()));
    }
    Ok(sample_std(returns) * per_year.sqrt())
}

/// Distance of a pair's normalized close paths over `window`.
pub fn euclid_distance(
    table: &PriceTable,
    pair: PairOption,
    window: Range<usize>,
    mode: DistanceMode,
) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::Data("empty distance window".into()));
    }
    ssd_score(
        &table.close(pair.i)[window.clone()],
        &table.close(pair.j)[window],
        mode,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sharpe_examples() {
        let cfg = MetricsConfig::default();
        assert!(matches!(sharpe(&[0.01; 5], &cfg), Err(Error::Numeric(_))));
        let sr = sharpe(&[0.01, -0.01], &cfg).unwrap();
        let expected = -0.000085 / 0.0002f64.sqrt() * 252f64.sqrt();
        assert!((sr - expected).abs() < 1e-12);
        assert!((sr + 0.0954).abs() < 1e-4);
        let at_rf = [0.000085 + 0.01, 0.000085 - 0.01];
        assert!(sharpe(&at_rf, &cfg).unwrap().abs() < 1e-12);
    }

    #[test]
    fn annualized_return_examples() {
        assert_eq!(annualized_return(&[0.0; 10]).unwrap(), 0.0);
        let ar = annualized_return(&[0.001; 252]).unwrap();
        assert!((ar - (1.001f64.powi(252) - 1.0)).abs() < 1e-12);
        let one = annualized_return(&[0.01]).unwrap();
        assert!((one - (1.01f64.powi(252) - 1.0)).abs() < 1e-9);
        assert!(annualized_return(&[-1.0]).is_err());
    }

    #[test]
    fn drawdown_examples() {
        assert_eq!(max_drawdown(&[0.01, 0.02, 0.0]).unwrap(), 0.0);
        let r = [0.0, 0.1, 0.99 / 1.1 - 1.0, 1.05 / 0.99 - 1.0];
        assert!((max_drawdown(&r).unwrap() + 0.1).abs() < 1e-12);
        assert_eq!(max_drawdown(&[-0.5]).unwrap(), -0.5);
    }

    #[test]
    fn vol_examples() {
        assert_eq!(annualized_vol(&[0.003; 4]).unwrap(), 0.0);
        let av = annualized_vol(&[0.01, -0.01]).unwrap();
        assert!((av - 0.2245).abs() < 1e-4);
        let doubled = annualized_vol(&[0.02, -0.02]).unwrap();
        assert!((doubled - 2.0 * av).abs() < 1e-15);
    }

    #[test]
    fn flat_series_report() {
        let m = MetricsReport::compute(&[0.0; 20], 0.0, &MetricsConfig::default()).unwrap();
        assert_eq!((m.sr, m.ar, m.mdd, m.av), (0.0, 0.0, 0.0, 0.0));
    }
}
