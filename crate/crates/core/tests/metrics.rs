mod common;

use common::market::brute_force_mdd;
use proptest::prelude::*;
use trials::metrics::*;

fn returns() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.2f64..0.2, 1..120)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn drawdown_scan_equals_brute_force(r in returns()) {
        prop_assert_eq!(max_drawdown(&r).unwrap(), brute_force_mdd(&r));
    }

    #[test]
    fn report_signs(r in prop::collection::vec(-0.2f64..0.2, 2..120)) {
        let m = MetricsReport::compute(&r, 0.0, &MetricsConfig::default()).unwrap();
        prop_assert!(m.mdd <= 0.0);
        prop_assert!(m.av >= 0.0);
        prop_assert_eq!(m.n_days, r.len());
    }

    #[test]
    fn repeating_a_year_keeps_its_annualized_return(r in prop::collection::vec(-0.05f64..0.05, 252)) {
        let twice: Vec<f64> = r.iter().chain(&r).copied().collect();
        let a = annualized_return(&r).unwrap();
        let b = annualized_return(&twice).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn sharpe_is_scale_free_at_zero_rate(r in prop::collection::vec(-0.05f64..0.05, 3..60), k in 0.1f64..10.0) {
        let cfg = MetricsConfig { risk_free: 0.0, ..Default::default() };
        let scaled: Vec<f64> = r.iter().map(|v| v * k).collect();
        if let (Ok(a), Ok(b)) = (sharpe(&r, &cfg), sharpe(&scaled, &cfg)) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }
}

#[test]
fn hand_checked_values() {
    let ar = annualized_return(&[0.001; 252]).unwrap();
    assert!((ar - (1.001f64.powi(252) - 1.0)).abs() < 1e-12);
    let single = annualized_return(&[0.01]).unwrap();
    assert!((single - (1.01f64.powi(252) - 1.0)).abs() < 1e-9);
    let av = annualized_vol(&[0.01, -0.01]).unwrap();
    assert!((av - 0.02f64.sqrt() * 0.1 * 252f64.sqrt()).abs() < 1e-12);
    let cfg = MetricsConfig { sr_annualize: false, ..Default::default() };
    let sr = sharpe(&[0.02, 0.0], &cfg).unwrap();
    assert!((sr - (0.01 - 0.000085) / 0.0002f64.sqrt()).abs() < 1e-12);
}

#[test]
fn degenerate_inputs() {
    let cfg = MetricsConfig::default();
    assert!(sharpe(&[0.01], &cfg).is_err());
    assert!(annualized_return(&[]).is_err());
    assert!(max_drawdown(&[]).is_err());
    assert!(annualized_vol(&[0.1]).is_err());
    assert!(annualized_return(&[0.1, -1.0]).is_err());
}
