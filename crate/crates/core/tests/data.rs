use std::fs;

use proptest::prelude::*;
use trials::data::*;
use trials::Error;

fn small_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        n_days: 60,
        seed,
        ..Default::default()
    }
}

#[test]
fn long_and_wide_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let t = gen_synthetic_universe(&small_spec(4)).unwrap();
    let long = dir.path().join("panel.csv");
    save_price_table(&t, &long, CsvSchema::Long).unwrap();
    let back = load_price_table(&long, CsvSchema::Long).unwrap();
    assert!(back.dropped.is_empty());
    assert_eq!(back.table, t);
    let wide = dir.path().join("wide");
    save_price_table(&t, &wide, CsvSchema::Wide).unwrap();
    assert_eq!(load_price_table(&wide, CsvSchema::Wide).unwrap().table, t);
}

#[test]
fn incomplete_assets_are_dropped_and_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    fs::write(
        &path,
        "date,asset,open,close,volume\n\
         2020-01-02,AAA,10,10.5,100\n\
         2020-01-02,BBB,20,20.5,100\n\
         2020-01-02,CCC,5,5.1,100\n\
         2020-01-03,AAA,10.5,10.7,120\n\
         2020-01-03,BBB,20.5,,110\n\
         2020-01-03,CCC,5.1,5.2,90\n\
         2020-01-06,AAA,10.7,10.6,100\n\
         2020-01-06,CCC,5.2,5.0,80\n",
    )
    .unwrap();
    let loaded = load_price_table(&path, CsvSchema::Long).unwrap();
    assert_eq!(loaded.table.assets(), ["AAA", "CCC"]);
    assert_eq!(loaded.table.n_days(), 3);
    assert_eq!(loaded.dropped, ["BBB"]);
    let report = loaded.write_drop_report(dir.path()).unwrap();
    assert_eq!(fs::read_to_string(report).unwrap(), "BBB\n");
}

#[test]
fn malformed_inputs_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    fs::write(&path, "date,asset,open,close,volume\n2020-01-03,A,1,1,1\n2020-01-02,A,1,1,1\n").unwrap();
    let e = load_price_table(&path, CsvSchema::Long).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    fs::write(&path, "day,asset,open,close,volume\n").unwrap();
    assert!(matches!(load_price_table(&path, CsvSchema::Long), Err(Error::Data(_))));
    fs::write(&path, "date,asset,open,close,volume\n2020-01-02,A,1,-1,1\n").unwrap();
    assert!(matches!(load_price_table(&path, CsvSchema::Long), Err(Error::Data(_))));
    let missing = load_price_table(&dir.path().join("none.csv"), CsvSchema::Long).unwrap_err();
    assert_eq!(missing.exit_code(), 2);
}

#[test]
fn standardized_window_has_zero_mean_unit_variance() {
    let raw = gen_synthetic_universe(&small_spec(9)).unwrap();
    let f = prepare_features(&raw, FeatureConfig::default(), 10..40).unwrap();
    for a in 0..f.n_assets() {
        for series in [f.open(a), f.close(a), f.volume(a)] {
            let w = &series[10..40];
            let m = w.iter().sum::<f64>() / 30.0;
            let v = w.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 30.0;
            assert!(m.abs() < 1e-10);
            assert!((v - 1.0).abs() < 1e-10);
        }
    }
    assert!(standardize_features(&raw, 0..10).is_err());
    let logged = log_normalize(&raw, true);
    assert!(standardize_features(&logged, 50..61).is_err());
}

#[test]
fn planted_spread_reverts_and_others_wander() {
    let raw = gen_synthetic_universe(&SyntheticSpec::default()).unwrap();
    let spread: Vec<f64> = (0..raw.n_days()).map(|d| raw.close(0)[d].ln() - raw.close(1)[d].ln()).collect();
    let m = spread.iter().sum::<f64>() / spread.len() as f64;
    let sd = (spread.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / spread.len() as f64).sqrt();
    let spec = SyntheticSpec::default();
    let stationary = spec.ou_sigma / (1.0 - (1.0 - spec.ou_kappa).powi(2)).sqrt();
    assert!((sd / stationary - 1.0).abs() < 0.2, "{sd} vs {stationary}");
    let other: Vec<f64> = (0..raw.n_days()).map(|d| raw.close(2)[d].ln() - raw.close(3)[d].ln()).collect();
    let mo = other.iter().sum::<f64>() / other.len() as f64;
    let sdo = (other.iter().map(|s| (s - mo) * (s - mo)).sum::<f64>() / other.len() as f64).sqrt();
    assert!(sdo > 5.0 * sd);
}

#[test]
fn synthetic_csv_matches_generator() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(21);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    save_price_table(&gen_synthetic_universe(&spec).unwrap(), &a, CsvSchema::Long).unwrap();
    save_price_table(&gen_synthetic_universe(&spec).unwrap(), &b, CsvSchema::Long).unwrap();
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

proptest! {
    #[test]
    fn features_ignore_days_after_the_window(seed in 0u64..50, cut in 20usize..50) {
        let raw = gen_synthetic_universe(&small_spec(seed)).unwrap();
        let full = prepare_features(&raw, FeatureConfig::default(), 0..cut).unwrap();
        let head = prepare_features(&raw.head_days(cut).unwrap(), FeatureConfig::default(), 0..cut).unwrap();
        for a in 0..raw.n_assets() {
            prop_assert_eq!(&full.close(a)[..cut], head.close(a));
            prop_assert_eq!(&full.volume(a)[..cut], head.volume(a));
        }
    }

    #[test]
    fn fractions_tile_the_panel(n in 200usize..10_000) {
        let s = split_periods(n, SplitFractions::default()).unwrap();
        prop_assert_eq!(s.formation.start, 0);
        prop_assert_eq!(s.formation.end, s.trading.start);
        prop_assert_eq!(s.trading.end, s.validation.start);
        prop_assert_eq!(s.validation.end, s.test.start);
        prop_assert_eq!(s.test.end, n);
    }
}
