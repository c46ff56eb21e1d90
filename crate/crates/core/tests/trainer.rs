use trials::data::*;
use trials::env::PairOption;
use trials::manager::ManagerArch;
use trials::metrics::MetricsConfig;
use trials::trainer::*;
use trials::worker::WorkerArch;

fn split() -> PeriodSplit {
    PeriodSplit::from_lengths(300, 60, 40, 40).unwrap()
}

fn raw(seed: u64) -> PriceTable {
    gen_synthetic_universe(&SyntheticSpec {
        n_assets: 4,
        n_days: 440,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn tiny_cfg() -> TrainConfig {
    TrainConfig {
        iterations: 6,
        inner_episodes: 2,
        lr_h: 1e-2,
        lr_l: 1e-2,
        eval_cadence: 2,
        episode_len: Some(40),
        worker: WorkerArch {
            d_h: 4,
            lookback: Some(4),
            ..Default::default()
        },
        manager: ManagerArch {
            d_h: 4,
            window: Some(60),
            ..Default::default()
        },
        ..Default::default()
    }
}

/// Multiplies every price from `from` on by a day- and asset-dependent factor.
fn perturb_after(t: &PriceTable, from: usize) -> PriceTable {
    let n = t.n_days();
    let bend = |a: usize, series: &[f64]| -> Vec<f64> {
        series
            .iter()
            .enumerate()
            .map(|(d, v)| if d >= from { v * (1.0 + 0.03 * (((d * 7 + a * 3) % 5) as f64 - 2.0)) } else { *v })
            .collect()
    };
    let (mut o, mut c, mut v) = (Vec::new(), Vec::new(), Vec::new());
    for a in 0..t.n_assets() {
        o.extend(bend(a, t.open(a)));
        c.extend(bend(a, t.close(a)));
        v.extend(t.volume(a)[..n].iter().copied());
    }
    PriceTable::new(t.assets().to_vec(), t.dates().to_vec(), o, c, v).unwrap()
}

fn features(t: &PriceTable) -> PriceTable {
    prepare_features(t, FeatureConfig::default(), split().formation).unwrap()
}

#[test]
fn training_is_deterministic() {
    let r = raw(1);
    let f = features(&r);
    let market = MarketView::new(&r, &f).unwrap();
    let a = train(market, &split(), &tiny_cfg()).unwrap();
    let b = train(market, &split(), &tiny_cfg()).unwrap();
    assert_eq!(a.log.to_jsonl().unwrap(), b.log.to_jsonl().unwrap());
    assert_eq!(a.manager, b.manager);
    assert_eq!(a.worker, b.worker);
    assert_eq!(a.log.len(), 6);
    assert_eq!(a.snapshots.iter().map(|s| s.iteration).collect::<Vec<_>>(), [1, 3, 5]);
}

#[test]
fn days_after_trading_are_never_read() {
    let r = raw(2);
    let late = perturb_after(&r, split().trading.end);
    let (f, fl) = (features(&r), features(&late));
    let a = train(MarketView::new(&r, &f).unwrap(), &split(), &tiny_cfg()).unwrap();
    let b = train(MarketView::new(&late, &fl).unwrap(), &split(), &tiny_cfg()).unwrap();
    assert_eq!(a.log.to_jsonl().unwrap(), b.log.to_jsonl().unwrap());
    assert_eq!(a.worker, b.worker);
}

#[test]
fn trading_days_reach_only_the_manager() {
    // with a frozen manager the option sequence is fixed, so the worker's
    // whole history must ignore the trading window
    let cfg = TrainConfig { lr_h: 0.0, ..tiny_cfg() };
    let r = raw(3);
    let moved = perturb_after(&r, split().trading.start);
    let (f, fm) = (features(&r), features(&moved));
    let a = train(MarketView::new(&r, &f).unwrap(), &split(), &cfg).unwrap();
    let b = train(MarketView::new(&moved, &fm).unwrap(), &split(), &cfg).unwrap();
    assert_eq!(a.worker, b.worker);
    for (x, y) in a.log.records.iter().zip(&b.log.records) {
        assert_eq!(x.option, y.option);
        assert_eq!(x.intrinsic_returns, y.intrinsic_returns);
        assert_eq!(x.worker, y.worker);
    }
    let differs = a
        .log
        .records
        .iter()
        .zip(&b.log.records)
        .any(|(x, y)| x.extrinsic_reward != y.extrinsic_reward);
    assert!(differs);
}

#[test]
fn worker_only_training_reads_the_formation_window() {
    let r = raw(4);
    let moved = perturb_after(&r, split().formation.end);
    let (f, fm) = (features(&r), features(&moved));
    let pair = PairOption::new(0, 1, 4).unwrap();
    let (a, ra) = train_worker_on_pair(MarketView::new(&r, &f).unwrap(), &split(), pair, &tiny_cfg()).unwrap();
    let (b, rb) = train_worker_on_pair(MarketView::new(&moved, &fm).unwrap(), &split(), pair, &tiny_cfg()).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    assert_eq!(ra.len(), 12);
}

#[test]
fn logged_rewards_match_snapshot_replays() {
    let r = raw(5);
    let f = features(&r);
    let market = MarketView::new(&r, &f).unwrap();
    let cfg = tiny_cfg();
    let out = train(market, &split(), &cfg).unwrap();
    assert_eq!(out.snapshots.len(), 3);
    for s in &out.snapshots {
        let rec = &out.log.records[s.iteration];
        let option = PairOption::new(rec.option.i, rec.option.j, 4).unwrap();
        let mut worker = s.worker.clone();
        let (_, ret) = trading_reward(&mut worker, market, &split(), option, &cfg).unwrap();
        assert_eq!(ret.profit, rec.extrinsic_reward);
        let report = evaluate_worker_on_pair(
            &s.worker,
            market,
            &split(),
            option,
            1.0,
            split().trading,
            &cfg,
            &MetricsConfig::default(),
        )
        .unwrap();
        assert!((report.profit - rec.extrinsic_reward).abs() < 1e-12);
    }
}

#[test]
fn snapshots_round_trip_through_disk() {
    let r = raw(6);
    let f = features(&r);
    let out = train(MarketView::new(&r, &f).unwrap(), &split(), &tiny_cfg()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    persist(&out, dir.path(), serde_json::json!({"tag": 7})).unwrap();
    let last = out.snapshots.last().unwrap();
    let (back, extra) = Snapshot::load(&dir.path().join(format!("snapshot_{:05}.psnap", last.iteration))).unwrap();
    assert_eq!(back.iteration, last.iteration);
    assert_eq!(back.manager, last.manager);
    assert_eq!(back.worker, last.worker);
    assert_eq!(extra["tag"], 7);
    let lines = std::fs::read_to_string(dir.path().join("train_log.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 6);
}

#[test]
fn invalid_settings_are_config_errors() {
    let r = raw(7);
    let f = features(&r);
    let market = MarketView::new(&r, &f).unwrap();
    for cfg in [
        TrainConfig { iterations: 0, ..tiny_cfg() },
        TrainConfig { gamma: 1.5, ..tiny_cfg() },
        TrainConfig { lr_l: -1.0, ..tiny_cfg() },
        TrainConfig { episode_len: Some(1), ..tiny_cfg() },
    ] {
        assert_eq!(train(market, &split(), &cfg).unwrap_err().exit_code(), 1);
    }
    let short = r.head_days(330).unwrap();
    let fs = features(&short);
    let e = train(MarketView::new(&short, &fs).unwrap(), &split(), &tiny_cfg()).unwrap_err();
    assert_eq!(e.exit_code(), 2);
}
