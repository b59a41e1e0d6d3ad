use resfault::config::RunConfig;
use resfault::data::{GroundTruth, UnitSeries};
use resfault::experiment::{evaluate_fleet, realisation_data, train_model, Fleet};
use resfault::hi::HiKind;
use resfault::io::{load_checkpoint, load_csv, save_checkpoint, save_csv, TrainingMeta};
use resfault::models::ModelKind;
use resfault::synth::{gen_fleet, SynthConfig};

fn small_cfg(seed: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.seed = seed;
    cfg.synth = SynthConfig {
        n_units: 3,
        cycles_per_unit: 60,
        rows_per_cycle: 120,
        ..Default::default()
    };
    cfg.train.epochs = 25;
    cfg
}

fn fleet(cfg: &RunConfig) -> (Vec<UnitSeries>, Vec<GroundTruth>) {
    let units = gen_fleet(&cfg.synth_config()).unwrap();
    (
        units.iter().map(|u| u.series.clone()).collect(),
        units.iter().map(|u| u.truth.clone()).collect(),
    )
}

#[test]
fn synthetic_csv_round_trips() {
    let cfg = small_cfg(1);
    let (raw, truths) = fleet(&cfg);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fleet.csv");
    save_csv(&path, &raw, &cfg.schema).unwrap();
    let back = load_csv(&path, &cfg.schema).unwrap();
    assert_eq!(back.len(), raw.len());
    for ((b, r), t) in back.into_iter().zip(&raw).zip(&truths) {
        assert_eq!(&b.with_dataset_id(t.family.clone()), r);
    }
}

#[test]
fn drift_free_fleet_raises_no_alarm() {
    let mut cfg = small_cfg(2);
    cfg.synth.drift_scale = 0.0;
    let (raw, truths) = fleet(&cfg);
    let fleet = Fleet::prepare(&raw, &truths, &cfg.preprocess).unwrap();
    let data = realisation_data(&fleet, &cfg, 0).unwrap();
    for kind in [ModelKind::Ae, ModelKind::Oc] {
        let (model, _) = train_model(kind, &data, &cfg.train_config(0)).unwrap();
        for hi in [HiKind::Aggregated, HiKind::Sensorwise] {
            let combo = evaluate_fleet(&model, &data, &fleet, hi, &cfg).unwrap();
            let alarms: Vec<_> = combo.units.iter().filter_map(|u| u.report.alarm_cycle).collect();
            assert!(alarms.is_empty(), "{kind} {hi}: {alarms:?}");
        }
    }
}

#[test]
fn shorter_wait_never_alarms_later() {
    let cfg = small_cfg(3);
    let (raw, truths) = fleet(&cfg);
    let fleet = Fleet::prepare(&raw, &truths, &cfg.preprocess).unwrap();
    let data = realisation_data(&fleet, &cfg, 0).unwrap();
    let (model, _) = train_model(ModelKind::Oc, &data, &cfg.train_config(0)).unwrap();
    for hi in [HiKind::Aggregated, HiKind::Sensorwise] {
        let mut quick = cfg.clone();
        quick.detect.n_wait = 1;
        let a = evaluate_fleet(&model, &data, &fleet, hi, &quick).unwrap();
        let b = evaluate_fleet(&model, &data, &fleet, hi, &cfg).unwrap();
        for (u1, u3) in a.units.iter().zip(&b.units) {
            match (u1.report.alarm_cycle, u3.report.alarm_cycle) {
                (Some(x), Some(y)) => assert!(x <= y),
                (None, Some(_)) => panic!("alarm with n_wait 3 but not 1"),
                _ => {}
            }
        }
    }
}

#[test]
fn noiseless_fleet_is_learned_closely() {
    let mut noisy = small_cfg(4);
    noisy.synth.drift_scale = 0.0;
    noisy.train.epochs = 70;
    let mut clean = noisy.clone();
    clean.synth.noise_std = 0.0;
    let loss = |cfg: &RunConfig, kind| {
        let (raw, truths) = fleet(cfg);
        let fleet = Fleet::prepare(&raw, &truths, &cfg.preprocess).unwrap();
        let data = realisation_data(&fleet, cfg, 0).unwrap();
        let (_, history) = train_model(kind, &data, &cfg.train_config(0)).unwrap();
        history.best().val_loss
    };
    let (clean_oc, noisy_oc) = (loss(&clean, ModelKind::Oc), loss(&noisy, ModelKind::Oc));
    assert!(clean_oc < 0.05, "noiseless regression loss {clean_oc}");
    assert!(clean_oc < 0.2 * noisy_oc, "{clean_oc} vs {noisy_oc}");
    // Reconstruction beats predicting the mean (18 unit-variance channels).
    assert!(loss(&clean, ModelKind::Ae) < 18.0);
}

#[test]
fn trained_checkpoint_reproduces_detection() {
    let cfg = small_cfg(5);
    let (raw, truths) = fleet(&cfg);
    let fleet = Fleet::prepare(&raw, &truths, &cfg.preprocess).unwrap();
    let data = realisation_data(&fleet, &cfg, 0).unwrap();
    let train_cfg = cfg.train_config(0);
    let (model, history) = train_model(ModelKind::Ae, &data, &train_cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ae.ckpt");
    save_checkpoint(&path, &model, &TrainingMeta::from_history(train_cfg.seed, &history)).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back.meta.epochs_run, history.epochs.len());
    let a = evaluate_fleet(&model, &data, &fleet, HiKind::Sensorwise, &cfg).unwrap();
    let b = evaluate_fleet(&back.model, &data, &fleet, HiKind::Sensorwise, &cfg).unwrap();
    assert_eq!(a, b);
}
