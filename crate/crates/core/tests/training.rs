mod common;

use common::Synthetic;
use gaitnet::training::TrainLog;
use gaitnet::windowing::{materialize_fold, WindowParams, WindowSet};
use gaitnet::{build_folds, ModelConfig, Network, SensorChannel, Task, TrainConfig, Trainer};

fn fold() -> (WindowSet, WindowSet) {
    let ds = Synthetic {
        subjects_per_group: 3,
        timesteps: 200,
        ..Synthetic::default()
    }
    .dataset();
    let plan = build_folds(&ds, 3, 1).unwrap();
    materialize_fold(&ds, &plan, 0, &WindowParams::default()).unwrap()
}

fn train(seed: u64) -> (Network, TrainLog) {
    let (train, val) = fold();
    let model = ModelConfig {
        channels: vec![SensorChannel::L4, SensorChannel::R4],
        ..ModelConfig::new(Task::Detection)
    };
    let cfg = TrainConfig {
        batch_size: 4,
        patience: 1,
        lr_halvings: 1,
        max_epochs_per_round: 3,
        seed,
        ..TrainConfig::default()
    };
    Trainer::new(model, cfg).run(&train, &val).unwrap()
}

fn without_wallclock(log: &TrainLog) -> TrainLog {
    let mut log = log.clone();
    for r in &mut log.records {
        r.wallclock_s = 0.0;
    }
    log
}

#[test]
fn same_seed_gives_identical_weights_and_log() {
    let (a, log_a) = train(9);
    let (b, log_b) = train(9);
    assert_eq!(a.params(), b.params());
    assert_eq!(without_wallclock(&log_a), without_wallclock(&log_b));
}

#[test]
fn seed_changes_the_run() {
    let (a, _) = train(9);
    let (b, _) = train(10);
    assert_ne!(a.params(), b.params());
}

#[test]
fn log_tracks_rounds_and_halved_rates() {
    let (_, log) = train(2);
    assert_eq!(log.round_ends.len(), 2);
    let rounds: Vec<usize> = log.records.iter().map(|r| r.round).collect();
    assert!(rounds.windows(2).all(|w| w[0] <= w[1]));
    for r in &log.records {
        assert_eq!(r.lr, 1e-3 / f64::from(1u32 << r.round));
        assert_eq!(
            r.epoch,
            log.records.iter().position(|q| q == r).unwrap() + 1
        );
    }
    let csv = log.to_csv();
    assert_eq!(csv.lines().count(), log.records.len() + 1);
}

#[test]
fn invalid_config_is_rejected() {
    let (train, val) = fold();
    let cfg = TrainConfig {
        batch_size: 0,
        ..TrainConfig::default()
    };
    assert!(Trainer::new(ModelConfig::new(Task::Detection), cfg)
        .run(&train, &val)
        .is_err());
}
