mod common;

use brushgan::train::{
    epoch_order, read_metrics, Checkpoint, LrDecay, RunOutput, TrainConfig, Trainer,
};
use brushgan::nn::StyleMode;
use brushgan::{Error, TrainingSample};

fn refs(samples: &[TrainingSample]) -> Vec<&TrainingSample> {
    samples.iter().collect()
}

fn fingerprints(t: &Trainer) -> (u64, u64) {
    (
        t.generator().params().fingerprint().unwrap(),
        t.discriminator().params().fingerprint().unwrap(),
    )
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let samples = common::toy_samples(4, 2);
    let mut t = Trainer::new(TrainConfig {
        lr_initial: 0.0,
        ..common::toy_config(2)
    })
    .unwrap();
    let before = fingerprints(&t);
    let report = t.train_step(&refs(&samples)).unwrap();
    assert!(report.is_finite());
    assert_eq!(fingerprints(&t), before);
}

#[test]
fn generator_updates_per_discriminator_update() {
    let samples = common::toy_samples(4, 2);
    let batch = refs(&samples);
    for ratio in [1, 2, 3] {
        let mut t = Trainer::new(TrainConfig {
            g_steps_per_d_step: ratio,
            ..common::toy_config(2)
        })
        .unwrap();
        for step in 1..=2u64 {
            t.train_step(&batch[..2]).unwrap();
            assert_eq!(t.update_counts(), (ratio as u64 * step, step));
        }
        assert_eq!(t.progress().step, 2);
    }
}

#[test]
fn updates_touch_only_their_own_network() {
    let samples = common::toy_samples(4, 2);
    let batch = refs(&samples);
    let mut t = Trainer::new(common::toy_config(2)).unwrap();

    let (g0, d0) = fingerprints(&t);
    let parts = t.discriminator_update(&batch).unwrap();
    assert!(parts.d_adv > 0.0 && parts.category_real > 0.0);
    let (g1, d1) = fingerprints(&t);
    assert_eq!(g1, g0);
    assert_ne!(d1, d0);

    let parts = t.generator_update(&batch).unwrap();
    assert!(parts.pixel > 0.0 && parts.g_adv > 0.0);
    let (g2, d2) = fingerprints(&t);
    assert_ne!(g2, g1);
    assert_eq!(d2, d1);
    assert_eq!(t.update_counts(), (1, 1));
}

#[test]
fn toy_run_bookkeeping() {
    let samples = common::toy_samples(12, 2);
    let dir = tempfile::tempdir().unwrap();
    let out = RunOutput::new(dir.path()).unwrap();
    let mut t = Trainer::new(common::toy_config(2)).unwrap();
    t.train(&samples, Some(&out), None).unwrap();

    assert_eq!(t.progress().step, 6);
    assert_eq!(t.update_counts(), (12, 6));
    let lines = read_metrics(&out.metrics_path()).unwrap();
    assert_eq!(lines.len(), 6);
    for (i, line) in lines.iter().enumerate() {
        let fields: Vec<&str> = line.split(' ').collect();
        assert_eq!(fields.len(), 8, "{line}");
        assert_eq!(fields[0], (i + 1).to_string());
        assert_eq!(fields[1], (i / 3 + 1).to_string());
        assert_eq!(fields[7], "0.001");
        assert!(fields[2..7].iter().all(|f| f.parse::<f64>().unwrap().is_finite()));
    }
    let ckpts: Vec<_> = std::fs::read_dir(dir.path().join("checkpoints"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(ckpts.len(), 2);
    assert!(out.epoch_checkpoint(1).exists() && out.epoch_checkpoint(2).exists());

    let last = Checkpoint::load(&out.last_checkpoint()).unwrap();
    assert_eq!(last.progress.step, 6);
    assert_eq!(last.progress.epoch, 3);
    assert_eq!((last.g_updates, last.d_updates), (12, 6));
    let restored = Trainer::from_checkpoint(&last, None).unwrap();
    assert_eq!(fingerprints(&restored), fingerprints(&t));

    // an architecture change is refused rather than adapted
    let other = TrainConfig {
        components_enabled: false,
        ..common::toy_config(2)
    };
    assert!(Trainer::from_checkpoint(&last, Some(&other)).is_err());
}

#[test]
fn partial_final_batch_is_trained() {
    let samples = common::toy_samples(6, 2);
    let mut t = Trainer::new(TrainConfig {
        epochs: 1,
        ..common::toy_config(2)
    })
    .unwrap();
    t.train(&samples, None, None).unwrap();
    assert_eq!(t.progress().step, 2);
}

#[test]
fn epoch_order_is_a_seeded_permutation() {
    let a = epoch_order(7, 1, 12);
    assert_eq!(a, epoch_order(7, 1, 12));
    assert_ne!(a, epoch_order(7, 2, 12));
    assert_ne!(a, epoch_order(8, 1, 12));
    let mut sorted = a.clone();
    sorted.sort();
    assert_eq!(sorted, (0..12).collect::<Vec<_>>());
}

#[test]
fn learning_rate_schedule() {
    let cfg = TrainConfig::default();
    assert_eq!(cfg.lr_at(1).unwrap(), 0.001);
    assert_eq!(cfg.lr_at(20).unwrap(), 0.001);
    assert_eq!(cfg.lr_at(22).unwrap(), 0.00025);
    assert!(matches!(cfg.lr_at(0), Err(Error::Range { .. })));
    assert!(matches!(cfg.lr_at(41), Err(Error::Range { .. })));
    for decay in [LrDecay::PerEpoch, LrDecay::Single] {
        let cfg = TrainConfig {
            lr_decay: decay,
            ..TrainConfig::default()
        };
        let lrs: Vec<f64> = (1..=40).map(|e| cfg.lr_at(e).unwrap()).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn mode_flags_set_the_condition_length() {
    let single = TrainConfig {
        style_mode: StyleMode::Disabled,
        styles_count: 1,
        ..TrainConfig::default()
    };
    assert_eq!(single.network().condition_len(), 768);
    let ablated = TrainConfig {
        components_enabled: false,
        ..TrainConfig::default()
    };
    assert_eq!(ablated.network().condition_len(), 519);
}

#[test]
fn config_file_round_trip_and_overrides() {
    let cfg = common::toy_config(3);
    let text = cfg.to_toml();
    assert_eq!(TrainConfig::from_toml(&text).unwrap(), cfg);

    let mut c = cfg.clone();
    c.set("seed", "42").unwrap();
    c.set("style_mode", "embedding").unwrap();
    assert_eq!((c.seed, c.style_mode), (42, StyleMode::Embedding));
    assert!(c.set("no_such_key", "1").is_err());
    assert!(c.set("batch_size", "0").is_err());
    assert!(TrainConfig::from_toml("batch_size = 4\nbogus = 1\n").is_err());
    assert!(TrainConfig::from_toml("lr_initial = -1.0\n").is_err());
}

#[test]
fn empty_inputs_are_rejected() {
    let mut t = Trainer::new(common::toy_config(2)).unwrap();
    assert!(t.train_step(&[]).is_err());
    assert!(t.train(&[], None, None).is_err());
}
