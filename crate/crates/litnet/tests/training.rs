//! Optimizer unit behavior and end-to-end training loop properties:
//! hand-checked Adam updates, determinism, exact resume, and the
//! validation/error surface of the data pipeline.

use litnet::checkpoint::{load_checkpoint, save_checkpoint, to_bytes, Checkpoint};
use litnet::error::Error;
use litnet::image_io::{save_image, Image};
use litnet::loss::LossConfig;
use litnet::model::{LitNet, ModelConfig, TaskMode};
use litnet::nn::{ParamKind, ParamStore};
use litnet::synth::DegradationParams;
use litnet::tensor::{ops, Tape, Tensor};
use litnet::train::{train, Adam, DataSource, TrainConfig};

fn toy_cfg() -> ModelConfig {
    ModelConfig {
        base_width: 2,
        fc_width: 8,
        ..ModelConfig::default()
    }
}

fn tiny_train_cfg() -> TrainConfig {
    TrainConfig {
        batch_size: 2,
        max_steps: 3,
        seed: 11,
        data: DataSource::Synthetic {
            count: 3,
            width: 16,
            height: 16,
            params: DegradationParams::default(),
        },
        ..TrainConfig::default()
    }
}

/// Single-parameter store plus a loss whose gradient is exactly 1 per
/// element: `sum(p)`.
fn unit_gradient_step(store: &ParamStore<f64>, adam: &mut Adam<f64>) {
    let tape = Tape::new();
    let binding = store.bind(&tape).unwrap();
    let id = store.ids_of_kind(ParamKind::Trainable)[0];
    let p = binding.tracked(id).unwrap().clone();
    let loss = ops::sum_all(&p).unwrap();
    let grads = loss.backward().unwrap();
    adam.apply(store, &binding, &grads).unwrap();
}

#[test]
fn adam_matches_the_hand_computed_recurrence() {
    let store = ParamStore::<f64>::new();
    let id = store
        .register("p", ParamKind::Trainable, Tensor::from_vec([1], vec![0.0]).unwrap())
        .unwrap();
    let (lr, b1, b2, eps) = (1e-3, 0.9, 0.999, 1e-8);
    let mut adam = Adam::<f64>::new(lr, b1, b2, eps);

    // Scalar reference computed side by side, g = 1 every step.
    let (mut m, mut v, mut want) = (0.0f64, 0.0f64, 0.0f64);
    for t in 1..=3u32 {
        unit_gradient_step(&store, &mut adam);
        m = b1 * m + (1.0 - b1);
        v = b2 * v + (1.0 - b2);
        let m_hat = m / (1.0 - b1.powi(t as i32));
        let v_hat = v / (1.0 - b2.powi(t as i32));
        want -= lr * m_hat / (v_hat.sqrt() + eps);
        let got = store.get(id).data()[0];
        assert!(
            (got - want).abs() < 1e-15,
            "step {t}: got {got}, want {want}"
        );
    }
    // First step lands at -lr/(1+eps) up to f64 rounding.
    assert!((store.get(id).data()[0] + 3.0 * (1e-3 / (1.0 + 1e-8))).abs() < 1e-9);
    assert_eq!(adam.step_count(), 3);
}

#[test]
fn adam_with_zero_gradients_is_an_exact_fixed_point() {
    let store = ParamStore::<f64>::new();
    let init = vec![0.3, -0.7, 1.25];
    let id = store
        .register("p", ParamKind::Trainable, Tensor::from_vec([3], init.clone()).unwrap())
        .unwrap();
    let mut adam = Adam::<f64>::new(1e-2, 0.9, 0.999, 1e-8);

    for _ in 0..4 {
        let tape = Tape::new();
        let binding = store.bind(&tape).unwrap();
        let p = binding.tracked(id).unwrap().clone();
        let loss = ops::scale(&ops::sum_all(&p).unwrap(), 0.0).unwrap();
        let grads = loss.backward().unwrap();
        adam.apply(&store, &binding, &grads).unwrap();
    }

    // 0/(sqrt(0)+eps) = 0, so the parameter must not move at all.
    assert_eq!(store.get(id).data(), &init[..]);
    let state = adam.state(&store);
    assert_eq!(state.step, 4);
    assert!(state.moments[0].1.iter().all(|&m| m == 0.0));
    assert!(state.moments[0].2.iter().all(|&v| v == 0.0));
}

#[test]
fn adam_names_the_parameter_a_gradient_never_reached() {
    let store = ParamStore::<f64>::new();
    let used = store
        .register("used", ParamKind::Trainable, Tensor::from_vec([2], vec![0.1, 0.2]).unwrap())
        .unwrap();
    store
        .register("unused", ParamKind::Trainable, Tensor::from_vec([1], vec![0.5]).unwrap())
        .unwrap();

    let tape = Tape::new();
    let binding = store.bind(&tape).unwrap();
    let p = binding.tracked(used).unwrap().clone();
    let grads = ops::sum_all(&p).unwrap().backward().unwrap();

    let mut adam = Adam::<f64>::new(1e-3, 0.9, 0.999, 1e-8);
    match adam.apply(&store, &binding, &grads) {
        Err(Error::MissingGradient(name)) => assert_eq!(name, "unused"),
        other => panic!("expected MissingGradient, got {other:?}"),
    }
}

#[test]
fn buffers_carry_no_optimizer_moments() {
    let store = ParamStore::<f64>::new();
    store
        .register("w", ParamKind::Trainable, Tensor::from_vec([2], vec![1.0, 2.0]).unwrap())
        .unwrap();
    store
        .register("bn.running_mean", ParamKind::Buffer, Tensor::from_vec([2], vec![0.0, 0.0]).unwrap())
        .unwrap();

    let mut adam = Adam::<f64>::new(1e-3, 0.9, 0.999, 1e-8);
    let id = store.ids_of_kind(ParamKind::Trainable)[0];
    let tape = Tape::new();
    let binding = store.bind(&tape).unwrap();
    let p = binding.tracked(id).unwrap().clone();
    let grads = ops::sum_all(&p).unwrap().backward().unwrap();
    adam.apply(&store, &binding, &grads).unwrap();

    let state = adam.state(&store);
    assert_eq!(state.moments.len(), 1);
    assert_eq!(state.moments[0].0, "w");
    // The buffer itself is untouched by the optimizer.
    assert_eq!(store.get_by_name("bn.running_mean").unwrap().data(), &[0.0, 0.0]);
}

#[test]
fn training_reduces_the_loss_and_logs_every_step() {
    // Full batch (batch == count) so step losses are directly comparable;
    // the learning rate is sized to the toy model to avoid the large
    // first-step Adam transient.
    let cfg = TrainConfig {
        lr: 1e-5,
        max_steps: 25,
        data: DataSource::Synthetic {
            count: 2,
            width: 16,
            height: 16,
            params: DegradationParams::default(),
        },
        ..tiny_train_cfg()
    };
    let mut log = Vec::new();
    let outcome = train(&cfg, &toy_cfg(), &LossConfig::default(), None, &mut log).unwrap();

    let text = String::from_utf8(log).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 25);
    let mut first = f64::NAN;
    for (i, line) in lines.iter().enumerate() {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols.len(), 5, "line {i}: {line}");
        assert_eq!(cols[0].parse::<usize>().unwrap(), i + 1);
        let l_t: f64 = cols[1].parse().unwrap();
        assert!(l_t.is_finite());
        if i == 0 {
            first = l_t;
        }
    }
    let last: f64 = lines.last().unwrap().split('\t').nth(1).unwrap().parse().unwrap();
    assert!(
        last < first,
        "loss should fall on a tiny fixed set: first {first}, last {last}"
    );
    assert_eq!(outcome.steps, 25);
    assert!((outcome.final_loss - last).abs() < 1e-6);

    // Buffers (BN running stats) moved during training but hold no moments.
    let ckpt = outcome.checkpoint;
    let opt = ckpt.optimizer.as_ref().unwrap();
    let trainable = ckpt
        .params
        .iter()
        .filter(|(_, kind, _)| *kind == ParamKind::Trainable)
        .count();
    assert_eq!(opt.moments.len(), trainable);
    assert!(opt.moments.iter().all(|(name, _, _)| !name.contains("running")));
    let fresh = LitNet::<f32>::new(toy_cfg(), cfg.seed).unwrap();
    let moved = ckpt.params.iter().any(|(name, kind, t)| {
        *kind == ParamKind::Buffer
            && name.ends_with("running_mean")
            && fresh.store().get_by_name(name).unwrap().data() != t.data()
    });
    assert!(moved, "train-mode batch norm should update running statistics");
}

#[test]
fn identical_configurations_train_identically() {
    let cfg = tiny_train_cfg();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();

    let mut log_a = Vec::new();
    let mut log_b = Vec::new();
    train(&cfg, &toy_cfg(), &LossConfig::default(), Some(dir_a.path()), &mut log_a).unwrap();
    train(&cfg, &toy_cfg(), &LossConfig::default(), Some(dir_b.path()), &mut log_b).unwrap();

    assert_eq!(log_a, log_b, "logs must be byte-identical");
    let bytes_a = std::fs::read(dir_a.path().join("final.litn")).unwrap();
    let bytes_b = std::fs::read(dir_b.path().join("final.litn")).unwrap();
    assert_eq!(bytes_a, bytes_b, "checkpoints must be byte-identical");
}

#[test]
fn resume_reproduces_an_uninterrupted_run_byte_for_byte() {
    let straight_cfg = TrainConfig { max_steps: 4, ..tiny_train_cfg() };
    let mut straight_log = Vec::new();
    let straight = train(
        &straight_cfg,
        &toy_cfg(),
        &LossConfig::default(),
        None,
        &mut straight_log,
    )
    .unwrap();

    let dir = tempfile::tempdir().unwrap();
    let half_cfg = TrainConfig { max_steps: 2, ..tiny_train_cfg() };
    let mut half_log = Vec::new();
    train(&half_cfg, &toy_cfg(), &LossConfig::default(), Some(dir.path()), &mut half_log).unwrap();

    let resume_cfg = TrainConfig {
        max_steps: 4,
        resume: Some(dir.path().join("final.litn")),
        ..tiny_train_cfg()
    };
    let mut resume_log = Vec::new();
    let resumed = train(
        &resume_cfg,
        &toy_cfg(),
        &LossConfig::default(),
        None,
        &mut resume_log,
    )
    .unwrap();

    assert_eq!(resumed.steps, 4);
    assert_eq!(
        to_bytes(&resumed.checkpoint),
        to_bytes(&straight.checkpoint),
        "resumed checkpoint must match the uninterrupted run"
    );
    // The resumed log is exactly the back half of the straight log.
    let straight_text = String::from_utf8(straight_log).unwrap();
    let resume_text = String::from_utf8(resume_log).unwrap();
    let tail: Vec<&str> = straight_text.lines().skip(2).collect();
    let resumed_lines: Vec<&str> = resume_text.lines().collect();
    assert_eq!(resumed_lines, tail);
}

#[test]
fn checkpoint_cadence_writes_periodic_snapshots() {
    let cfg = TrainConfig {
        max_steps: 4,
        checkpoint_every: 2,
        ..tiny_train_cfg()
    };
    let dir = tempfile::tempdir().unwrap();
    let mut log = Vec::new();
    train(&cfg, &toy_cfg(), &LossConfig::default(), Some(dir.path()), &mut log).unwrap();

    assert!(dir.path().join("step_000002.litn").is_file());
    assert!(
        !dir.path().join("step_000004.litn").exists(),
        "the final step is covered by final.litn"
    );
    let mid = load_checkpoint::<f32>(dir.path().join("step_000002.litn")).unwrap();
    assert_eq!(mid.optimizer.unwrap().step, 2);
    assert!(mid.rng.is_some());
    assert_eq!(load_checkpoint::<f32>(dir.path().join("final.litn")).unwrap().optimizer.unwrap().step, 4);
}

#[test]
fn non_finite_losses_abort_with_the_step_number() {
    // Hand-craft a checkpoint whose first conv is NaN; save_checkpoint has
    // no finite guard, so this models on-disk corruption.
    let model = LitNet::<f32>::new(toy_cfg(), 0).unwrap();
    let id = model.store().id("mran.f1.conv.weight").unwrap();
    let dims = model.store().get(id).dims().to_vec();
    let n: usize = dims.iter().product();
    model
        .store()
        .set(id, Tensor::from_vec(dims, vec![f32::NAN; n]).unwrap())
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("poisoned.litn");
    save_checkpoint(&path, &Checkpoint::of_model(&model)).unwrap();

    let cfg = TrainConfig {
        max_steps: 2,
        resume: Some(path),
        ..tiny_train_cfg()
    };
    let mut log = Vec::new();
    match train(&cfg, &toy_cfg(), &LossConfig::default(), None, &mut log) {
        Err(Error::NonFiniteLoss { step, value }) => {
            assert_eq!(step, 1);
            assert!(value.is_nan());
        }
        other => panic!("expected NonFiniteLoss, got {:?}", other.map(|_| ())),
    }
    assert!(log.is_empty(), "no step line should be written for the aborted step");
}

#[test]
fn dataset_validation_rejects_bad_shapes_and_sizes() {
    let base = tiny_train_cfg();

    // Batch larger than the dataset.
    let cfg = TrainConfig { batch_size: 4, ..base.clone() };
    let err = train(&cfg, &toy_cfg(), &LossConfig::default(), None, &mut Vec::new());
    assert!(matches!(err, Err(Error::Invalid { .. })), "batch 4 of 3 must fail");

    // Batch norm needs at least two samples for batch statistics.
    let cfg = TrainConfig { batch_size: 1, ..base.clone() };
    match train(&cfg, &toy_cfg(), &LossConfig::default(), None, &mut Vec::new()) {
        Err(Error::Invalid { details, .. }) => assert!(details.contains("at least 2"), "{details}"),
        other => panic!("expected batch-size error, got {:?}", other.map(|_| ())),
    }

    // Input sides must be multiples of 8.
    let cfg = TrainConfig {
        data: DataSource::Synthetic {
            count: 2,
            width: 12,
            height: 16,
            params: DegradationParams::default(),
        },
        ..base.clone()
    };
    match train(&cfg, &toy_cfg(), &LossConfig::default(), None, &mut Vec::new()) {
        Err(Error::Invalid { details, .. }) => assert!(details.contains("multiples of 8"), "{details}"),
        other => panic!("expected invalid-size error, got {:?}", other.map(|_| ())),
    }
}

fn flat_image(w: usize, h: usize, rgb: [f64; 3]) -> Image {
    let data: Vec<f64> = (0..w * h).flat_map(|_| rgb).collect();
    Image::new(w, h, data).unwrap()
}

#[test]
fn directory_datasets_pair_by_stem_and_validate_dimensions() {
    let root = tempfile::tempdir().unwrap();
    let deg = root.path().join("degraded");
    let cln = root.path().join("clean");
    std::fs::create_dir_all(&deg).unwrap();
    std::fs::create_dir_all(&cln).unwrap();

    // a is only degraded, c is only clean: both sides must be reported.
    save_image(&flat_image(16, 16, [0.2, 0.3, 0.4]), deg.join("a.png")).unwrap();
    save_image(&flat_image(16, 16, [0.2, 0.3, 0.4]), deg.join("b.png")).unwrap();
    save_image(&flat_image(16, 16, [0.5, 0.6, 0.7]), cln.join("b.png")).unwrap();
    save_image(&flat_image(16, 16, [0.5, 0.6, 0.7]), cln.join("c.png")).unwrap();

    let cfg = TrainConfig {
        data: DataSource::Dirs { degraded: deg.clone(), clean: cln.clone() },
        ..tiny_train_cfg()
    };
    match train(&cfg, &toy_cfg(), &LossConfig::default(), None, &mut Vec::new()) {
        Err(Error::UnpairedFiles(names)) => {
            assert!(names.iter().any(|n| n.starts_with('a')), "{names:?}");
            assert!(names.iter().any(|n| n.starts_with('c')), "{names:?}");
        }
        other => panic!("expected UnpairedFiles, got {:?}", other.map(|_| ())),
    }

    // Pair the files, but with a clean image of the wrong size.
    save_image(&flat_image(16, 16, [0.2, 0.3, 0.4]), cln.join("a.png")).unwrap();
    save_image(&flat_image(16, 16, [0.5, 0.6, 0.7]), deg.join("c.png")).unwrap();
    save_image(&flat_image(24, 24, [0.5, 0.6, 0.7]), cln.join("c.png")).unwrap();
    match train(&cfg, &toy_cfg(), &LossConfig::default(), None, &mut Vec::new()) {
        Err(Error::ShapeMismatch { expected, actual, .. }) => {
            assert!(expected.contains("c "), "{expected}");
            assert_eq!(actual, "24x24");
        }
        other => panic!("expected ShapeMismatch, got {:?}", other.map(|_| ())),
    }

    // Fix the size; mixed sizes across pairs still cannot batch.
    save_image(&flat_image(16, 16, [0.5, 0.6, 0.7]), cln.join("c.png")).unwrap();
    save_image(&flat_image(24, 24, [0.1, 0.1, 0.1]), deg.join("d.png")).unwrap();
    save_image(&flat_image(24, 24, [0.1, 0.1, 0.1]), cln.join("d.png")).unwrap();
    match train(&cfg, &toy_cfg(), &LossConfig::default(), None, &mut Vec::new()) {
        Err(Error::Invalid { details, .. }) => assert!(details.contains("uniform"), "{details}"),
        other => panic!("expected uniform-size error, got {:?}", other.map(|_| ())),
    }

    // Drop the odd pair out and a short run goes through.
    std::fs::remove_file(deg.join("d.png")).unwrap();
    std::fs::remove_file(cln.join("d.png")).unwrap();
    let cfg = TrainConfig { max_steps: 1, ..cfg };
    let out = train(&cfg, &toy_cfg(), &LossConfig::default(), None, &mut Vec::new()).unwrap();
    assert_eq!(out.steps, 1);
}

#[test]
fn super_resolution_data_is_scaled_and_validated() {
    let sr_cfg = ModelConfig { task: TaskMode::SuperRes(2), ..toy_cfg() };

    // Synthetic pairs: LR input trains against a 2x clean target.
    let cfg = TrainConfig { max_steps: 2, ..tiny_train_cfg() };
    let mut log = Vec::new();
    let outcome = train(&cfg, &sr_cfg, &LossConfig::default(), None, &mut log).unwrap();
    assert_eq!(outcome.steps, 2);
    assert_eq!(outcome.checkpoint.config.task, TaskMode::SuperRes(2));

    // Directory pairs must hold the exact scale relation.
    let root = tempfile::tempdir().unwrap();
    let deg = root.path().join("lr");
    let cln = root.path().join("hr");
    std::fs::create_dir_all(&deg).unwrap();
    std::fs::create_dir_all(&cln).unwrap();
    save_image(&flat_image(16, 16, [0.2, 0.3, 0.4]), deg.join("a.png")).unwrap();
    save_image(&flat_image(16, 16, [0.5, 0.6, 0.7]), cln.join("a.png")).unwrap();
    let cfg = TrainConfig {
        max_steps: 1,
        data: DataSource::Dirs { degraded: deg, clean: cln },
        ..tiny_train_cfg()
    };
    match train(&cfg, &sr_cfg, &LossConfig::default(), None, &mut Vec::new()) {
        Err(Error::ShapeMismatch { expected, actual, .. }) => {
            assert!(expected.contains("32x32"), "{expected}");
            assert_eq!(actual, "16x16");
        }
        other => panic!("expected ShapeMismatch, got {:?}", other.map(|_| ())),
    }
}
