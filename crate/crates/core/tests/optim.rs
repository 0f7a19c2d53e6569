use mdcn::data::{synthetic::synthetic_image, Image, PairSet};
use mdcn::model::{Model, ModelConfig, ParameterStore, Partition};
use mdcn::optim::{
    adam_step, epoch_of, lr_at, sample_batch, train, AdamState, Batch, TrainConfig, Trainer, TRAIN_LOG_HEADER,
};
use mdcn::tensor::{Shape, Tensor};
use mdcn::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn single(value: f64, grad: f64) -> ParameterStore<f64> {
    let mut s = ParameterStore::new();
    s.insert("w", Tensor::scalar(value), vec![1], Partition::Trunk).unwrap();
    s.get_mut("w").unwrap().grad = Some(Tensor::scalar(grad));
    s
}

fn names(s: &[&str]) -> Vec<String> {
    s.iter().map(|n| n.to_string()).collect()
}

#[test]
fn first_step_moves_by_learning_rate_against_the_gradient() {
    for g in [3.0, -0.02, 1e3] {
        let mut s = single(1.0, g);
        adam_step(&mut s, &mut AdamState::new(), 0.1, &names(&["w"])).unwrap();
        let moved = s.value("w").unwrap().item().unwrap() - 1.0;
        assert!((moved + 0.1 * g.signum()).abs() < 1e-6, "{g}: {moved}");
    }
}

#[test]
fn zero_gradient_leaves_value() {
    let mut s = single(0.7, 0.0);
    let mut state = AdamState::new();
    adam_step(&mut s, &mut state, 0.1, &names(&["w"])).unwrap();
    assert_eq!(s.value("w").unwrap().item().unwrap(), 0.7);
    assert_eq!(state.slots["w"].t, 1);
}

#[test]
fn missing_or_unknown_gradient_is_a_contract_error() {
    let mut s = single(1.0, 1.0);
    s.insert("v", Tensor::scalar(2.0), vec![1], Partition::Trunk).unwrap();
    let before = s.clone();
    for list in [names(&["w", "v"]), names(&["w", "nope"])] {
        match adam_step(&mut s, &mut AdamState::new(), 0.1, &list) {
            Err(Error::Contract { detail, .. }) => assert!(detail.contains(list[1].as_str()), "{detail}"),
            other => panic!("expected a contract error, got {other:?}"),
        }
        assert_eq!(s, before);
    }
}

#[test]
fn three_steps_match_written_out_recurrence() {
    let grads = [0.5, -1.25, 2.0];
    let lr = 0.01;
    let mut s = single(0.3, grads[0]);
    let mut state = AdamState::new();
    let (mut m, mut v, mut w) = (0.0f64, 0.0f64, 0.3f64);
    for (t, &g) in grads.iter().enumerate() {
        s.get_mut("w").unwrap().grad = Some(Tensor::scalar(g));
        adam_step(&mut s, &mut state, lr, &names(&["w"])).unwrap();
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        let k = (t + 1) as i32;
        let m_hat = m / (1.0 - 0.9f64.powi(k));
        let v_hat = v / (1.0 - 0.999f64.powi(k));
        w -= lr * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((s.value("w").unwrap().item().unwrap() - w).abs() <= 1e-12);
    }
    assert_eq!(state.t, 3);
}

#[test]
fn parameters_outside_the_list_keep_values_and_moments() {
    let mut s = single(1.0, 1.0);
    s.insert("head", Tensor::scalar(5.0), vec![1], Partition::Head(3))
        .unwrap();
    s.get_mut("head").unwrap().grad = Some(Tensor::scalar(9.0));
    let mut state = AdamState::new();
    adam_step(&mut s, &mut state, 0.1, &names(&["w"])).unwrap();
    assert_eq!(s.value("head").unwrap().item().unwrap(), 5.0);
    assert!(!state.slots.contains_key("head"));
}

#[test]
fn learning_rate_schedule() {
    let cfg = TrainConfig::default();
    assert_eq!(lr_at(0, &cfg), 1e-4);
    assert_eq!(lr_at(200, &cfg), 5e-5);
    assert_eq!(lr_at(600, &cfg), 1.25e-5);
    let short = TrainConfig {
        halving_period: 2,
        iterations_per_epoch: 5,
        ..TrainConfig::default()
    };
    let lrs: Vec<f64> = (0..30).map(|i| lr_at(epoch_of(i, &short), &short)).collect();
    assert_eq!(lrs[9], 1e-4);
    assert_eq!(lrs[10], 5e-5);
    assert_eq!(lrs[20], 2.5e-5);
}

#[test]
fn train_config_json() {
    let cfg = TrainConfig::from_json(r#"{"batch_size":4,"hr_patch":24,"base_lr":0.001,"halving_period":5,"iterations_per_epoch":10,"epochs":2,"factors":[2,3]}"#).unwrap();
    assert_eq!(cfg.seed, 0);
    assert_eq!(cfg.total_iterations(), 20);
    for (text, field) in [
        (
            r#"{"batch_size":4,"hr_patch":24,"base_lr":0.001,"halving_period":5,"iterations_per_epoch":10,"epochs":2,"factors":[2],"momentum":1}"#,
            "momentum",
        ),
        (
            r#"{"batch_size":0,"hr_patch":24,"base_lr":0.001,"halving_period":5,"iterations_per_epoch":10,"epochs":2,"factors":[2]}"#,
            "batch_size",
        ),
        (
            r#"{"batch_size":4,"hr_patch":25,"base_lr":0.001,"halving_period":5,"iterations_per_epoch":10,"epochs":2,"factors":[2]}"#,
            "hr_patch",
        ),
    ] {
        match TrainConfig::from_json(text) {
            Err(Error::Config { field: f, .. }) => assert_eq!(f, field),
            other => panic!("expected a config error on {field}, got {other:?}"),
        }
    }
}

fn pairs(count: u64, size: usize, factors: &[u32]) -> PairSet {
    let images: Vec<(String, Image)> = (0..count)
        .map(|i| (format!("img{i}"), synthetic_image(size, size, i)))
        .collect();
    PairSet::from_hr_images(&images, factors).unwrap()
}

#[test]
fn batches_have_aligned_patch_sizes() {
    let set = pairs(3, 60, &[2, 3, 4]);
    let cfg = TrainConfig {
        batch_size: 3,
        ..TrainConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut seen = std::collections::BTreeSet::new();
    for _ in 0..30 {
        let b: Batch<f32> = sample_batch(&set, &cfg, &mut rng).unwrap();
        let lp = 48 / b.factor as usize;
        assert_eq!(b.lr.shape(), Shape::new(3, 3, lp, lp));
        assert_eq!(b.hr.shape(), Shape::new(3, 3, 48, 48));
        seen.insert((b.factor, lp));
    }
    assert_eq!(seen.into_iter().collect::<Vec<_>>(), [(2, 24), (3, 16), (4, 12)]);
}

#[test]
fn images_too_small_for_a_patch_are_a_data_error() {
    let set = pairs(2, 20, &[2]);
    let cfg = TrainConfig {
        factors: vec![2],
        ..TrainConfig::default()
    };
    let result: Result<Batch<f32>, _> = sample_batch(&set, &cfg, &mut ChaCha8Rng::seed_from_u64(0));
    assert!(matches!(result, Err(Error::Data(_))));
}

fn small_cfg(factors: &[u32], iterations: usize) -> TrainConfig {
    TrainConfig {
        batch_size: 2,
        hr_patch: 12,
        base_lr: 1e-3,
        halving_period: 1000,
        iterations_per_epoch: iterations,
        epochs: 1,
        factors: factors.to_vec(),
        seed: 3,
    }
}

#[test]
fn training_is_deterministic() {
    let set = pairs(3, 30, &[2, 3]);
    let cfg = small_cfg(&[2, 3], 6);
    let run = || {
        let mut m: Model<f32> = Model::new(ModelConfig::tiny(2, 8, &[2, 3, 4]), 1).unwrap();
        let log = train(&mut m, &set, &cfg, |_| {}).unwrap();
        (m, log)
    };
    let (a, log_a) = run();
    let (b, log_b) = run();
    assert!(a.params.values_equal(&b.params));
    let losses = |l: &mdcn::optim::TrainLog| l.iterations.iter().map(|r| (r.factor, r.loss)).collect::<Vec<_>>();
    assert_eq!(losses(&log_a), losses(&log_b));
    assert_eq!(log_a.iterations.len(), 6);
    assert_eq!(log_a.epochs.len(), 1);
    assert!(log_a.to_tsv().starts_with(TRAIN_LOG_HEADER));
    assert_eq!(log_a.to_tsv().lines().count(), 7);
}

#[test]
fn trunk_moves_and_unused_head_stays() {
    let set = pairs(2, 30, &[2]);
    let mut m: Model<f32> = Model::new(ModelConfig::tiny(2, 8, &[2, 4]), 0).unwrap();
    let before = m.params.clone();
    train(&mut m, &set, &small_cfg(&[2], 3), |_| {}).unwrap();
    for (name, p) in m.params.iter() {
        let same = p.value == before.get(name).unwrap().value;
        match p.partition {
            Partition::Head(4) => assert!(same, "{name} moved"),
            Partition::Trunk | Partition::Head(_) if name.ends_with("weight") => assert!(!same, "{name} did not move"),
            _ => {}
        }
    }
}

#[test]
fn trainer_rejects_factor_without_head() {
    let mut m: Model<f32> = Model::new(ModelConfig::tiny(2, 8, &[2]), 0).unwrap();
    assert!(matches!(
        Trainer::new(&mut m, small_cfg(&[2, 3], 1)),
        Err(Error::Config { field, .. }) if field == "factors"
    ));
}

#[test]
fn non_finite_loss_aborts() {
    let set = pairs(2, 30, &[2]);
    let mut m: Model<f32> = Model::new(ModelConfig::tiny(2, 8, &[2]), 0).unwrap();
    let w = m.params.get_mut("output.bias").unwrap();
    w.value = w.value.map(|_| f32::NAN);
    match train(&mut m, &set, &small_cfg(&[2], 4), |_| {}) {
        Err(Error::NonFinite {
            iteration: 0,
            factor: 2,
            ..
        }) => {}
        other => panic!("expected a non-finite abort, got {other:?}"),
    }
}

#[test]
fn overfits_a_single_batch() {
    let set = pairs(1, 24, &[2]);
    let cfg = TrainConfig {
        batch_size: 1,
        ..small_cfg(&[2], 500)
    };
    let batch = sample_batch(&set, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut m: Model<f32> = Model::new(ModelConfig::tiny(2, 8, &[2]), 0).unwrap();
    let mut trainer = Trainer::new(&mut m, cfg).unwrap();
    let first = trainer.step_on(&batch).unwrap().loss;
    let mut last = first;
    for _ in 1..500 {
        last = trainer.step_on(&batch).unwrap().loss;
    }
    assert!(first / last >= 10.0, "loss {first} -> {last}");
}

proptest! {
    #[test]
    fn schedule_is_non_increasing_and_positive(a in 0usize..5000, b in 0usize..5000) {
        let cfg = TrainConfig::default();
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(lr_at(hi, &cfg) <= lr_at(lo, &cfg));
        prop_assert!(lr_at(hi, &cfg) > 0.0);
    }

    #[test]
    fn adam_step_is_bounded_by_learning_rate(g in -100.0f64..100.0, lr in 1e-5f64..1.0) {
        let mut s = single(0.0, g);
        adam_step(&mut s, &mut AdamState::new(), lr, &names(&["w"])).unwrap();
        prop_assert!(s.value("w").unwrap().item().unwrap().abs() <= lr * (1.0 + 1e-9));
    }
}
