use niert::model::{loss_and_grad, Checkpoint, LossScope, ModelConfig};
use niert::taskgen::{generate_tasks, InterpolationTask, TaskGenConfig};
use niert::trainer::{
    batch_gradient, evaluate, finetune, initial_params, train, AffineNormalization,
    EvalOptions, TaskSource, TrainConfig,
};

fn gen(seed: u64) -> TaskGenConfig {
    let mut g = TaskGenConfig::gaussian(1, Some(0.25), seed);
    g.total_points = 48;
    g.n_range = (8, 16);
    g
}

fn toy_model() -> ModelConfig {
    ModelConfig::sized(1, 1, 2, 32, 4)
}

fn toy_train(epochs: usize) -> TrainConfig {
    let mut t = TrainConfig::desk(TaskSource::Generator(gen(3)));
    t.epochs = epochs;
    t.batch_size = 8;
    t.tasks_per_epoch = 64;
    t.lr = 2e-3;
    t.seed = 11;
    t
}

fn tasks(seed: u64, count: usize) -> Vec<InterpolationTask> {
    generate_tasks(&gen(seed), 0, count)
        .unwrap()
        .0
        .into_iter()
        .map(|g| g.task)
        .collect()
}

#[test]
fn zero_epochs_returns_init() {
    let m = toy_model();
    let (p, report) = train(&m, &toy_train(0), None).unwrap();
    assert_eq!(p, initial_params(&m, 11, None).unwrap());
    assert!(report.epochs.is_empty());

    let ck = Checkpoint::new(m.clone(), p.clone()).unwrap();
    let (q, _) = train(&m, &toy_train(0), Some(&ck)).unwrap();
    assert_eq!(q, p);
}

#[test]
fn same_seed_same_checkpoint() {
    let m = toy_model();
    let a = train(&m, &toy_train(1), None).unwrap().0;
    let b = train(&m, &toy_train(1), None).unwrap().0;
    let ca = Checkpoint::new(m.clone(), a).unwrap().to_bytes();
    let cb = Checkpoint::new(m, b).unwrap().to_bytes();
    assert_eq!(ca, cb);
}

#[test]
fn batch_gradient_is_sum_of_task_gradients() {
    let m = toy_model();
    let p = initial_params(&m, 5, None).unwrap();
    let batch = tasks(9, 2);
    let (value, grad, terms) = batch_gradient(&batch, &p, &m, LossScope::AllPoints).unwrap();
    assert_eq!(terms, 2 * 48);
    let scale = 1.0 / terms as f64;
    let (v0, g0) = loss_and_grad(&batch[0], &p, &m, LossScope::AllPoints, scale).unwrap();
    let (v1, g1) = loss_and_grad(&batch[1], &p, &m, LossScope::AllPoints, scale).unwrap();
    assert_eq!(value, v0 + v1);
    for i in 0..grad.len() {
        assert_eq!(grad[i], g0[i] + g1[i]);
    }
}

#[test]
fn mismatched_init_rejected() {
    let m = toy_model();
    let other = ModelConfig::sized(1, 1, 1, 16, 2);
    let p = initial_params(&other, 1, None).unwrap();
    let ck = Checkpoint::new(other, p).unwrap();
    assert!(matches!(
        train(&m, &toy_train(1), Some(&ck)),
        Err(niert::NiertError::CheckpointMismatch(_))
    ));
}

#[test]
fn toy_run_halves_loss() {
    // 200 batches of 8 tasks.
    let m = toy_model();
    let mut t = toy_train(25);
    t.lr_decay = 1.0;
    let (_, report) = train(&m, &t, None).unwrap();
    let batches: usize = report.epochs.iter().map(|e| e.batches).sum();
    assert_eq!(batches, 200);
    let first = report.first_loss().unwrap();
    let last = report.final_loss().unwrap();
    assert!(report.epochs.iter().all(|e| e.train_loss.is_finite()));
    assert!(report.epochs.windows(2).all(|w| w[1].epoch == w[0].epoch + 1));
    assert!(last < 0.5 * first, "first {first}, last {last}");
}

#[test]
fn finetune_identity_zero_epochs_matches_pretrained() {
    let m = toy_model();
    let p = initial_params(&m, 2, None).unwrap();
    let ck = Checkpoint::new(m.clone(), p.clone()).unwrap();
    let (q, _) = finetune(&ck, &toy_train(0), AffineNormalization::identity(1), None).unwrap();
    let held = tasks(21, 16);
    let a = evaluate(&p, &m, &held, &EvalOptions::default()).unwrap();
    let b = evaluate(&q, &m, &held, &EvalOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn finetune_on_same_distribution_is_stable() {
    let m = toy_model();
    let (p, _) = train(&m, &toy_train(100), None).unwrap();
    let ck = Checkpoint::new(m.clone(), p.clone()).unwrap();
    let mut ft = toy_train(1);
    ft.lr = 1e-4;
    ft.seed = 12;
    if let TaskSource::Generator(g) = &mut ft.source {
        g.seed = 4;
    }
    let (q, _) = finetune(&ck, &ft, AffineNormalization::identity(1), None).unwrap();
    let held = tasks(21, 64);
    let before = evaluate(&p, &m, &held, &EvalOptions::default()).unwrap().mse();
    let after = evaluate(&q, &m, &held, &EvalOptions::default()).unwrap().mse();
    assert!((after - before).abs() < 0.2 * before, "before {before}, after {after}");
}
