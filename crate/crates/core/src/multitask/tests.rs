use super::*;
use crate::synthetic::separable_points;

fn task(train: LabeledSet, validation: LabeledSet) -> TaskData {
    TaskData { train, validation }
}

fn random_rows(n: usize, dim: usize, seed: u64) -> Matrix {
    let mut rng = rng_from_seed(seed);
    Matrix::from_vec(n, dim, (0..n * dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn parameter_count_closed_form() {
    let m = build_model(600, &DEFAULT_HIDDEN, &[2, 2], 0).unwrap();
    assert_eq!(m.parameter_count(), 600 * 50 + 50 + 50 * 50 + 50 + 2 * (50 * 2 + 2));
    assert_eq!(m.parameter_count(), 32_804);
}

#[test]
fn single_task_shape_and_determinism() {
    let m = build_model(10, &DEFAULT_HIDDEN, &[2], 1).unwrap();
    assert_eq!(m.num_tasks(), 1);
    assert_eq!(m, build_model(10, &DEFAULT_HIDDEN, &[2], 1).unwrap());
    assert_ne!(m, build_model(10, &DEFAULT_HIDDEN, &[2], 2).unwrap());
    assert!(build_model(10, &DEFAULT_HIDDEN, &[], 1).is_err());
    assert!(build_model(0, &DEFAULT_HIDDEN, &[2], 1).is_err());
}

#[test]
fn zeroed_model_predicts_uniform() {
    let mut m = build_model(6, &DEFAULT_HIDDEN, &[2, 2], 4).unwrap();
    m.zero_parameters();
    let p = m.predict(1, &random_rows(5, 6, 0)).unwrap();
    assert!(p.as_slice().iter().all(|&v| v == 0.5));
}

#[test]
fn predict_matches_forward_and_rows_sum_to_one() {
    let m = build_model(6, &[5, 4], &[2, 3], 7).unwrap();
    let x = random_rows(9, 6, 1);
    for t in 0..2 {
        let p = m.predict(t, &x).unwrap();
        let trace = nn::forward(&m.task_layers(t).unwrap(), &x).unwrap();
        assert_eq!(&p, trace.output());
        for row in p.iter_rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
    assert!(m.predict(2, &x).is_err());
    assert!(m.predict(0, &random_rows(2, 5, 0)).is_err());
}

#[test]
fn argmax_invariant_to_shifting_head_logits() {
    for seed in 0..10 {
        let mut m = build_model(4, &[6], &[3], seed).unwrap();
        let x = random_rows(20, 4, seed + 100);
        let before = m.predict_labels(0, &x).unwrap();
        m.heads[0].biases.iter_mut().for_each(|b| *b += 3.25);
        assert_eq!(m.predict_labels(0, &x).unwrap(), before);
    }
}

#[test]
fn step_on_one_task_leaves_other_heads_untouched() {
    let mut m = build_model(6, &[5, 4], &[2, 2, 2], 3).unwrap();
    let before = m.clone();
    let x = random_rows(8, 6, 2);
    m.train_step(1, &x, &[0, 1, 0, 1, 1, 1, 0, 0]).unwrap();
    assert_eq!(m.heads[0], before.heads[0]);
    assert_eq!(m.heads[2], before.heads[2]);
    assert_eq!(m.head_opt[0], before.head_opt[0]);
    assert_ne!(m.heads[1], before.heads[1]);
    for (a, b) in m.trunk.iter().zip(&before.trunk) {
        assert_ne!(a, b);
    }
}

#[test]
fn gradient_wrt_other_heads_is_zero() {
    // The loss of task 0 does not depend on head 1: perturbing head 1 leaves it unchanged.
    let m = build_model(3, &[4], &[2, 2], 8).unwrap();
    let x = random_rows(4, 3, 3);
    let gold = [0, 1, 1, 0];
    let loss = |m: &MultiTaskModel| {
        let p = m.predict(0, &x).unwrap();
        nn::mean_cross_entropy(&p, &gold).unwrap()
    };
    let mut perturbed = m.clone();
    perturbed.heads[1].weights.as_mut_slice().iter_mut().for_each(|w| *w += 0.7);
    assert_eq!(loss(&m), loss(&perturbed));
}

fn separable_tasks(n: usize, dim: usize, seed: u64) -> TaskData {
    let data = separable_points(n, dim, 1.0, seed);
    let idx: Vec<usize> = (0..n).collect();
    let (tr, va) = idx.split_at(n * 7 / 10);
    task(data.subset(tr), data.subset(va))
}

#[test]
fn learns_a_separable_problem() {
    let data = separable_tasks(200, 2, 11);
    let model = build_model(2, &DEFAULT_HIDDEN, &[2], 5).unwrap();
    let config = TrainConfig {
        epochs: 200,
        patience: 200,
        seed: 5,
        ..Default::default()
    };
    let (_, history) = train_multitask(model, &[data], &config).unwrap();
    assert!(history.best_score() >= 0.95, "best {}", history.best_score());
}

#[test]
fn identical_seeds_give_identical_histories() {
    let tasks = [separable_tasks(80, 3, 1), separable_tasks(60, 3, 2)];
    let config = TrainConfig {
        epochs: 5,
        seed: 9,
        ..Default::default()
    };
    let run = || train_multitask(build_model(3, &[8, 8], &[2, 2], 4).unwrap(), &tasks, &config).unwrap();
    let (m1, h1) = run();
    let (m2, h2) = run();
    assert_eq!(h1, h2);
    assert_eq!(m1, m2);
}

#[test]
fn steps_per_epoch_and_early_stopping() {
    let tasks = [separable_tasks(100, 3, 1), separable_tasks(40, 3, 2)];
    let config = TrainConfig {
        epochs: 60,
        patience: 3,
        batch_size: 16,
        seed: 1,
        ..Default::default()
    };
    let (_, history) = train_multitask(build_model(3, &[4], &[2, 2], 4).unwrap(), &tasks, &config).unwrap();
    let rounds = rounds_per_epoch(&[70, 28], 16);
    assert_eq!(rounds, 5);
    assert!(history.epochs.iter().all(|e| e.steps == 2 * rounds));
    let best = history.best_score();
    assert!(history.epochs[history.best_epoch..].iter().all(|e| e.selection_score <= best));
    assert!(history.epochs.len() <= config.epochs);
    if history.epochs.len() < config.epochs {
        assert_eq!(history.epochs.len() - 1 - history.best_epoch, config.patience);
    }
}

#[test]
fn single_task_equals_plain_training_loop() {
    let data = separable_tasks(90, 4, 21);
    let config = TrainConfig {
        epochs: 3,
        patience: 100,
        batch_size: 8,
        seed: 13,
        ..Default::default()
    };
    let model = build_model(4, &[6, 5], &[2], 17).unwrap();

    // Plain loop written directly against the nn primitives.
    let mut layers: Vec<DenseLayer> = model.trunk.iter().chain(&model.heads).cloned().collect();
    let mut opts: Vec<LayerOptimizer> = layers
        .iter()
        .map(|l| LayerOptimizer::for_layer(l, config.optimizer()))
        .collect();
    let mut rng = rng_from_seed(config.seed);
    let rounds = data.train.len().div_ceil(config.batch_size);
    let mut snapshots = Vec::new();
    for _ in 0..config.epochs {
        for _ in 0..rounds {
            let idx: Vec<usize> = (0..config.batch_size).map(|_| rng.gen_range(0..data.train.len())).collect();
            let batch = data.train.subset(&idx);
            let trace = nn::forward(&layers, &batch.features).unwrap();
            let grads = nn::backward(&layers, &trace, &batch.labels).unwrap();
            for ((l, o), g) in layers.iter_mut().zip(&mut opts).zip(&grads) {
                o.step(l, g).unwrap();
            }
        }
        snapshots.push(layers.clone());
    }

    let (trained, history) = train_multitask(model, &[data], &config).unwrap();
    let best = &snapshots[history.best_epoch];
    let ours: Vec<DenseLayer> = trained.trunk.iter().chain(&trained.heads).cloned().collect();
    assert_eq!(&ours, best);
}

#[test]
fn rejects_bad_task_data() {
    let model = build_model(3, &[4], &[2], 0).unwrap();
    let good = separable_tasks(20, 3, 0);
    let empty = task(good.train.subset(&[]), good.validation.clone());
    assert!(train_multitask(model.clone(), &[empty], &TrainConfig::default()).is_err());
    let wrong_dim = separable_tasks(20, 4, 0);
    assert!(train_multitask(model.clone(), &[wrong_dim], &TrainConfig::default()).is_err());
    assert!(train_multitask(model, &[good.clone(), good], &TrainConfig::default()).is_err());
}

#[test]
fn checkpoint_round_trips_bit_exactly() {
    let tasks = [separable_tasks(40, 3, 1), separable_tasks(40, 3, 2)];
    let config = TrainConfig {
        epochs: 2,
        seed: 3,
        ..Default::default()
    };
    let (model, _) = train_multitask(build_model(3, &[5, 4], &[2, 3], 4).unwrap(), &tasks, &config).unwrap();
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &model, Some(&config)).unwrap();
    let (back, cfg) = read_checkpoint(buf.as_slice()).unwrap();
    assert_eq!(cfg, Some(config));
    for (a, b) in model.trunk.iter().chain(&model.heads).zip(back.trunk.iter().chain(&back.heads)) {
        let bits = |l: &DenseLayer| l.weights.as_slice().iter().chain(&l.biases).map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a), bits(b));
    }
    assert_eq!(back, model);
    let mut again = Vec::new();
    write_checkpoint(&mut again, &back, Some(&config)).unwrap();
    assert_eq!(buf, again);

    assert!(read_checkpoint("semrel-model 2\n".as_bytes()).is_err());
    let truncated = &buf[..buf.len() / 2];
    assert!(read_checkpoint(truncated).is_err());
}
