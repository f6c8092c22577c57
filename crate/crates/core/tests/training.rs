use auxnet::data::{
    build_datasets, synth_generate, DatasetCounts, DatasetSplits, GenConfig, Pattern, RangeId, Ranges, TimeRange,
    WindowedDataset,
};
use auxnet::layers::bce_mean;
use auxnet::models::{apply_bn_updates, backward, build, forward};
use auxnet::rng::{stream, Stream};
use auxnet::sparsity::{cumulative_l1_update, CumulativePenaltyState, GroupView};
use auxnet::training::{
    adam_step, count_nonzero_groups, evaluate, grid_search, train, AdamState, GridSpec, StopReason, TrainConfig,
};
use auxnet::{ArchitectureSpec, Label, Mode, ModelKind, Tensor};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

/// Channel 0 carries the label as a level of ±1 over the whole window; the rest is noise.
fn separable(n_per_class: usize, p: usize, t: usize, seed: u64) -> WindowedDataset<f64> {
    let mut rng = stream(seed, Stream::Synth);
    let n = 2 * n_per_class;
    let mut data = Vec::with_capacity(n * p * t);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = if i < n_per_class { Label::Positive } else { Label::Negative };
        let level = if y == Label::Positive { 1.0 } else { -1.0 };
        labels.push(y);
        for c in 0..p {
            for _ in 0..t {
                let e: f64 = rng.sample(StandardNormal);
                data.push(if c == 0 { level + 0.3 * e } else { e });
            }
        }
    }
    WindowedDataset {
        range: RangeId::Train,
        times: (0..n).map(|i| i as f64).collect(),
        labels,
        windows: Tensor::new(vec![n, p, t], data).unwrap(),
    }
}

fn planted_splits(seed: u64) -> DatasetSplits<f64> {
    let cfg = GenConfig::new(12, 3000.0, 500)
        .plant(2, Pattern::Step)
        .plant(5, Pattern::DampedSine)
        .plant(9, Pattern::Step);
    let (store, events, _) = synth_generate::<f64>(&cfg, seed).unwrap();
    let ranges = Ranges {
        train: TimeRange::new(0.0, 1800.0).unwrap(),
        val: TimeRange::new(1800.0, 2400.0).unwrap(),
        test: TimeRange::new(2400.0, 3000.0).unwrap(),
    };
    let counts = DatasetCounts {
        train_per_class: None,
        val_in_training_per_class: 40,
        val_ranking_per_class: 50,
        test_per_class: None,
    };
    build_datasets(&store, &events, &ranges, 16, &counts, seed).unwrap()
}

fn quick(init_lr: f64) -> TrainConfig {
    TrainConfig {
        init_lr,
        validate_every: 20,
        patience_decay: 3,
        patience_stop: 6,
        max_iterations: 3000,
        ..Default::default()
    }
}

#[test]
fn separable_channel_is_learned() {
    let spec = ArchitectureSpec::new(ModelKind::LF, 10, 8);
    let tr = separable(200, 10, 8, 1);
    let va = separable(50, 10, 8, 2);
    let config = TrainConfig { alpha: 0.05, ..quick(1e-2) };
    let out = train(&spec, &tr, &va, &config).unwrap();
    let m = evaluate(&spec, &out.params, &va).unwrap();
    assert_eq!(m.accuracy, 1.0);
    let groups = GroupView::for_spec(&spec).unwrap();
    assert!(count_nonzero_groups(&out.params, &groups) >= 1);
}

#[test]
fn frozen_run_stops_at_second_validation() {
    let spec = ArchitectureSpec::new(ModelKind::LF, 3, 8);
    let tr = separable(20, 3, 8, 3);
    let mut va = separable(20, 3, 8, 4);
    va.labels.iter_mut().for_each(|y| *y = Label::Positive);
    let config = TrainConfig {
        init_lr: 0.0,
        patience_stop: 1,
        validate_every: 5,
        ..Default::default()
    };
    let out = train(&spec, &tr, &va, &config).unwrap();
    assert_eq!(out.history.records.len(), 2);
    assert_eq!(out.history.stop_reason, StopReason::Patience);
    assert_eq!(out.history.best_iteration, 5);
    assert_eq!(out.params, build::<f64>(&spec, config.seed).unwrap());
}

#[test]
fn without_penalties_training_is_plain_adam() {
    let spec = ArchitectureSpec::new(ModelKind::OneHidReLU, 4, 8).with_hidden_maps(6);
    let tr = separable(40, 4, 8, 5);
    let va = separable(10, 4, 8, 6);
    let config = TrainConfig {
        init_lr: 3e-3,
        batch_size: 16,
        max_iterations: 60,
        validate_every: 1000,
        seed: 9,
        ..Default::default()
    };
    let out = train(&spec, &tr, &va, &config).unwrap();

    let mut params = build::<f64>(&spec, config.seed).unwrap();
    let mut adam = AdamState::new(&params);
    let mut rng = stream(config.seed, Stream::Batch);
    for _ in 0..config.max_iterations {
        let idx = sample(&mut rng, tr.len(), config.batch_size).into_vec();
        let (x, y) = tr.batch(&idx);
        let pass = forward(&spec, &params, &x, Mode::Train).unwrap();
        let (_, dz) = bce_mean(&pass.logits, &y).unwrap();
        let grads = backward(&spec, &params, &pass.caches, &dz).unwrap();
        apply_bn_updates(&mut params, pass.bn_updates);
        adam_step(&mut params, &grads, &mut adam, config.init_lr, 0.0).unwrap();
    }
    assert_eq!(out.params, params);

    let groups = GroupView::for_spec(&spec).unwrap();
    let before = params.clone();
    let mut state = CumulativePenaltyState::new(groups.len());
    cumulative_l1_update(&mut params, &groups, &mut state, 0.0, 0.1).unwrap();
    assert_eq!(params, before);
}

#[test]
fn snapshot_has_the_lowest_validation_loss() {
    let d = planted_splits(1);
    let spec = ArchitectureSpec::new(ModelKind::LF, 12, 16);
    let config = TrainConfig { alpha: 0.2, ..quick(2e-2) };
    let out = train(&spec, &d.train, &d.val_in_training, &config).unwrap();
    let h = &out.history;
    assert!(h.records.len() > 3);
    let min = h.records.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(h.best_val_loss, Some(min));
    let rec = h.best_record().unwrap();
    assert_eq!((rec.iteration, rec.val_loss), (h.best_iteration, min));
    assert_eq!(evaluate(&spec, &out.params, &d.val_in_training).unwrap().loss, min);
    assert!(h.records.windows(2).all(|w| w[0].iteration < w[1].iteration));
}

#[test]
fn recorded_learning_rates_follow_the_schedule() {
    let d = planted_splits(2);
    let spec = ArchitectureSpec::new(ModelKind::LF, 12, 16);
    let config = TrainConfig {
        patience_decay: 1,
        patience_stop: 8,
        ..quick(5e-2)
    };
    let out = train(&spec, &d.train, &d.val_in_training, &config).unwrap();
    let h = &out.history;
    assert!(h.lr_decays >= 1, "no decay in {} records", h.records.len());
    let mut k = 0;
    for r in &h.records {
        while r.lr != config.lr_after(k) {
            k += 1;
            assert!(k <= h.lr_decays, "lr {} is not on the schedule", r.lr);
        }
    }
}

#[test]
fn validation_data_never_steers_the_trajectory() {
    let spec = ArchitectureSpec::new(ModelKind::LF, 4, 8);
    let tr = separable(40, 4, 8, 7);
    let config = TrainConfig {
        max_iterations: 80,
        validate_every: 1000,
        ..quick(1e-2)
    };
    let a = train(&spec, &tr, &separable(10, 4, 8, 8), &config).unwrap();
    let mut poisoned = separable(10, 4, 8, 9);
    poisoned.windows.data_mut().iter_mut().for_each(|v| *v *= 1e3);
    let b = train(&spec, &tr, &poisoned, &config).unwrap();
    assert_eq!(a.params, b.params);
}

#[test]
fn same_seed_same_history() {
    let d = planted_splits(3);
    let spec = ArchitectureSpec::new(ModelKind::LF, 12, 16);
    let config = TrainConfig { alpha: 0.1, lambda: 1e-3, ..quick(1e-2) };
    let a = train(&spec, &d.train, &d.val_in_training, &config).unwrap();
    let b = train(&spec, &d.train, &d.val_in_training, &config).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.params, b.params);
}

#[test]
fn huge_alpha_loses_the_grid() {
    let d = planted_splits(4);
    let spec = ArchitectureSpec::new(ModelKind::LF, 12, 16);
    let grid = GridSpec {
        init_lr: vec![1e-2],
        lambda: vec![0.0],
        alpha: vec![1e4, 0.05],
        input_len: vec![16],
    };
    let out = grid_search(&spec, |_| Ok(d.clone()), &grid, &quick(1e-2), 2).unwrap();
    let best = out.best().unwrap();
    assert_eq!(best.setting.alpha, 0.05);
    let zeroed = out.results[0].run.as_ref().unwrap();
    assert_eq!(zeroed.nonzero_groups, 0);
    assert!((zeroed.ranking.loss - std::f64::consts::LN_2).abs() < 0.02);
    assert!(best.run.as_ref().unwrap().ranking.loss < zeroed.ranking.loss);
}

#[test]
fn grid_results_do_not_depend_on_thread_count() {
    let d = planted_splits(5);
    let spec = ArchitectureSpec::new(ModelKind::LF, 12, 16);
    let grid = GridSpec {
        init_lr: vec![1e-2, 3e-2],
        lambda: vec![0.0],
        alpha: vec![0.0, 0.5],
        input_len: vec![16],
    };
    let base = TrainConfig { max_iterations: 400, ..quick(1e-2) };
    let one = grid_search(&spec, |_| Ok(d.clone()), &grid, &base, 1).unwrap();
    let four = grid_search(&spec, |_| Ok(d.clone()), &grid, &base, 4).unwrap();
    assert_eq!(one.ranking, four.ranking);
    for (a, b) in one.results.iter().zip(&four.results) {
        assert_eq!(a.run.as_ref().unwrap().params(), b.run.as_ref().unwrap().params());
    }
}

#[test]
fn stronger_group_penalty_keeps_fewer_channels() {
    let d = planted_splits(6);
    let spec = ArchitectureSpec::new(ModelKind::LF, 12, 16);
    let grid = GridSpec {
        init_lr: vec![1e-2],
        lambda: vec![0.0],
        alpha: vec![0.0, 0.1, 0.4, 1.6],
        input_len: vec![16],
    };
    let out = grid_search(&spec, |_| Ok(d.clone()), &grid, &quick(1e-2), 4).unwrap();
    let counts: Vec<usize> = out.results.iter().map(|r| r.run.as_ref().unwrap().nonzero_groups).collect();
    assert!(counts.windows(2).all(|w| w[1] <= w[0]), "nonzero groups by alpha: {counts:?}");
    assert_eq!(counts[0], 12);
    assert!(counts[3] < 12);
}
