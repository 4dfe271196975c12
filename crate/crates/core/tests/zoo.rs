use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tsforge::dataset::{split, Frequency, Series, SplitView, TimeSeriesDataset};
use tsforge::sampling::{SampleStrategy, SamplerConfig, ScalerMethod, WindowInstance};
use tsforge::synthetic::seasonal_corpus;
use tsforge::zoo::tape::softplus;
use tsforge::zoo::*;

fn heads() -> [HeadSpec; 3] {
    [
        HeadSpec::distribution(DistKind::StudentT, InferenceKind::DistMean),
        HeadSpec::quantile(0.1, 0.9),
        HeadSpec::scalar(ScalarLoss::Mase),
    ]
}

fn small_spec(
    row: (EncoderKind, DecoderKind, bool),
    head: HeadSpec,
    dropout: f64,
) -> ArchitectureSpec {
    let mut s = ArchitectureSpec::new(row.0, row.1, row.2, head);
    s.hidden_size = 4;
    s.num_layers = 2;
    s.dropout = dropout;
    s.tcn_kernel = 2;
    s.tcn_num_blocks = 2;
    s
}

fn random_instances(
    rng: &mut ChaCha8Rng,
    b: usize,
    w: usize,
    h: usize,
    p: usize,
    f: usize,
) -> Vec<WindowInstance> {
    (0..b)
        .map(|i| {
            let pad = if i == 0 { 2.min(w - 1) } else { 0 };
            WindowInstance {
                past_targets: (0..w)
                    .map(|t| {
                        if t < pad {
                            0.0
                        } else {
                            rng.random_range(1.0..3.0)
                        }
                    })
                    .collect(),
                past_mask: (0..w).map(|t| t >= pad).collect(),
                past_covariates: (p > 0)
                    .then(|| Array2::from_shape_fn((w, p), |_| rng.random_range(-1.0..1.0))),
                future_covariates: (f > 0)
                    .then(|| Array2::from_shape_fn((w + h, f), |_| rng.random_range(-1.0..1.0))),
                future_targets: (0..h).map(|_| rng.random_range(1.0..3.0)).collect(),
                series_index: i,
                origin: w,
            }
        })
        .collect()
}

fn build(
    spec: &ArchitectureSpec,
    window: usize,
    horizon: usize,
    p: usize,
    f: usize,
    seed: u64,
) -> ModelState {
    let dims = InputDims {
        window,
        horizon,
        past_dim: p,
        future_dim: f,
    };
    ModelState::build(spec, dims, ScalerMethod::Standard, seed).unwrap()
}

/// Central finite differences against the analytic gradient. The relative
/// error's denominator is floored at 1e-5, the resolution of a central
/// difference at this step size.
fn max_relative_error(state: &ModelState, batch: &Batch, dropout_seed: Option<u64>) -> f64 {
    let (_, grad) = state
        .loss_and_grad(&state.weights, batch, dropout_seed)
        .unwrap();
    let eps = 1e-5;
    let mut w = state.weights.clone();
    let mut worst: f64 = 0.0;
    for i in 0..w.len() {
        let orig = w[i];
        w[i] = orig + eps;
        let up = state.loss_with(&w, batch, dropout_seed).unwrap();
        w[i] = orig - eps;
        let down = state.loss_with(&w, batch, dropout_seed).unwrap();
        w[i] = orig;
        let fd = (up - down) / (2.0 * eps);
        let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-5);
        worst = worst.max(rel);
    }
    worst
}

#[test]
fn gradients_match_finite_differences_for_every_row_and_head() {
    for row in ArchitectureSpec::legal_rows() {
        for head in heads() {
            for seed in 0..2u64 {
                let spec = small_spec(row, head.clone(), if seed == 1 { 0.2 } else { 0.0 });
                let mut state = build(&spec, 4, 3, 1, 1, seed);
                let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
                // random biases too, so no activation sits exactly on a ReLU kink
                state
                    .weights
                    .iter_mut()
                    .for_each(|w| *w = rng.random_range(-0.5..0.5));
                let inst = random_instances(&mut rng, 3, state.dims.window, 3, 1, 1);
                let batch = Batch::from_instances(&inst, ScalerMethod::Standard, 2, true);
                let err = max_relative_error(&state, &batch, Some(seed));
                assert!(err < 1e-4, "{row:?} {:?} seed {seed}: {err}", head.kind);
            }
        }
    }
}

#[test]
fn output_shapes_follow_head_channels() {
    for row in ArchitectureSpec::legal_rows() {
        for (head, c) in [
            (
                HeadSpec::distribution(DistKind::Gaussian, InferenceKind::DistMean),
                2,
            ),
            (HeadSpec::quantile(0.1, 0.9), 3),
            (HeadSpec::scalar(ScalarLoss::L2), 1),
        ] {
            let state = build(&small_spec(row, head, 0.0), 5, 3, 0, 0, 1);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let batch = Batch::from_instances(
                &random_instances(&mut rng, 4, state.dims.window, 3, 0, 0),
                ScalerMethod::MeanAbs,
                1,
                true,
            );
            let out = state.forward(&batch, Feedback::Point).unwrap();
            assert_eq!(out.dim(), (4, 3 * c));
        }
    }
}

#[test]
fn masked_targets_give_zero_gradient() {
    let state = build(
        &small_spec(
            (EncoderKind::Rnn, DecoderKind::Rnn, true),
            HeadSpec::scalar(ScalarLoss::L1),
            0.0,
        ),
        4,
        2,
        0,
        0,
        3,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut batch = Batch::from_instances(
        &random_instances(&mut rng, 2, 4, 2, 0, 0),
        ScalerMethod::None,
        1,
        true,
    );
    batch.weights.fill(0.0);
    let (loss, grad) = state.loss_and_grad(&state.weights, &batch, None).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grad.iter().all(|g| *g == 0.0));
}

#[test]
fn mismatched_batch_is_rejected() {
    let state = build(
        &small_spec(
            (EncoderKind::Mlp, DecoderKind::Mlp, false),
            HeadSpec::scalar(ScalarLoss::L2),
            0.0,
        ),
        4,
        2,
        0,
        0,
        3,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let batch = Batch::from_instances(
        &random_instances(&mut rng, 2, 5, 2, 0, 0),
        ScalerMethod::None,
        1,
        true,
    );
    assert!(matches!(
        state.forward(&batch, Feedback::Truth),
        Err(ZooError::ShapeMismatch(_))
    ));
}

#[test]
fn single_step_generation_equals_teacher_forcing() {
    for row in [
        (EncoderKind::Rnn, DecoderKind::Rnn, true),
        (EncoderKind::Rnn, DecoderKind::Mlp, true),
        (EncoderKind::Tcn, DecoderKind::Mlp, true),
    ] {
        let state = build(
            &small_spec(row, HeadSpec::scalar(ScalarLoss::L2), 0.0),
            4,
            1,
            0,
            1,
            9,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let batch = Batch::from_instances(
            &random_instances(&mut rng, 3, state.dims.window, 1, 0, 1),
            ScalerMethod::MeanAbs,
            1,
            true,
        );
        let tf = state.forward(&batch, Feedback::Truth).unwrap();
        let gen = state.forward(&batch, Feedback::Point).unwrap();
        assert_eq!(tf, gen, "{row:?}");
    }
}

/// When the ground truth equals the model's own point predictions, teacher
/// forcing and generation see identical inputs.
#[test]
fn generation_matches_teacher_forcing_on_self_consistent_targets() {
    for row in [
        (EncoderKind::Rnn, DecoderKind::Rnn, true),
        (EncoderKind::Rnn, DecoderKind::Mlp, true),
        (EncoderKind::Tcn, DecoderKind::Mlp, true),
    ] {
        let state = build(
            &small_spec(row, HeadSpec::scalar(ScalarLoss::L2), 0.0),
            4,
            4,
            0,
            0,
            11,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut batch = Batch::from_instances(
            &random_instances(&mut rng, 3, state.dims.window, 4, 0, 0),
            ScalerMethod::MeanAbs,
            1,
            true,
        );
        let gen = state.forward(&batch, Feedback::Point).unwrap();
        let w = batch.window;
        for k in 0..4 {
            batch.y.column_mut(w + k).assign(&gen.column(k));
        }
        let tf = state.forward(&batch, Feedback::Truth).unwrap();
        for (a, b) in tf.iter().zip(gen.iter()) {
            assert!((a - b).abs() < 1e-12, "{row:?}");
        }
    }
}

fn one_series_dataset(values: Vec<f64>, horizon: usize) -> TimeSeriesDataset {
    TimeSeriesDataset::new(
        "toy",
        vec![Series::new("a", values)],
        Frequency::Other(4),
        horizon,
    )
    .unwrap()
}

fn sampler(batch_size: usize, num_batches: usize, seed: u64) -> SamplerConfig {
    SamplerConfig {
        window_size: 1,
        batch_size,
        num_batches_per_epoch: num_batches,
        strategy: SampleStrategy::PerSeries,
        seed,
    }
}

/// A seq2seq model trained with teacher forcing memorizes a short periodic
/// series; its generated forecast then reproduces the training targets.
#[test]
fn seq2seq_memorizes_a_periodic_series() {
    let pattern = [1.0, 3.0, 2.0, 4.0];
    let values: Vec<f64> = (0..40).map(|t| pattern[t % 4]).collect();
    let data = one_series_dataset(values, 2);
    let sv = SplitView::train_val(&data, 2).unwrap();
    let mut spec = ArchitectureSpec::new(
        EncoderKind::Rnn,
        DecoderKind::Rnn,
        true,
        HeadSpec::scalar(ScalarLoss::L2),
    );
    spec.hidden_size = 16;
    let mut state = ModelState::build(
        &spec,
        InputDims {
            window: 4,
            horizon: 2,
            past_dim: 0,
            future_dim: 0,
        },
        ScalerMethod::None,
        1,
    )
    .unwrap();
    let cfg = TrainConfig {
        epochs: 150,
        sampler: sampler(16, 4, 1),
        optimizer: OptimizerConfig {
            lr: 1e-2,
            ..OptimizerConfig::default()
        },
        mase_period: 4,
        deadline: None,
    };
    let report = train(&mut state, &data, &sv, &cfg).unwrap();
    assert!(
        *report.epoch_losses.last().unwrap() < 1e-3,
        "{:?}",
        report.epoch_losses.last()
    );
    let origin = 30;
    let f = predict(&state, &data, &[(0, origin)], 4, 0).unwrap();
    for k in 0..2 {
        assert!(
            (f[0].point[k] - pattern[(origin + k) % 4]).abs() < 0.1,
            "{:?}",
            f[0].point
        );
    }
}

#[test]
fn training_reduces_loss_on_a_sine() {
    let values: Vec<f64> = (0..120)
        .map(|t| 10.0 + 3.0 * (std::f64::consts::TAU * t as f64 / 12.0).sin())
        .collect();
    let data = TimeSeriesDataset::new(
        "sine",
        vec![Series::new("a", values)],
        Frequency::Monthly,
        6,
    )
    .unwrap();
    let sv = split(&data).unwrap();
    let mut state = ModelState::build(
        &ArchitectureSpec::new(
            EncoderKind::Mlp,
            DecoderKind::Mlp,
            false,
            HeadSpec::scalar(ScalarLoss::L2),
        ),
        InputDims {
            window: 12,
            horizon: 6,
            past_dim: 0,
            future_dim: 0,
        },
        ScalerMethod::Standard,
        3,
    )
    .unwrap();
    let cfg = TrainConfig {
        epochs: 50,
        sampler: sampler(32, 10, 3),
        optimizer: OptimizerConfig {
            lr: 3e-3,
            ..OptimizerConfig::default()
        },
        mase_period: 12,
        deadline: None,
    };
    let report = train(&mut state, &data, &sv, &cfg).unwrap();
    let first = report.epoch_losses[0];
    let last = *report.epoch_losses.last().unwrap();
    assert!(last < 0.1 * first, "{first} -> {last}");

    let zero = TrainConfig {
        epochs: 0,
        ..cfg.clone()
    };
    assert!(matches!(
        train(&mut state, &data, &sv, &zero),
        Err(ZooError::InvalidTraining(_))
    ));
}

#[test]
fn huge_learning_rate_diverges() {
    let data = seasonal_corpus(4, 60, Frequency::Monthly, 6, 0.1, 2);
    let sv = split(&data).unwrap();
    for row in ArchitectureSpec::legal_rows() {
        for kind in [OptimizerKind::Adam, OptimizerKind::Sgd] {
            let spec = ArchitectureSpec::new(
                row.0,
                row.1,
                row.2,
                HeadSpec::distribution(DistKind::Gaussian, InferenceKind::DistMean),
            );
            let mut state = ModelState::build(
                &spec,
                InputDims {
                    window: 12,
                    horizon: 6,
                    past_dim: 0,
                    future_dim: 0,
                },
                ScalerMethod::MeanAbs,
                1,
            )
            .unwrap();
            let cfg = TrainConfig {
                epochs: 20,
                sampler: sampler(16, 5, 1),
                optimizer: OptimizerConfig {
                    kind,
                    lr: 1e9,
                    weight_decay: 0.0,
                },
                mase_period: 12,
                deadline: None,
            };
            let r = train(&mut state, &data, &sv, &cfg);
            assert!(
                matches!(r, Err(ZooError::Diverged { .. })),
                "{row:?} {kind:?}: {r:?}"
            );
            assert!(state.weights.iter().all(|w| w.is_finite()));
        }
    }
}

#[test]
fn training_is_deterministic() {
    let data = seasonal_corpus(5, 60, Frequency::Monthly, 6, 0.1, 4);
    let sv = split(&data).unwrap();
    let mut spec = ArchitectureSpec::new(
        EncoderKind::Rnn,
        DecoderKind::Mlp,
        true,
        HeadSpec::distribution(DistKind::Gaussian, InferenceKind::DistMean),
    );
    spec.dropout = 0.2;
    let cfg = TrainConfig {
        epochs: 3,
        sampler: sampler(8, 4, 5),
        optimizer: OptimizerConfig::default(),
        mase_period: 12,
        deadline: None,
    };
    let run = || {
        let mut s = ModelState::build(
            &spec,
            InputDims {
                window: 12,
                horizon: 6,
                past_dim: 0,
                future_dim: 0,
            },
            ScalerMethod::MeanAbs,
            7,
        )
        .unwrap();
        train(&mut s, &data, &sv, &cfg).unwrap();
        s
    };
    assert_eq!(run().weights, run().weights);
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let data = seasonal_corpus(2, 60, Frequency::Monthly, 6, 0.1, 4);
    let spec = ArchitectureSpec::new(
        EncoderKind::Tcn,
        DecoderKind::Mlp,
        false,
        HeadSpec::quantile(0.05, 0.95),
    );
    let state = ModelState::build(
        &spec,
        InputDims {
            window: 3,
            horizon: 6,
            past_dim: 0,
            future_dim: 0,
        },
        ScalerMethod::MinMax,
        1,
    )
    .unwrap();
    let back = ModelState::from_json(&state.to_json()).unwrap();
    assert_eq!(back, state);
    let targets = [(0, 54), (1, 54)];
    assert_eq!(
        predict(&state, &data, &targets, 12, 1).unwrap(),
        predict(&back, &data, &targets, 12, 1).unwrap()
    );
    let mut broken = state.clone();
    broken.weights.pop();
    assert!(ModelState::from_json(&broken.to_json()).is_err());
}

#[test]
fn point_forecasts_follow_the_head() {
    let data = seasonal_corpus(3, 60, Frequency::Monthly, 6, 0.1, 8);
    let targets: Vec<(usize, usize)> = (0..3).map(|i| (i, 54)).collect();
    let dims = InputDims {
        window: 12,
        horizon: 6,
        past_dim: 0,
        future_dim: 0,
    };
    let q = ModelState::build(
        &ArchitectureSpec::new(
            EncoderKind::Rnn,
            DecoderKind::Mlp,
            false,
            HeadSpec::quantile(0.1, 0.9),
        ),
        dims,
        ScalerMethod::MeanAbs,
        2,
    )
    .unwrap();
    for f in predict(&q, &data, &targets, 12, 0).unwrap() {
        for (k, p) in f.params.iter().enumerate() {
            assert!(p[0] <= p[1] && p[1] <= p[2]);
            assert_eq!(f.point[k], p[1]);
        }
    }
    let g = ModelState::build(
        &ArchitectureSpec::new(
            EncoderKind::Mlp,
            DecoderKind::Mlp,
            false,
            HeadSpec::distribution(DistKind::Gaussian, InferenceKind::DistMean),
        ),
        dims,
        ScalerMethod::MeanAbs,
        2,
    )
    .unwrap();
    for f in predict(&g, &data, &targets, 12, 0).unwrap() {
        for (k, p) in f.params.iter().enumerate() {
            assert_eq!(f.point[k], p[0]);
            assert!(p[1] >= 0.0);
        }
    }
    let s = ModelState::build(
        &ArchitectureSpec::new(
            EncoderKind::Mlp,
            DecoderKind::Mlp,
            false,
            HeadSpec::scalar(ScalarLoss::L1),
        ),
        dims,
        ScalerMethod::MeanAbs,
        2,
    )
    .unwrap();
    for f in predict(&s, &data, &targets, 12, 0).unwrap() {
        assert_eq!(f.point, f.params.iter().map(|p| p[0]).collect::<Vec<_>>());
    }
}

fn deepar(inference: InferenceKind, samples: usize) -> ModelState {
    let mut head = HeadSpec::distribution(DistKind::Gaussian, inference);
    head.num_samples = samples;
    ModelState::build(
        &ArchitectureSpec::new(EncoderKind::Rnn, DecoderKind::Mlp, true, head),
        InputDims {
            window: 12,
            horizon: 6,
            past_dim: 0,
            future_dim: 0,
        },
        ScalerMethod::None,
        5,
    )
    .unwrap()
}

#[test]
fn degenerate_distribution_sampling_equals_mean_path() {
    let data = seasonal_corpus(3, 60, Frequency::Monthly, 6, 0.1, 8);
    let targets: Vec<(usize, usize)> = (0..3).map(|i| (i, 54)).collect();
    let mut sampled = deepar(InferenceKind::SampleMean, 20);
    sampled.force_head_channel(1, -1e4);
    let mut mean = sampled.clone();
    mean.spec.head.inference = InferenceKind::DistMean;
    let a = predict(&sampled, &data, &targets, 12, 3).unwrap();
    let b = predict(&mean, &data, &targets, 12, 3).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.point, y.point);
    }
}

/// With constant μ and σ the trajectory mean is a Monte-Carlo estimate of μ.
#[test]
fn trajectory_mean_concentrates_around_distribution_mean() {
    let data = seasonal_corpus(4, 60, Frequency::Monthly, 6, 0.1, 8);
    let targets: Vec<(usize, usize)> = (0..4).map(|i| (i, 54)).collect();
    let sigma: f64 = 0.8;
    let mut state = deepar(InferenceKind::SampleMean, 100);
    state.force_head_channel(0, 2.5);
    state.force_head_channel(1, sigma.exp_m1().ln());
    assert!((softplus(sigma.exp_m1().ln()) - sigma).abs() < 1e-12);
    let mut mean_state = state.clone();
    mean_state.spec.head.inference = InferenceKind::DistMean;
    let mean = predict(&mean_state, &data, &targets, 12, 0).unwrap();
    let bound = 3.0 * sigma / 100f64.sqrt();
    let mut within = 0;
    let mut total = 0;
    for seed in 0..5 {
        for (s, m) in predict(&state, &data, &targets, 12, seed)
            .unwrap()
            .iter()
            .zip(&mean)
        {
            for k in 0..6 {
                assert_eq!(m.point[k], 2.5);
                total += 1;
                within += ((s.point[k] - m.point[k]).abs() <= bound) as usize;
            }
        }
    }
    // 3σ bound: expect ~99.7% of the 120 estimates inside
    assert!(within as f64 >= 0.97 * total as f64, "{within}/{total}");
}

#[test]
fn tcn_uses_its_whole_receptive_field() {
    let spec = small_spec(
        (EncoderKind::Tcn, DecoderKind::Mlp, false),
        HeadSpec::scalar(ScalarLoss::L2),
        0.0,
    );
    let state = build(&spec, 1, 2, 0, 0, 6);
    let rf = receptive_field(&spec).unwrap();
    assert_eq!(state.dims.window, rf);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inst = random_instances(&mut rng, 1, rf, 2, 0, 0);
    let base = state
        .forward(
            &Batch::from_instances(&inst, ScalerMethod::None, 1, true),
            Feedback::Truth,
        )
        .unwrap();
    let mut changed = inst.clone();
    changed[0].past_targets[0] += 1.0;
    changed[0].past_mask[0] = true;
    let out = state
        .forward(
            &Batch::from_instances(&changed, ScalerMethod::None, 1, true),
            Feedback::Truth,
        )
        .unwrap();
    assert_ne!(base, out);

    // a one-block network sees 3 steps: the same perturbation 4 steps back is invisible
    let mut narrow = spec.clone();
    narrow.tcn_num_blocks = 1;
    let small = ModelState::build(
        &narrow,
        InputDims {
            window: 3,
            horizon: 2,
            past_dim: 0,
            future_dim: 0,
        },
        ScalerMethod::None,
        6,
    )
    .unwrap();
    let weights = small.weights.clone();
    let wide_dims = InputDims {
        window: 5,
        ..small.dims
    };
    let mut wide = small.clone();
    wide.dims = wide_dims;
    wide.weights = weights;
    let inst = random_instances(&mut rng, 1, 5, 2, 0, 0);
    let a = wide
        .forward(
            &Batch::from_instances(&inst, ScalerMethod::None, 1, true),
            Feedback::Truth,
        )
        .unwrap();
    let mut far = inst.clone();
    far[0].past_targets[1] += 1.0;
    let b = wide
        .forward(
            &Batch::from_instances(&far, ScalerMethod::None, 1, true),
            Feedback::Truth,
        )
        .unwrap();
    assert_eq!(a, b);
}

#[test]
fn weight_count_depends_only_on_spec_and_dims() {
    let spec = ArchitectureSpec::new(
        EncoderKind::Rnn,
        DecoderKind::Rnn,
        false,
        HeadSpec::scalar(ScalarLoss::L2),
    );
    let dims = InputDims {
        window: 7,
        horizon: 3,
        past_dim: 2,
        future_dim: 1,
    };
    let a = ModelState::build(&spec, dims, ScalerMethod::None, 1).unwrap();
    let b = ModelState::build(&spec, dims, ScalerMethod::None, 2).unwrap();
    assert_eq!(a.weights.len(), b.weights.len());
    assert_ne!(a.weights, b.weights);
    assert_eq!(a.weights.len(), a.network().num_weights());
}
