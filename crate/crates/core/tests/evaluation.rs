use proptest::prelude::*;
use tsforge::clock::ClockKind;
use tsforge::configspace::{default_space, Configuration, Value};
use tsforge::dataset::{split, Frequency, Series, TimeSeriesDataset};
use tsforge::evaluation::{
    dummy_loss, evaluate, forecast_test, proxy_plan, refit, validation_loss, EvalSettings,
    PipelineEvaluator, ProxySettings,
};
use tsforge::fidelity::{BudgetType, FidelityBudget};
use tsforge::history::EvalStatus;
use tsforge::surrogate::Evaluator;
use tsforge::synthetic::{random_walk_corpus, seasonal_corpus};

fn quick() -> EvalSettings {
    EvalSettings {
        max_epochs: 5,
        proxy: ProxySettings {
            enabled: true,
            min_proxy: 5,
            threshold: 20,
        },
    }
}

fn default_config() -> Configuration {
    default_space().default_configuration()
}

#[test]
fn all_dummy_loss_matches_a_naive_oracle() {
    let d = random_walk_corpus(25, 40, 4, 11);
    let sv = split(&d).unwrap();
    // naive MASE written out from the definition: period 1, last training value as forecast
    let mut total = 0.0;
    for s in &d.series {
        let l = s.len();
        let train = &s.targets[..l - 8];
        let val = &s.targets[l - 8..l - 4];
        let last = train[train.len() - 1];
        let num: f64 = val.iter().map(|y| (y - last).abs()).sum::<f64>() / 4.0;
        let den: f64 =
            train.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (train.len() - 1) as f64;
        total += num / den;
    }
    let oracle = total / 25.0;
    let got = dummy_loss(&d, &sv).unwrap();
    assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
    assert_eq!(PipelineEvaluator::new(&d, quick()).unwrap().penalty(), got);
}

#[test]
fn constant_series_fall_back_to_mae() {
    let series = (0..3)
        .map(|i| Series::new(format!("c{i}"), vec![4.0 + i as f64; 30]))
        .collect();
    let d = TimeSeriesDataset::new("flat", series, Frequency::Monthly, 3).unwrap();
    let sv = split(&d).unwrap();
    assert_eq!(dummy_loss(&d, &sv).unwrap(), 0.0);
    let out = evaluate(
        &default_config(),
        FidelityBudget::full(BudgetType::Vanilla),
        &d,
        &sv,
        0,
        &quick(),
        ClockKind::Work,
        f64::INFINITY,
        0.0,
    );
    assert_eq!(out.status, EvalStatus::Ok);
    assert!(out.val_loss.is_finite() && out.val_loss >= 0.0);
}

#[test]
fn proxy_is_irrelevant_below_the_threshold() {
    let d = seasonal_corpus(12, 60, Frequency::Monthly, 6, 0.05, 3);
    let sv = split(&d).unwrap();
    let on = quick();
    let off = EvalSettings {
        proxy: ProxySettings {
            enabled: false,
            ..on.proxy
        },
        ..on
    };
    for budget in [
        FidelityBudget::full(BudgetType::Epochs),
        FidelityBudget::new(BudgetType::Epochs, 1.0 / 3.0).unwrap(),
    ] {
        let a = evaluate(
            &default_config(),
            budget,
            &d,
            &sv,
            5,
            &on,
            ClockKind::Work,
            f64::INFINITY,
            9.0,
        );
        let b = evaluate(
            &default_config(),
            budget,
            &d,
            &sv,
            5,
            &off,
            ClockKind::Work,
            f64::INFINITY,
            9.0,
        );
        assert_eq!(a.status, EvalStatus::Ok);
        assert_eq!(a.val_loss.to_bits(), b.val_loss.to_bits());
        assert_eq!(a.val_forecasts, b.val_forecasts);
    }
}

#[test]
fn full_budget_is_a_pure_model_loss() {
    let d = seasonal_corpus(30, 60, Frequency::Monthly, 6, 0.05, 4);
    let sv = split(&d).unwrap();
    let out = evaluate(
        &default_config(),
        FidelityBudget::full(BudgetType::Epochs),
        &d,
        &sv,
        1,
        &quick(),
        ClockKind::Work,
        f64::INFINITY,
        9.0,
    );
    let f = out.val_forecasts.unwrap();
    let dummies = d
        .series
        .iter()
        .zip(&sv.ranges)
        .zip(&f)
        .filter(|((s, r), p)| p.iter().all(|v| *v == s.targets[r.val.start - 1]))
        .count();
    assert_eq!(dummies, 0);
}

#[test]
fn mixed_loss_lies_between_its_parts() {
    let d = seasonal_corpus(30, 60, Frequency::Monthly, 6, 0.05, 6);
    let sv = split(&d).unwrap();
    let budget = FidelityBudget::new(BudgetType::Epochs, 1.0 / 9.0).unwrap();
    let out = evaluate(
        &default_config(),
        budget,
        &d,
        &sv,
        2,
        &quick(),
        ClockKind::Work,
        f64::INFINITY,
        9.0,
    );
    assert_eq!(out.status, EvalStatus::Ok);
    let f = out.val_forecasts.unwrap();
    let plan = proxy_plan(30, 1.0 / 9.0, 5, 20);
    assert_eq!(plan.evaluated_indices, vec![0, 6, 12, 18, 24]);
    for (i, (s, r)) in d.series.iter().zip(&sv.ranges).enumerate() {
        let is_dummy = f[i].iter().all(|v| *v == s.targets[r.val.start - 1]);
        assert_eq!(is_dummy, !plan.evaluated_indices.contains(&i), "series {i}");
    }
    let per_series: Vec<f64> = (0..30)
        .map(|i| {
            let one =
                TimeSeriesDataset::new("one", vec![d.series[i].clone()], d.frequency, d.horizon)
                    .unwrap();
            validation_loss(&one, &split(&one).unwrap(), &f[i..=i], 12).unwrap()
        })
        .collect();
    let lo = per_series.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = per_series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(lo <= out.val_loss && out.val_loss <= hi);
    let mean = per_series.iter().sum::<f64>() / 30.0;
    assert!((mean - out.val_loss).abs() < 1e-12);
}

#[test]
fn low_rungs_are_cheaper_for_every_budget_type() {
    let d = seasonal_corpus(30, 120, Frequency::Monthly, 6, 0.05, 8);
    let sv = split(&d).unwrap();
    let settings = EvalSettings {
        max_epochs: 9,
        ..quick()
    };
    for bt in [
        BudgetType::Epochs,
        BudgetType::Resolution,
        BudgetType::Series,
        BudgetType::Samples,
    ] {
        let mut cheap = Vec::new();
        let mut full = Vec::new();
        for seed in 0..5 {
            for (value, out) in [(1.0 / 9.0, &mut cheap), (1.0, &mut full)] {
                let o = evaluate(
                    &default_config(),
                    FidelityBudget::new(bt, value).unwrap(),
                    &d,
                    &sv,
                    seed,
                    &settings,
                    ClockKind::Wall,
                    f64::INFINITY,
                    9.0,
                );
                assert_eq!(o.status, EvalStatus::Ok, "{bt} {value}");
                out.push(o.train_seconds + o.eval_seconds);
            }
        }
        let median = |v: &mut Vec<f64>| {
            v.sort_by(f64::total_cmp);
            v[2]
        };
        let (c, f) = (median(&mut cheap), median(&mut full));
        assert!(c < f, "{bt}: {c} vs {f}");
    }
}

#[test]
fn resolution_rung_forecasts_a_shortened_horizon() {
    let d = seasonal_corpus(6, 120, Frequency::Monthly, 6, 0.05, 9);
    let sv = split(&d).unwrap();
    let out = evaluate(
        &default_config(),
        FidelityBudget::new(BudgetType::Resolution, 1.0 / 3.0).unwrap(),
        &d,
        &sv,
        0,
        &quick(),
        ClockKind::Work,
        f64::INFINITY,
        9.0,
    );
    assert_eq!(out.status, EvalStatus::Ok);
    assert!(out.val_forecasts.unwrap().iter().all(|p| p.len() == 2));
}

#[test]
fn failures_and_timeouts_carry_the_penalty() {
    let d = seasonal_corpus(6, 60, Frequency::Monthly, 6, 0.05, 10);
    let sv = split(&d).unwrap();
    let mut broken = default_config();
    broken.values.insert("lr".into(), Value::Real(f64::NAN));
    broken.values.remove("hidden_size");
    let out = evaluate(
        &broken,
        FidelityBudget::full(BudgetType::Vanilla),
        &d,
        &sv,
        0,
        &quick(),
        ClockKind::Work,
        f64::INFINITY,
        7.5,
    );
    assert_eq!((out.status, out.val_loss), (EvalStatus::Failed, 7.5));
    assert!(out.val_forecasts.is_none());

    let out = evaluate(
        &default_config(),
        FidelityBudget::full(BudgetType::Vanilla),
        &d,
        &sv,
        0,
        &quick(),
        ClockKind::Work,
        1e-9,
        7.5,
    );
    assert_eq!((out.status, out.val_loss), (EvalStatus::Timeout, 7.5));
}

#[test]
fn refit_forecasts_every_test_tail() {
    let d = seasonal_corpus(5, 60, Frequency::Monthly, 6, 0.05, 12);
    let state = refit(&default_config(), &d, 3, 3).unwrap();
    let f = forecast_test(&state, &d, 3).unwrap();
    assert_eq!(f.len(), 5);
    assert!(f
        .iter()
        .all(|p| p.len() == 6 && p.iter().all(|v| v.is_finite())));
    assert_eq!(state, refit(&default_config(), &d, 3, 3).unwrap());
    let reloaded = tsforge::zoo::ModelState::from_json(&state.to_json()).unwrap();
    assert_eq!(f, forecast_test(&reloaded, &d, 3).unwrap());
}

proptest! {
    #[test]
    fn proxy_plans_are_deterministic_grids(n in 1usize..5000, b in 0.01f64..=1.0, min_proxy in 1usize..2000, threshold in 1usize..2000) {
        let p = proxy_plan(n, b, min_proxy, threshold);
        prop_assert_eq!(&p, &proxy_plan(n, b, min_proxy, threshold));
        let m = p.evaluated_indices.len();
        prop_assert!(m >= 1 && m <= n);
        prop_assert!(p.evaluated_indices.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(*p.evaluated_indices.last().unwrap() < n);
        if n <= threshold || b >= 1.0 {
            prop_assert_eq!(m, n);
        } else {
            prop_assert_eq!(m, ((b * n as f64).round() as usize).max(min_proxy).min(n));
        }
        prop_assert!((p.covered_fraction - m as f64 / n as f64).abs() < 1e-15);
    }
}
