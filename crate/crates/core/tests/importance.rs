use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tsforge::configspace::{ConfigSpace, Configuration, HyperparameterDef, Value};
use tsforge::fidelity::BudgetType;
use tsforge::history::{EvalStatus, RunRecord};
use tsforge::importance::{fanova, per_dataset_csv, pooled_csv, ImportanceError, ImportanceReport};

fn cube(names: &[&str]) -> ConfigSpace {
    ConfigSpace::new(
        names
            .iter()
            .map(|n| HyperparameterDef::real(n, 0.0, 1.0, false, 0.5))
            .collect(),
        vec![],
    )
    .unwrap()
}

fn record(id: usize, c: &Configuration, loss: f64) -> RunRecord {
    RunRecord {
        config_id: id as u64,
        config: c.values.clone(),
        space_hash: c.space_hash.clone(),
        budget_type: BudgetType::Vanilla,
        budget_value: 1.0,
        val_loss: loss,
        train_seconds: 0.0,
        eval_seconds: 0.0,
        status: EvalStatus::Ok,
        wall_clock: id as f64,
        seed: 0,
    }
}

fn history(
    space: &ConfigSpace,
    n: usize,
    seed: u64,
    f: impl Fn(&Configuration) -> f64,
) -> Vec<RunRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let c = space.sample(&mut rng);
            let y = f(&c);
            record(i, &c, y)
        })
        .collect()
}

fn x(c: &Configuration, name: &str) -> f64 {
    c.real(name).unwrap()
}

fn check_sums(r: &ImportanceReport) {
    let total: f64 = r.per_hyperparameter.iter().map(|(_, v)| v).sum::<f64>() + r.residual;
    assert!((total - 1.0).abs() < 1e-9);
    assert!(r.per_hyperparameter.iter().all(|(_, v)| *v >= 0.0));
    assert!(r.residual >= -1e-9);
}

#[test]
fn single_factor_dominates() {
    let space = cube(&["a", "b", "c", "d"]);
    let h = history(&space, 200, 1, |c| 1.0 + 10.0 * (x(c, "a") - 0.3).powi(2));
    let r = fanova(&h, &space, 1.0, 50, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    check_sums(&r);
    assert!(r.get("a").unwrap() > 0.9, "{r:?}");
    for n in ["b", "c", "d"] {
        assert!(r.get(n).unwrap() < 0.05, "{n}: {r:?}");
    }
}

#[test]
fn additive_factors_split_three_to_one() {
    let space = cube(&["a", "b", "c"]);
    for seed in 0..10 {
        // Var(sqrt(3) a) = 3 Var(b) under uniform sampling
        let h = history(&space, 200, 100 + seed, |c| {
            3f64.sqrt() * x(c, "a") + x(c, "b")
        });
        let r = fanova(&h, &space, 1.0, 50, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        check_sums(&r);
        let ratio = r.get("a").unwrap() / r.get("b").unwrap();
        assert!((2.2..=3.8).contains(&ratio), "seed {seed}: {ratio}");
    }
}

#[test]
fn degenerate_histories_are_rejected() {
    let space = cube(&["a", "b"]);
    let flat = history(&space, 30, 2, |_| 0.7);
    assert_eq!(
        fanova(&flat, &space, 1.0, 10, &mut ChaCha8Rng::seed_from_u64(0)),
        Err(ImportanceError::ZeroVariance)
    );
    let short = history(&space, 9, 2, |c| x(c, "a"));
    assert_eq!(
        fanova(&short, &space, 1.0, 10, &mut ChaCha8Rng::seed_from_u64(0)),
        Err(ImportanceError::TooFewRuns(9))
    );
    // runs at other budgets or that failed do not count
    let mut mixed = history(&space, 12, 2, |c| x(c, "a"));
    mixed[0].status = EvalStatus::Failed;
    mixed[1].budget_value = 1.0 / 3.0;
    mixed[2].status = EvalStatus::Timeout;
    assert_eq!(
        fanova(&mixed, &space, 1.0, 10, &mut ChaCha8Rng::seed_from_u64(0)),
        Err(ImportanceError::TooFewRuns(9))
    );
}

#[test]
fn affine_rescaling_leaves_importances_unchanged() {
    let space = cube(&["a", "b", "c"]);
    let h = history(&space, 120, 3, |c| {
        x(c, "a").sin() + 2.0 * x(c, "b") * x(c, "c")
    });
    let scaled: Vec<RunRecord> = h
        .iter()
        .map(|r| RunRecord {
            val_loss: 4.0 * r.val_loss - 7.0,
            ..r.clone()
        })
        .collect();
    let a = fanova(&h, &space, 1.0, 30, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let b = fanova(&scaled, &space, 1.0, 30, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    for ((n, u), (_, v)) in a.per_hyperparameter.iter().zip(&b.per_hyperparameter) {
        assert!((u - v).abs() < 1e-9, "{n}: {u} vs {v}");
    }
}

#[test]
fn permuting_an_irrelevant_column_barely_moves_it() {
    let space = cube(&["a", "b", "c"]);
    let h = history(&space, 200, 4, |c| 5.0 * x(c, "a") + x(c, "b").powi(2));
    let mut values: Vec<Value> = h.iter().map(|r| r.config["c"].clone()).collect();
    values.shuffle(&mut ChaCha8Rng::seed_from_u64(9));
    let permuted: Vec<RunRecord> = h
        .iter()
        .zip(values)
        .map(|(r, v)| {
            let mut r = r.clone();
            r.config.insert("c".into(), v);
            r
        })
        .collect();
    let a = fanova(&h, &space, 1.0, 50, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let b = fanova(
        &permuted,
        &space,
        1.0,
        50,
        &mut ChaCha8Rng::seed_from_u64(1),
    )
    .unwrap();
    assert!((a.get("c").unwrap() - b.get("c").unwrap()).abs() < 0.05);
}

#[test]
fn one_dimension_explains_everything() {
    let space = cube(&["a"]);
    let h = history(&space, 40, 5, |c| (6.0 * x(c, "a")).cos());
    let r = fanova(&h, &space, 1.0, 20, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    check_sums(&r);
    assert!(r.residual < 0.1 && r.residual.abs() < 1e-9);
}

#[test]
fn conditional_children_include_their_activity() {
    let space = ConfigSpace::new(
        vec![
            HyperparameterDef::categorical("kind", &["flat", "curved"], "flat"),
            HyperparameterDef::real("bend", 0.0, 1.0, false, 0.5).when("kind", &["curved"]),
            HyperparameterDef::real("noise", 0.0, 1.0, false, 0.5),
        ],
        vec![],
    )
    .unwrap();
    let h = history(&space, 150, 6, |c| {
        c.real("bend").map_or(1.0, |b| 4.0 * b * b) + 0.01 * x(c, "noise")
    });
    let r = fanova(&h, &space, 1.0, 50, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    check_sums(&r);
    assert!(r.get("bend").unwrap() > r.get("noise").unwrap());
    assert!(r.get("noise").unwrap() < 0.05);
}

#[test]
fn pooled_summary_rows() {
    let space = cube(&["a", "b", "c"]);
    let mut reports = BTreeMap::new();
    let h = history(&space, 60, 8, |c| x(c, "a"));
    let one = fanova(&h, &space, 1.0, 20, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    reports.insert("d1".to_string(), one.clone());
    let pooled = pooled_csv(&reports);
    let rows: Vec<&str> = pooled.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for (row, (name, v)) in rows.iter().zip(&one.per_hyperparameter) {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[0], name);
        assert_eq!(cols[3].parse::<f64>().unwrap(), *v);
    }
    let h2 = history(&space, 60, 9, |c| x(c, "b"));
    let two = fanova(&h2, &space, 1.0, 20, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    reports.insert("d2".to_string(), two.clone());
    let pooled = pooled_csv(&reports);
    for (row, ((_, u), (_, v))) in pooled
        .lines()
        .skip(1)
        .zip(one.per_hyperparameter.iter().zip(&two.per_hyperparameter))
    {
        let median: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
        assert!((median - 0.5 * (u + v)).abs() < 1e-15);
    }
    let long = per_dataset_csv(&reports);
    assert_eq!(long.lines().count(), 1 + 2 * 4);
    assert!(long.starts_with("hyperparameter,dataset,importance\n"));
}
