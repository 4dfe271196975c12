//! Synthetic objectives for exercising the optimizer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::configspace::{ConfigSpace, HyperparameterDef};
use crate::history::EvalStatus;

use super::{EvalOutcome, Evaluator, Job};

/// Branin-Hoo on `[-5, 10] × [0, 15]`; global minimum ≈ 0.397887.
pub fn branin(x1: f64, x2: f64) -> f64 {
    use std::f64::consts::PI;
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    (x2 - b * x1 * x1 + c * x1 - 6.0).powi(2) + 10.0 * (1.0 - t) * x1.cos() + 10.0
}

pub fn branin_space() -> ConfigSpace {
    ConfigSpace::new(
        vec![
            HyperparameterDef::real("x1", -5.0, 10.0, false, 2.5),
            HyperparameterDef::real("x2", 0.0, 15.0, false, 7.5),
        ],
        vec![],
    )
    .expect("branin space is well formed")
}

/// Branin as a pipeline evaluator over hyperparameters `x1` and `x2`.
pub struct BraninEvaluator;

impl Evaluator for BraninEvaluator {
    fn evaluate(&self, job: &Job) -> EvalOutcome {
        let (Some(x1), Some(x2)) = (job.config.real("x1"), job.config.real("x2")) else {
            return EvalOutcome::failed(self.penalty());
        };
        EvalOutcome {
            status: EvalStatus::Ok,
            val_loss: branin(x1, x2),
            train_seconds: 0.0,
            eval_seconds: 0.0,
            val_forecasts: None,
        }
    }

    fn penalty(&self) -> f64 {
        400.0
    }
}

/// Best loss among `n` uniform samples of `space`.
pub fn random_search_best(
    space: &ConfigSpace,
    n: usize,
    seed: u64,
    f: impl Fn(&crate::configspace::Configuration) -> f64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| f(&space.sample(&mut rng)))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branin_minima() {
        use std::f64::consts::PI;
        for (x1, x2) in [(-PI, 12.275), (PI, 2.275), (9.42478, 2.475)] {
            assert!((branin(x1, x2) - 0.397887).abs() < 1e-5);
        }
    }
}
