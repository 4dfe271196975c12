//! Random-forest surrogate, expected improvement and the multi-fidelity
//! scheduler.

pub mod bench;
pub mod forest;
pub mod scheduler;

use rand::Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use thiserror::Error;

use crate::configspace::{ConfigSpace, Configuration};

pub use forest::{Forest, ForestParams, Node, Tree};
pub use scheduler::{
    run_optimization, EvalOutcome, Evaluator, Job, OptimizationResult, OptimizerSettings,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurrogateError {
    #[error("need at least 2 observations to fit a forest, got {0}")]
    TooFewPoints(usize),
    #[error("shape error: {0}")]
    Shape(String),
}

/// Expected improvement of a Gaussian predictive `N(mean, variance)` below `f_best`.
pub fn expected_improvement(mean: f64, variance: f64, f_best: f64) -> f64 {
    let gap = f_best - mean;
    let sigma = variance.max(0.0).sqrt();
    if sigma == 0.0 || !sigma.is_finite() {
        return gap.max(0.0);
    }
    let z = gap / sigma;
    let n = Normal::standard();
    (gap * n.cdf(z) + sigma * n.pdf(z)).max(0.0)
}

/// Expected improvement below `f_best > 0` when `ln Y ~ N(log_mean, log_variance)`.
///
/// `E[max(f_best - Y, 0)] = f_best Φ(z) - exp(m + s²/2) Φ(z - s)` with
/// `z = (ln f_best - m) / s`.
pub fn expected_improvement_lognormal(log_mean: f64, log_variance: f64, f_best: f64) -> f64 {
    if f_best <= 0.0 {
        return 0.0;
    }
    let s = log_variance.max(0.0).sqrt();
    if s == 0.0 || !s.is_finite() {
        return (f_best - log_mean.exp()).max(0.0);
    }
    let z = (f_best.ln() - log_mean) / s;
    let n = Normal::standard();
    (f_best * n.cdf(z) - (log_mean + 0.5 * s * s).exp() * n.cdf(z - s)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuggestParams {
    pub forest: ForestParams,
    pub random_candidates: usize,
    /// Best observed configurations whose neighborhoods are scored.
    pub local_starts: usize,
    pub neighbors_per_start: usize,
}

impl Default for SuggestParams {
    fn default() -> Self {
        Self {
            // few rung observations: let leaves resolve single points
            forest: ForestParams {
                min_leaf: 1,
                ..ForestParams::default()
            },
            random_candidates: 1000,
            local_starts: 3,
            neighbors_per_start: 20,
        }
    }
}

fn fresh_sample<R: Rng + ?Sized>(
    space: &ConfigSpace,
    taken: &[Configuration],
    rng: &mut R,
) -> Configuration {
    let mut c = space.sample(rng);
    for _ in 0..1000 {
        if !taken.contains(&c) {
            break;
        }
        c = space.sample(rng);
    }
    c
}

/// Next configuration to run at a rung.
///
/// `observed` holds the rung's finished runs with their losses, `taken`
/// every configuration already started there. Odd suggestion indices and
/// rungs with fewer than `2 d` observations get a random configuration;
/// otherwise the expected-improvement maximizer among random candidates and
/// neighbors of the best observed configurations is returned, ties going to
/// the lower predicted loss.
pub fn suggest<R: Rng + ?Sized>(
    observed: &[(Configuration, f64)],
    taken: &[Configuration],
    space: &ConfigSpace,
    index: usize,
    params: &SuggestParams,
    rng: &mut R,
) -> Configuration {
    if observed.len() < 2 * space.len() || index % 2 == 1 {
        return fresh_sample(space, taken, rng);
    }
    let x: Vec<Vec<f64>> = observed.iter().map(|(c, _)| space.vectorize(c)).collect();
    let y: Vec<f64> = observed.iter().map(|(_, l)| *l).collect();
    let Ok(forest) = Forest::fit(&x, &y, &params.forest, rng) else {
        return fresh_sample(space, taken, rng);
    };
    let f_best = y.iter().copied().fold(f64::INFINITY, f64::min);
    let mut candidates: Vec<Configuration> = (0..params.random_candidates)
        .map(|_| space.sample(rng))
        .collect();
    let mut order: Vec<usize> = (0..observed.len()).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    for &i in order.iter().take(params.local_starts) {
        candidates.extend(space.neighbors(&observed[i].0, rng, params.neighbors_per_start));
    }
    let score = |c: &Configuration| {
        let x = space.vectorize(c);
        if forest.log_space {
            let (m, v) = forest.predict_raw(&x);
            (expected_improvement_lognormal(m, v, f_best), m)
        } else {
            let (m, v) = forest.predict(&x);
            (expected_improvement(m, v, f_best), m)
        }
    };
    // equal EI (typically zero where every tree agrees) goes to the lower predicted mean
    let better = |a: (f64, f64), b: (f64, f64)| a.0 > b.0 || (a.0 == b.0 && a.1 < b.1);
    let mut best: Option<((f64, f64), Configuration)> = None;
    for c in candidates {
        if taken.contains(&c) {
            continue;
        }
        let s = score(&c);
        if best.as_ref().is_none_or(|(b, _)| better(s, *b)) {
            best = Some((s, c));
        }
    }
    best.map_or_else(|| fresh_sample(space, taken, rng), |(_, c)| c)
}
