//! Synthetic corpora for tests, examples and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{Frequency, Series, TimeSeriesDataset};

/// Noisy seasonal series with random level, amplitude, phase and a mild
/// trend. Values stay positive.
pub fn seasonal_corpus(
    n_series: usize,
    length: usize,
    frequency: Frequency,
    horizon: usize,
    noise: f64,
    seed: u64,
) -> TimeSeriesDataset {
    let period = frequency.mase_period().max(2) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let series = (0..n_series)
        .map(|i| {
            let level = rng.random_range(20.0..100.0);
            let amplitude = rng.random_range(0.2..0.5) * level;
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let trend = rng.random_range(-0.002..0.004) * level;
            let targets = (0..length)
                .map(|t| {
                    let s = (std::f64::consts::TAU * t as f64 / period + phase).sin();
                    let v = level
                        + trend * t as f64
                        + amplitude * s
                        + noise * level * normal.sample(&mut rng);
                    v.max(0.1)
                })
                .collect();
            Series::new(format!("s{i:05}"), targets)
        })
        .collect();
    TimeSeriesDataset::new(
        format!("seasonal-{n_series}-{seed}"),
        series,
        frequency,
        horizon,
    )
    .expect("valid synthetic dataset")
}

/// Gaussian random walks started at 100.
pub fn random_walk_corpus(
    n_series: usize,
    length: usize,
    horizon: usize,
    seed: u64,
) -> TimeSeriesDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let series = (0..n_series)
        .map(|i| {
            let mut v = 100.0;
            let targets = (0..length)
                .map(|_| {
                    v += normal.sample(&mut rng);
                    v
                })
                .collect();
            Series::new(format!("rw{i:05}"), targets)
        })
        .collect();
    TimeSeriesDataset::new(
        format!("random-walk-{n_series}-{seed}"),
        series,
        Frequency::Other(1),
        horizon,
    )
    .expect("valid synthetic dataset")
}
