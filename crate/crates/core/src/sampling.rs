//! Sliding-window training instances, per-epoch sampling plans and
//! per-instance target scaling.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{SplitView, TimeSeriesDataset};

#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    #[error("no series has an admissible forecast origin (train length must exceed horizon {0})")]
    NoAdmissibleOrigins(usize),
    #[error("unknown token '{0}'")]
    UnknownToken(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStrategy {
    /// Same number of instances from every series.
    PerSeries,
    /// Every admissible (series, origin) pair equally likely.
    Uniform,
}

impl FromStr for SampleStrategy {
    type Err = SamplingError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per_series" => Ok(Self::PerSeries),
            "uniform" => Ok(Self::Uniform),
            other => Err(SamplingError::UnknownToken(other.into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalerMethod {
    None,
    MeanAbs,
    Standard,
    MinMax,
}

impl ScalerMethod {
    pub fn token(self) -> &'static str {
        match self {
            ScalerMethod::None => "none",
            ScalerMethod::MeanAbs => "mean_abs",
            ScalerMethod::Standard => "standard",
            ScalerMethod::MinMax => "min_max",
        }
    }
}

impl fmt::Display for ScalerMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for ScalerMethod {
    type Err = SamplingError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "mean_abs" => Ok(Self::MeanAbs),
            "standard" => Ok(Self::Standard),
            "min_max" => Ok(Self::MinMax),
            other => Err(SamplingError::UnknownToken(other.into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Past window length (already resolved from the multiplier, TCN
    /// receptive field or resolution shrink).
    pub window_size: usize,
    pub batch_size: usize,
    pub num_batches_per_epoch: usize,
    pub strategy: SampleStrategy,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn instances_per_epoch(&self) -> usize {
        self.batch_size * self.num_batches_per_epoch
    }
}

/// `round(multiplier * base)`, at least 1.
pub fn window_from_multiplier(multiplier: f64, base_window: usize) -> usize {
    ((multiplier * base_window as f64).round() as usize).max(1)
}

/// One training or forecasting instance.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowInstance {
    pub past_targets: Vec<f64>,
    /// `false` marks left padding.
    pub past_mask: Vec<bool>,
    /// `window × P`, zero rows where padded.
    pub past_covariates: Option<Array2<f64>>,
    /// `(window + H) × F`: rows for the past window followed by the horizon.
    pub future_covariates: Option<Array2<f64>>,
    pub future_targets: Vec<f64>,
    pub series_index: usize,
    pub origin: usize,
}

impl WindowInstance {
    pub fn window(&self) -> usize {
        self.past_targets.len()
    }

    pub fn horizon(&self) -> usize {
        self.future_targets.len()
    }

    pub fn observed_past(&self) -> impl Iterator<Item = f64> + '_ {
        self.past_targets
            .iter()
            .zip(&self.past_mask)
            .filter(|(_, m)| **m)
            .map(|(v, _)| *v)
    }
}

/// Number of admissible origins for a train segment of `train_len` points.
///
/// Origins `1..=train_len - H`: at least one observed past point and `H`
/// training targets after the origin.
pub fn admissible_count(train_len: usize, horizon: usize) -> usize {
    train_len.saturating_sub(horizon)
}

fn plan_rng(seed: u64, epoch: u64) -> ChaCha8Rng {
    let mut z = seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

/// Exactly `batch_size × num_batches` (series, origin) pairs for one epoch.
pub fn epoch_plan(
    split: &SplitView,
    cfg: &SamplerConfig,
    epoch: u64,
) -> Result<Vec<(usize, usize)>, SamplingError> {
    let h = split.horizon;
    let counts: Vec<usize> = (0..split.ranges.len())
        .map(|i| admissible_count(split.train_len(i), h))
        .collect();
    let total_admissible: usize = counts.iter().sum();
    if total_admissible == 0 {
        return Err(SamplingError::NoAdmissibleOrigins(h));
    }
    let wanted = cfg.instances_per_epoch();
    let mut rng = plan_rng(cfg.seed, epoch);
    let mut plan = Vec::with_capacity(wanted);
    match cfg.strategy {
        SampleStrategy::PerSeries => {
            let active: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] > 0).collect();
            let per = wanted.div_ceil(active.len());
            let draws: Vec<Vec<usize>> = active
                .iter()
                .map(|&i| {
                    (0..per)
                        .map(|_| 1 + rng.random_range(0..counts[i]))
                        .collect()
                })
                .collect();
            'outer: for j in 0..per {
                for (a, &i) in active.iter().enumerate() {
                    if plan.len() == wanted {
                        break 'outer;
                    }
                    plan.push((i, draws[a][j]));
                }
            }
        }
        SampleStrategy::Uniform => {
            let mut cumulative = Vec::with_capacity(counts.len());
            let mut acc = 0usize;
            for &c in &counts {
                acc += c;
                cumulative.push(acc);
            }
            for _ in 0..wanted {
                let u = rng.random_range(0..total_admissible);
                let i = cumulative.partition_point(|&c| c <= u);
                let before = if i == 0 { 0 } else { cumulative[i - 1] };
                plan.push((i, 1 + u - before));
            }
        }
    }
    Ok(plan)
}

fn window_rows(m: &Array2<f64>, start: i64, end: i64) -> Array2<f64> {
    let rows = (end - start) as usize;
    let mut out = Array2::zeros((rows, m.ncols()));
    for (r, t) in (start..end).enumerate() {
        if t >= 0 && (t as usize) < m.nrows() {
            out.row_mut(r).assign(&m.row(t as usize));
        }
    }
    out
}

/// Cuts the window ending just before `origin`, left-padding with zeros.
///
/// Future targets beyond the series end (forecasting past the data) are
/// zero; training callers guarantee `origin + H <= len`.
pub fn materialize_at(
    dataset: &TimeSeriesDataset,
    series_index: usize,
    origin: usize,
    window: usize,
    horizon: usize,
) -> WindowInstance {
    let s = &dataset.series[series_index];
    assert!(
        origin <= s.len(),
        "origin {origin} beyond series length {}",
        s.len()
    );
    let start = origin as i64 - window as i64;
    let mut past_targets = Vec::with_capacity(window);
    let mut past_mask = Vec::with_capacity(window);
    for t in start..origin as i64 {
        if t >= 0 {
            past_targets.push(s.targets[t as usize]);
            past_mask.push(true);
        } else {
            past_targets.push(0.0);
            past_mask.push(false);
        }
    }
    let future_targets = (origin..origin + horizon)
        .map(|t| s.targets.get(t).copied().unwrap_or(0.0))
        .collect();
    WindowInstance {
        past_targets,
        past_mask,
        past_covariates: s
            .past_covariates
            .as_ref()
            .map(|m| window_rows(m, start, origin as i64)),
        future_covariates: s
            .future_covariates
            .as_ref()
            .map(|m| window_rows(m, start, (origin + horizon) as i64)),
        future_targets,
        series_index,
        origin,
    }
}

/// Training instance for an admissible pair.
pub fn materialize(
    dataset: &TimeSeriesDataset,
    pair: (usize, usize),
    window: usize,
    horizon: usize,
) -> WindowInstance {
    let (series_index, origin) = pair;
    let len = dataset.series[series_index].len();
    assert!(
        origin >= 1 && origin + horizon <= len,
        "inadmissible origin {origin} for series of length {len} and horizon {horizon}"
    );
    materialize_at(dataset, series_index, origin, window, horizon)
}

/// Location/scale of one instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleStats {
    pub loc: f64,
    pub scale: f64,
}

pub const MIN_SCALE: f64 = 1e-10;

impl ScaleStats {
    pub const IDENTITY: ScaleStats = ScaleStats {
        loc: 0.0,
        scale: 1.0,
    };

    /// Statistics over observed values only.
    pub fn fit(method: ScalerMethod, observed: &[f64]) -> Self {
        if observed.is_empty() {
            return Self::IDENTITY;
        }
        let n = observed.len() as f64;
        let (loc, scale) = match method {
            ScalerMethod::None => (0.0, 1.0),
            ScalerMethod::MeanAbs => (0.0, observed.iter().map(|v| v.abs()).sum::<f64>() / n),
            ScalerMethod::Standard => {
                let mean = observed.iter().sum::<f64>() / n;
                let var = observed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                (mean, var.sqrt())
            }
            ScalerMethod::MinMax => {
                let lo = observed.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = observed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi - lo)
            }
        };
        Self {
            loc,
            scale: scale.max(MIN_SCALE),
        }
    }

    pub fn transform(&self, v: f64) -> f64 {
        (v - self.loc) / self.scale
    }

    pub fn inverse(&self, v: f64) -> f64 {
        v * self.scale + self.loc
    }
}

/// Scales each instance's targets by statistics of its own observed past.
/// Padded positions stay zero.
pub fn fit_apply_scaler(
    batch: &[WindowInstance],
    method: ScalerMethod,
) -> (Vec<WindowInstance>, Vec<ScaleStats>) {
    let mut out = Vec::with_capacity(batch.len());
    let mut stats = Vec::with_capacity(batch.len());
    for inst in batch {
        let observed: Vec<f64> = inst.observed_past().collect();
        let st = ScaleStats::fit(method, &observed);
        let mut scaled = inst.clone();
        for (v, m) in scaled.past_targets.iter_mut().zip(&inst.past_mask) {
            *v = if *m { st.transform(*v) } else { 0.0 };
        }
        for v in scaled.future_targets.iter_mut() {
            *v = st.transform(*v);
        }
        out.push(scaled);
        stats.push(st);
    }
    (out, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{split, Frequency, Series};
    use proptest::prelude::*;

    fn dataset(lengths: &[usize], h: usize) -> TimeSeriesDataset {
        let series = lengths
            .iter()
            .enumerate()
            .map(|(i, &l)| Series::new(format!("s{i}"), (1..=l).map(|v| v as f64).collect()))
            .collect();
        TimeSeriesDataset::new("t", series, Frequency::Monthly, h).unwrap()
    }

    fn cfg(strategy: SampleStrategy, batch: usize, nb: usize, seed: u64) -> SamplerConfig {
        SamplerConfig {
            window_size: 3,
            batch_size: batch,
            num_batches_per_epoch: nb,
            strategy,
            seed,
        }
    }

    #[test]
    fn per_series_allocation() {
        let d = dataset(&[20, 20], 2);
        let s = split(&d).unwrap();
        let plan = epoch_plan(&s, &cfg(SampleStrategy::PerSeries, 2, 2, 1), 0).unwrap();
        assert_eq!(plan.len(), 4);
        assert_eq!(plan.iter().filter(|p| p.0 == 0).count(), 2);
        assert_eq!(plan.iter().filter(|p| p.0 == 1).count(), 2);
        // allocation oracle for an uneven split: ceil(5/3)=2 each, truncated round-robin
        let d = dataset(&[20, 20, 20], 2);
        let s = split(&d).unwrap();
        let plan = epoch_plan(&s, &cfg(SampleStrategy::PerSeries, 5, 1, 1), 0).unwrap();
        let series: Vec<usize> = plan.iter().map(|p| p.0).collect();
        assert_eq!(series, vec![0, 1, 2, 0, 1]);
    }

    #[test]
    fn uniform_follows_admissible_counts() {
        // train lengths 92 and 12 with H=2 -> 90 and 10 admissible origins
        let d = dataset(&[96, 16], 2);
        let s = split(&d).unwrap();
        assert_eq!(admissible_count(s.train_len(0), 2), 90);
        assert_eq!(admissible_count(s.train_len(1), 2), 10);
        let plan = epoch_plan(&s, &cfg(SampleStrategy::Uniform, 100, 10, 7), 3).unwrap();
        assert_eq!(plan.len(), 1000);
        let share = plan.iter().filter(|p| p.0 == 0).count() as f64 / 1000.0;
        // binomial oracle: p=0.9, sd=sqrt(0.9*0.1/1000)≈0.0095 -> 3σ ≈ 0.028
        assert!((0.85..=0.95).contains(&share), "share {share}");
        for &(i, o) in &plan {
            assert!(o >= 1 && o + 2 <= s.train_len(i));
        }
    }

    #[test]
    fn no_admissible_origins() {
        let d = dataset(&[7, 7], 2);
        let mut s = split(&d).unwrap();
        // train length 3 -> 1 admissible origin; shrink to 2 to have none
        for r in &mut s.ranges {
            r.train = 0..2;
        }
        assert_eq!(
            epoch_plan(&s, &cfg(SampleStrategy::Uniform, 2, 1, 0), 0),
            Err(SamplingError::NoAdmissibleOrigins(2))
        );
    }

    #[test]
    fn plans_are_reproducible() {
        let d = dataset(&[40, 30, 50], 3);
        let s = split(&d).unwrap();
        for strategy in [SampleStrategy::PerSeries, SampleStrategy::Uniform] {
            let c = cfg(strategy, 8, 4, 11);
            assert_eq!(
                epoch_plan(&s, &c, 2).unwrap(),
                epoch_plan(&s, &c, 2).unwrap()
            );
            assert_ne!(
                epoch_plan(&s, &c, 2).unwrap(),
                epoch_plan(&s, &c, 3).unwrap()
            );
        }
    }

    #[test]
    fn materialize_examples() {
        let d = TimeSeriesDataset::new(
            "t",
            vec![Series::new("a", vec![1.0, 2.0, 3.0, 4.0, 5.0])],
            Frequency::Monthly,
            2,
        )
        .unwrap();
        let w = materialize(&d, (0, 3), 2, 2);
        assert_eq!(w.past_targets, vec![2.0, 3.0]);
        assert_eq!(w.future_targets, vec![4.0, 5.0]);
        assert_eq!(w.past_mask, vec![true, true]);
        let w = materialize(&d, (0, 1), 3, 2);
        assert_eq!(w.past_targets, vec![0.0, 0.0, 1.0]);
        assert_eq!(w.past_mask, vec![false, false, true]);
    }

    #[test]
    #[should_panic(expected = "inadmissible origin")]
    fn materialize_rejects_inadmissible() {
        let d = TimeSeriesDataset::new(
            "t",
            vec![Series::new("a", vec![1.0, 2.0, 3.0, 4.0, 5.0])],
            Frequency::Monthly,
            1,
        )
        .unwrap();
        materialize(&d, (0, 5), 2, 1);
    }

    fn instance(past: Vec<f64>) -> WindowInstance {
        let n = past.len();
        WindowInstance {
            past_targets: past,
            past_mask: vec![true; n],
            past_covariates: None,
            future_covariates: None,
            future_targets: vec![4.0],
            series_index: 0,
            origin: n,
        }
    }

    #[test]
    fn scaler_examples() {
        let (scaled, stats) =
            fit_apply_scaler(&[instance(vec![1.0, 2.0, 3.0])], ScalerMethod::MeanAbs);
        assert_eq!(
            stats[0],
            ScaleStats {
                loc: 0.0,
                scale: 2.0
            }
        );
        assert_eq!(scaled[0].past_targets, vec![0.5, 1.0, 1.5]);
        assert_eq!(scaled[0].future_targets, vec![2.0]);

        let (scaled, stats) =
            fit_apply_scaler(&[instance(vec![5.0, 5.0, 5.0])], ScalerMethod::Standard);
        assert_eq!(stats[0].scale, MIN_SCALE);
        assert!(scaled[0].past_targets.iter().all(|v| v.abs() < 1e-12));

        let batch = [instance(vec![3.0, -1.0, 7.0])];
        let (scaled, _) = fit_apply_scaler(&batch, ScalerMethod::None);
        assert_eq!(scaled[0], batch[0]);

        let (scaled, stats) =
            fit_apply_scaler(&[instance(vec![2.0, 4.0, 6.0])], ScalerMethod::MinMax);
        assert_eq!(
            stats[0],
            ScaleStats {
                loc: 2.0,
                scale: 4.0
            }
        );
        assert_eq!(scaled[0].past_targets, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn scaler_ignores_padding() {
        let mut inst = instance(vec![0.0, 2.0, 4.0]);
        inst.past_mask = vec![false, true, true];
        let (scaled, stats) = fit_apply_scaler(&[inst], ScalerMethod::MeanAbs);
        assert_eq!(stats[0].scale, 3.0);
        assert_eq!(scaled[0].past_targets[0], 0.0);
    }

    proptest! {
        #[test]
        fn plan_size_is_exact(lengths in proptest::collection::vec(5usize..40, 1..6),
                              batch in 1usize..20, nb in 1usize..8, seed in 0u64..1000,
                              uniform in any::<bool>()) {
            let d = dataset(&lengths, 1);
            let s = split(&d).unwrap();
            let strategy = if uniform { SampleStrategy::Uniform } else { SampleStrategy::PerSeries };
            let plan = epoch_plan(&s, &cfg(strategy, batch, nb, seed), 0).unwrap();
            prop_assert_eq!(plan.len(), batch * nb);
        }

        #[test]
        fn scaler_round_trip(values in proptest::collection::vec(-1e3f64..1e3, 2..20),
                             m in 0usize..4) {
            let method = [ScalerMethod::None, ScalerMethod::MeanAbs, ScalerMethod::Standard, ScalerMethod::MinMax][m];
            let st = ScaleStats::fit(method, &values);
            prop_assume!(st.scale > 1e-6);
            for &v in &values {
                let back = st.inverse(st.transform(v));
                prop_assert!((back - v).abs() <= 1e-9 * v.abs().max(1.0));
            }
        }

        #[test]
        fn windows_never_see_the_future(len in 3usize..30, window in 1usize..12, h in 1usize..3) {
            prop_assume!(len > h);
            let d = TimeSeriesDataset::new(
                "t",
                vec![Series::new("a", (0..len).map(|v| v as f64 + 1.0).collect())],
                Frequency::Monthly,
                h,
            ).unwrap();
            for origin in 1..=len - h {
                let w = materialize(&d, (0, origin), window, h);
                for (v, m) in w.past_targets.iter().zip(&w.past_mask) {
                    if *m {
                        prop_assert!(*v <= origin as f64);
                    }
                }
            }
        }
    }
}
