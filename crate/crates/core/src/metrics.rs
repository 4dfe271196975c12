//! Point-forecast accuracy metrics and optimizer trajectory metrics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("training history of length {len} too short for seasonal period {period}")]
    TrainTooShort { len: usize, period: usize },
    #[error("no forecast for series {0}")]
    MissingForecast(String),
    #[error("metric undefined for every series")]
    AllUndefined,
    #[error("empty history")]
    EmptyHistory,
    #[error("unknown metric '{0}'")]
    UnknownMetric(String),
}

/// Denominators below this make MASE undefined.
pub const MASE_EPS: f64 = 1e-10;

fn check_len(a: &[f64], b: &[f64]) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    Ok(())
}

/// In-sample mean absolute seasonal-naive error: `mean_{t>=m} |y_t - y_{t-m}|`.
pub fn seasonal_naive_scale(y_train: &[f64], m: usize) -> Result<f64, MetricError> {
    let m = m.max(1);
    if y_train.len() <= m {
        return Err(MetricError::TrainTooShort {
            len: y_train.len(),
            period: m,
        });
    }
    let n = y_train.len() - m;
    Ok(y_train
        .iter()
        .skip(m)
        .zip(y_train)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / n as f64)
}

/// Mean absolute scaled error; `None` when the in-sample scale vanishes.
pub fn mase(
    y_true: &[f64],
    y_pred: &[f64],
    y_train: &[f64],
    m: usize,
) -> Result<Option<f64>, MetricError> {
    check_len(y_true, y_pred)?;
    let scale = seasonal_naive_scale(y_train, m)?;
    if scale < MASE_EPS {
        return Ok(None);
    }
    Ok(Some(mae(y_true, y_pred)? / scale))
}

pub fn mae(y_true: &[f64], y_pred: &[f64]) -> Result<f64, MetricError> {
    check_len(y_true, y_pred)?;
    if y_true.is_empty() {
        return Ok(0.0);
    }
    Ok(y_true
        .iter()
        .zip(y_pred)
        .map(|(y, p)| (y - p).abs())
        .sum::<f64>()
        / y_true.len() as f64)
}

/// Symmetric MAPE in percent; zero-denominator terms contribute 0.
pub fn smape(y_true: &[f64], y_pred: &[f64]) -> Result<f64, MetricError> {
    check_len(y_true, y_pred)?;
    if y_true.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(y, p)| {
            let denom = y.abs() + p.abs();
            if denom == 0.0 {
                0.0
            } else {
                (p - y).abs() / denom
            }
        })
        .sum();
    Ok(200.0 * sum / y_true.len() as f64)
}

/// MAPE in percent over nonzero targets; `None` when every target is zero.
pub fn mape(y_true: &[f64], y_pred: &[f64]) -> Result<Option<f64>, MetricError> {
    check_len(y_true, y_pred)?;
    let terms: Vec<f64> = y_true
        .iter()
        .zip(y_pred)
        .filter(|(y, _)| **y != 0.0)
        .map(|(y, p)| ((y - p) / y).abs())
        .collect();
    if terms.is_empty() {
        return Ok(None);
    }
    Ok(Some(100.0 * terms.iter().sum::<f64>() / terms.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mase,
    Smape,
    Mae,
    Mape,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Mase, Metric::Smape, Metric::Mae, Metric::Mape];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Mase => "mase",
            Metric::Smape => "smape",
            Metric::Mae => "mae",
            Metric::Mape => "mape",
        }
    }

    /// Scores one series; `None` means undefined.
    pub fn score(
        self,
        y_true: &[f64],
        y_pred: &[f64],
        y_train: &[f64],
        m: usize,
    ) -> Result<Option<f64>, MetricError> {
        match self {
            Metric::Mase => match mase(y_true, y_pred, y_train, m) {
                Err(MetricError::TrainTooShort { .. }) => Ok(None),
                other => other,
            },
            Metric::Smape => smape(y_true, y_pred).map(Some),
            Metric::Mae => mae(y_true, y_pred).map(Some),
            Metric::Mape => mape(y_true, y_pred),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = MetricError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| MetricError::UnknownMetric(s.into()))
    }
}

/// Per-series scores and their arithmetic mean over defined series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: Metric,
    pub per_series: Vec<(String, f64)>,
    pub undefined: Vec<String>,
    pub aggregate: f64,
}

impl MetricReport {
    pub fn undefined_count(&self) -> usize {
        self.undefined.len()
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.per_series
            .iter()
            .find(|(k, _)| k == id)
            .map(|(_, v)| *v)
    }
}

/// One series' inputs to a metric.
#[derive(Debug, Clone, Copy)]
pub struct SeriesForecast<'a> {
    pub id: &'a str,
    pub y_train: &'a [f64],
    pub y_true: &'a [f64],
    pub y_pred: Option<&'a [f64]>,
}

/// Scores every series and averages the defined ones.
pub fn aggregate<'a>(
    entries: impl IntoIterator<Item = SeriesForecast<'a>>,
    metric: Metric,
    m: usize,
) -> Result<MetricReport, MetricError> {
    let mut per_series = Vec::new();
    let mut undefined = Vec::new();
    for e in entries {
        let pred = e
            .y_pred
            .ok_or_else(|| MetricError::MissingForecast(e.id.to_string()))?;
        match metric.score(e.y_true, pred, e.y_train, m)? {
            Some(v) if v.is_finite() => per_series.push((e.id.to_string(), v)),
            _ => undefined.push(e.id.to_string()),
        }
    }
    if per_series.is_empty() {
        return Err(MetricError::AllUndefined);
    }
    let aggregate = per_series.iter().map(|(_, v)| v).sum::<f64>() / per_series.len() as f64;
    Ok(MetricReport {
        metric,
        per_series,
        undefined,
        aggregate,
    })
}

/// Raw and span-normalized area under the running-minimum loss curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucValues {
    pub raw: f64,
    pub normalized: f64,
    pub t_first: f64,
}

/// Running minimum of `(time, loss)` points, one entry per improvement.
pub fn incumbent_trajectory(history: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for &(t, loss) in history {
        if !loss.is_finite() {
            continue;
        }
        match out.last() {
            Some(&(_, best)) if loss >= best => {}
            _ => out.push((t, loss)),
        }
    }
    out
}

/// Step integral of the running minimum from the first point to `horizon`.
///
/// `history` must be sorted by time. The curve is undefined before the
/// first point, so the span is `horizon - t_first`.
pub fn incumbent_auc(history: &[(f64, f64)], horizon: f64) -> Result<AucValues, MetricError> {
    let steps = incumbent_trajectory(history);
    let Some(&(t_first, first_loss)) = steps.first() else {
        return Err(MetricError::EmptyHistory);
    };
    let span = horizon - t_first;
    if span <= 0.0 {
        return Ok(AucValues {
            raw: 0.0,
            normalized: first_loss,
            t_first,
        });
    }
    let mut raw = 0.0;
    for (i, &(t, loss)) in steps.iter().enumerate() {
        if t >= horizon {
            break;
        }
        let end = steps.get(i + 1).map_or(horizon, |n| n.0.min(horizon));
        raw += (end - t) * loss;
    }
    Ok(AucValues {
        raw,
        normalized: raw / span,
        t_first,
    })
}
