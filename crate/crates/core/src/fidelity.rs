//! Budget types and the fidelity ladder.
//!
//! Every budget value lies in `(0, 1]`; `1.0` always means the untouched
//! dataset and schedule.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Series, TimeSeriesDataset};

#[derive(Debug, Error, PartialEq)]
pub enum FidelityError {
    #[error("resolution {value} keeps only {kept} of {len} points (need at least 3)")]
    ResolutionTooCoarse { value: f64, len: usize, kept: usize },
    #[error("budget value {0} outside (0, 1]")]
    InvalidValue(f64),
    #[error("unknown budget type '{0}'")]
    UnknownBudgetType(String),
    #[error("invalid ladder: {0}")]
    InvalidLadder(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetType {
    /// Fraction of the maximum epoch count.
    Epochs,
    /// Fraction of the sampling rate (keep every `1/b`-th point).
    Resolution,
    /// Fraction of the series used for training.
    Series,
    /// Fraction of the training samples drawn per epoch.
    Samples,
    /// Single full-fidelity rung.
    Vanilla,
}

impl BudgetType {
    pub fn token(self) -> &'static str {
        match self {
            BudgetType::Epochs => "epochs",
            BudgetType::Resolution => "resolution",
            BudgetType::Series => "series",
            BudgetType::Samples => "samples",
            BudgetType::Vanilla => "vanilla",
        }
    }
}

impl fmt::Display for BudgetType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for BudgetType {
    type Err = FidelityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "epochs" | "num_epochs" => Ok(BudgetType::Epochs),
            "resolution" => Ok(BudgetType::Resolution),
            "series" | "num_series" => Ok(BudgetType::Series),
            "samples" | "samples_per_series" => Ok(BudgetType::Samples),
            "vanilla" => Ok(BudgetType::Vanilla),
            other => Err(FidelityError::UnknownBudgetType(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityBudget {
    pub budget_type: BudgetType,
    pub value: f64,
}

impl FidelityBudget {
    pub fn new(budget_type: BudgetType, value: f64) -> Result<Self, FidelityError> {
        check_value(value)?;
        Ok(Self { budget_type, value })
    }

    pub fn full(budget_type: BudgetType) -> Self {
        Self {
            budget_type,
            value: 1.0,
        }
    }

    pub fn is_full(&self) -> bool {
        self.value >= 1.0
    }
}

fn check_value(value: f64) -> Result<(), FidelityError> {
    if value > 0.0 && value <= 1.0 {
        Ok(())
    } else {
        Err(FidelityError::InvalidValue(value))
    }
}

/// Ascending budget rungs ending at 1.0 with a constant ratio `eta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityLadder {
    pub rungs: Vec<f64>,
    pub eta: f64,
}

impl FidelityLadder {
    /// Geometric ladder `min_budget, min_budget*eta, ..., 1.0`.
    pub fn geometric(min_budget: f64, eta: f64) -> Result<Self, FidelityError> {
        check_value(min_budget)?;
        if eta <= 1.0 {
            return Err(FidelityError::InvalidLadder(format!(
                "eta must exceed 1, got {eta}"
            )));
        }
        let steps = ((1.0 / min_budget).ln() / eta.ln()).round() as i32;
        let rungs: Vec<f64> = (0..=steps).rev().map(|k| 1.0 / eta.powi(k)).collect();
        Ok(Self { rungs, eta })
    }

    /// One rung at full fidelity.
    pub fn vanilla() -> Self {
        Self {
            rungs: vec![1.0],
            eta: 3.0,
        }
    }

    pub fn for_budget_type(budget_type: BudgetType) -> Self {
        match budget_type {
            BudgetType::Vanilla => Self::vanilla(),
            _ => default_ladder(),
        }
    }

    pub fn lowest(&self) -> f64 {
        self.rungs[0]
    }

    pub fn top(&self) -> usize {
        self.rungs.len() - 1
    }
}

/// `[1/9, 1/3, 1]` with `eta = 3`.
pub fn default_ladder() -> FidelityLadder {
    FidelityLadder {
        rungs: vec![1.0 / 9.0, 1.0 / 3.0, 1.0],
        eta: 3.0,
    }
}

/// Stride `k = round(1/b)` for a resolution budget.
pub fn resolution_stride(value: f64) -> usize {
    ((1.0 / value).round() as usize).max(1)
}

/// Indices kept by a resolution budget on a series of length `len`,
/// anchored so the last point survives.
pub fn resolution_indices(len: usize, value: f64) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    let k = resolution_stride(value);
    let mut idx: Vec<usize> = (0..len).rev().step_by(k).collect();
    idx.reverse();
    idx
}

/// Keeps every `round(1/b)`-th point, anchored at the series end.
pub fn apply_resolution(series: &Series, value: f64) -> Result<Series, FidelityError> {
    check_value(value)?;
    if resolution_stride(value) == 1 {
        return Ok(series.clone());
    }
    let idx = resolution_indices(series.len(), value);
    if idx.len() < 3 {
        return Err(FidelityError::ResolutionTooCoarse {
            value,
            len: series.len(),
            kept: idx.len(),
        });
    }
    let pick_rows = |m: &ndarray::Array2<f64>| m.select(ndarray::Axis(0), &idx);
    Ok(Series {
        id: series.id.clone(),
        targets: idx.iter().map(|&i| series.targets[i]).collect(),
        past_covariates: series.past_covariates.as_ref().map(pick_rows),
        future_covariates: series.future_covariates.as_ref().map(pick_rows),
        start_index: series.start_index + idx[0] as i64,
    })
}

/// Number of series kept by a series budget.
pub fn series_count(n: usize, value: f64) -> usize {
    ((value * n as f64).round() as usize).clamp(1, n.max(1))
}

/// Evenly spaced grid indices `floor(j*n/m)`, `j = 0..m`.
pub fn grid_indices(n: usize, m: usize) -> Vec<usize> {
    (0..m).map(|j| j * n / m).collect()
}

/// Original indices of the series kept by a series budget (grid over id-sorted order).
pub fn subsample_indices(dataset: &TimeSeriesDataset, value: f64) -> Vec<usize> {
    let n = dataset.len();
    let mut by_id: Vec<usize> = (0..n).collect();
    by_id.sort_by(|&a, &b| dataset.series[a].id.cmp(&dataset.series[b].id));
    grid_indices(n, series_count(n, value))
        .into_iter()
        .map(|j| by_id[j])
        .collect()
}

/// Keeps `max(1, round(b*N))` series on an even grid over the id-sorted series.
pub fn subsample_series(
    dataset: &TimeSeriesDataset,
    value: f64,
) -> Result<TimeSeriesDataset, FidelityError> {
    check_value(value)?;
    if value >= 1.0 {
        return Ok(dataset.clone());
    }
    let series = subsample_indices(dataset, value)
        .into_iter()
        .map(|i| dataset.series[i].clone())
        .collect();
    Ok(TimeSeriesDataset {
        name: dataset.name.clone(),
        series,
        frequency: dataset.frequency,
        horizon: dataset.horizon,
    })
}

pub fn effective_epochs(max_epochs: usize, value: f64) -> usize {
    ((value * max_epochs as f64).round() as usize).max(1)
}

pub fn effective_batches(num_batches: usize, value: f64) -> usize {
    ((value * num_batches as f64).round() as usize).max(1)
}

/// Only the resolution budget shrinks the sliding window.
pub fn shrink_window(window: usize, value: f64, budget_type: BudgetType) -> usize {
    match budget_type {
        BudgetType::Resolution => ((value * window as f64).round() as usize).max(1),
        _ => window,
    }
}
