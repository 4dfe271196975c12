//! Greedy ensemble selection over top-rung pipelines, refitting and
//! combined forecasting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::configspace::Configuration;
use crate::dataset::{SplitView, TimeSeriesDataset};
use crate::evaluation::{dummy_forecast, forecast_test, refit, validation_loss, EvalError};
use crate::metrics::MetricError;
use crate::zoo::ModelState;

pub const DEFAULT_ENSEMBLE_SIZE: usize = 20;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("no successful top-rung run with validation forecasts")]
    NoCandidates,
    #[error("candidate {config_id} has {got} forecasts for {expected} series")]
    ForecastShape {
        config_id: u64,
        got: usize,
        expected: usize,
    },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// A successful top-rung run with its validation forecasts.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub config_id: u64,
    pub config: Configuration,
    pub val_forecasts: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub config_id: u64,
    pub config: Configuration,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    /// Ordered by config id; weights sum to one.
    pub members: Vec<Member>,
    /// Validation loss of the weighted forecast.
    pub val_loss: f64,
    /// Greedy steps kept (the best prefix).
    pub selections: usize,
}

/// `Σ w_k paths_k` element-wise.
pub fn weighted_mean(parts: &[(f64, &[Vec<f64>])]) -> Vec<Vec<f64>> {
    let Some((_, first)) = parts.first() else {
        return Vec::new();
    };
    let mut out: Vec<Vec<f64>> = first.iter().map(|p| vec![0.0; p.len()]).collect();
    for (w, paths) in parts {
        for (o, p) in out.iter_mut().zip(paths.iter()) {
            for (a, b) in o.iter_mut().zip(p) {
                *a += w * b;
            }
        }
    }
    out
}

/// Greedy forward selection with replacement.
///
/// Each of `size` steps adds the candidate whose inclusion gives the lowest
/// validation loss of the count-weighted mean forecast (ties to the lower
/// config id). The best prefix of the sequence is returned, so the ensemble
/// is never worse than the best single candidate.
pub fn select(
    candidates: &[Candidate],
    dataset: &TimeSeriesDataset,
    split: &SplitView,
    size: usize,
) -> Result<Ensemble, EnsembleError> {
    if candidates.is_empty() {
        return Err(EnsembleError::NoCandidates);
    }
    for c in candidates {
        if c.val_forecasts.len() != dataset.len() {
            return Err(EnsembleError::ForecastShape {
                config_id: c.config_id,
                got: c.val_forecasts.len(),
                expected: dataset.len(),
            });
        }
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by_key(|&i| candidates[i].config_id);
    let m = dataset.frequency.mase_period();
    let mut sum: Vec<Vec<f64>> = candidates[0]
        .val_forecasts
        .iter()
        .map(|p| vec![0.0; p.len()])
        .collect();
    let mut counts = vec![0usize; candidates.len()];
    let mut best: Option<(f64, Vec<usize>)> = None;
    for step in 1..=size.max(1) {
        let mut pick: Option<(f64, usize)> = None;
        for &i in &order {
            let trial: Vec<Vec<f64>> = sum
                .iter()
                .zip(&candidates[i].val_forecasts)
                .map(|(s, p)| {
                    s.iter()
                        .zip(p)
                        .map(|(a, b)| (a + b) / step as f64)
                        .collect()
                })
                .collect();
            let loss = validation_loss(dataset, split, &trial, m)?;
            if pick.is_none_or(|(l, _)| loss < l) {
                pick = Some((loss, i));
            }
        }
        let (loss, i) = pick.expect("at least one candidate");
        counts[i] += 1;
        for (s, p) in sum.iter_mut().zip(&candidates[i].val_forecasts) {
            s.iter_mut().zip(p).for_each(|(a, b)| *a += b);
        }
        if best.as_ref().is_none_or(|(l, _)| loss < *l) {
            best = Some((loss, counts.clone()));
        }
    }
    let (val_loss, counts) = best.expect("at least one step");
    let selections: usize = counts.iter().sum();
    let members = order
        .iter()
        .filter(|&&i| counts[i] > 0)
        .map(|&i| Member {
            config_id: candidates[i].config_id,
            config: candidates[i].config.clone(),
            weight: counts[i] as f64 / selections as f64,
        })
        .collect();
    Ok(Ensemble {
        members,
        val_loss,
        selections,
    })
}

/// Seed of the `index`-th member refit.
pub fn member_seed(run_seed: u64, index: usize) -> u64 {
    let mut z =
        run_seed ^ 0xE75E_3B1E_0000_0000 ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedMember {
    pub member: Member,
    pub seed: u64,
    pub state: ModelState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedEnsemble {
    pub members: Vec<FittedMember>,
    /// Every member failed to refit; forecasts repeat the last value.
    pub fallback_to_dummy: bool,
}

impl FittedEnsemble {
    /// Weighted mean of the members' test-tail forecasts.
    pub fn forecast(&self, dataset: &TimeSeriesDataset) -> Result<Vec<Vec<f64>>, EvalError> {
        if self.fallback_to_dummy {
            let h = dataset.horizon;
            return Ok(dataset
                .series
                .iter()
                .map(|s| dummy_forecast(s.targets[s.len().saturating_sub(h + 1)], h))
                .collect());
        }
        let paths = self
            .members
            .iter()
            .map(|m| forecast_test(&m.state, dataset, m.seed))
            .collect::<Result<Vec<_>, _>>()?;
        let parts: Vec<(f64, &[Vec<f64>])> = self
            .members
            .iter()
            .zip(&paths)
            .map(|(m, p)| (m.member.weight, p.as_slice()))
            .collect();
        Ok(weighted_mean(&parts))
    }
}

/// Retrains every member on train and validation with seed
/// `member_seed(run_seed, index)`. Failed members are dropped and the
/// remaining weights renormalized.
pub fn refit_members(
    ensemble: &Ensemble,
    dataset: &TimeSeriesDataset,
    run_seed: u64,
    max_epochs: usize,
) -> FittedEnsemble {
    let mut members = Vec::with_capacity(ensemble.members.len());
    for (index, m) in ensemble.members.iter().enumerate() {
        let seed = member_seed(run_seed, index);
        match refit(&m.config, dataset, seed, max_epochs) {
            Ok(state) => members.push(FittedMember {
                member: m.clone(),
                seed,
                state,
            }),
            Err(e) => log::warn!(
                "dropping ensemble member {}: refit failed: {e}",
                m.config_id
            ),
        }
    }
    let total: f64 = members.iter().map(|m| m.member.weight).sum();
    for m in &mut members {
        m.member.weight /= total;
    }
    FittedEnsemble {
        fallback_to_dummy: members.is_empty(),
        members,
    }
}

/// Ensemble manifest entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestMember {
    pub config_id: u64,
    pub weight: f64,
    pub seed: u64,
    /// Checkpoint path relative to the manifest.
    pub checkpoint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub space_hash: String,
    pub horizon: usize,
    pub val_loss: f64,
    pub fallback_to_dummy: bool,
    pub members: Vec<ManifestMember>,
    /// Hyperparameter values of each member by config id.
    pub configs: BTreeMap<u64, BTreeMap<String, crate::configspace::Value>>,
}
