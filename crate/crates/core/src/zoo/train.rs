//! Minibatch training and forecasting.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clock::{add_work, Deadline};
use crate::dataset::{SplitView, TimeSeriesDataset};
use crate::sampling::{epoch_plan, materialize, materialize_at, SamplerConfig};

use super::batch::Batch;
use super::heads::{point_of_params, reduce_samples, sample_step, sorted3, step_params};
use super::model::{Feedback, ModelState};
use super::spec::{DistKind, ForecastMode, HeadKind, OptimizerKind};
use super::ZooError;

/// Gradients are rescaled to at most this L2 norm.
pub const GRAD_CLIP: f64 = 10.0;
/// Consecutive non-finite epochs before training is declared diverged.
pub const DIVERGENCE_PATIENCE: usize = 3;
/// Updates taking any weight beyond this magnitude count as non-finite: the
/// networks see inputs of order one, so such weights mean numerical blow-up.
pub const WEIGHT_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr: 1e-3,
            weight_decay: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub sampler: SamplerConfig,
    pub optimizer: OptimizerConfig,
    /// Seasonal period for the scalar `mase` loss.
    pub mase_period: usize,
    pub deadline: Option<Deadline>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean training loss per completed epoch (NaN for non-finite epochs).
    pub epoch_losses: Vec<f64>,
    /// Training stopped at the deadline.
    pub timed_out: bool,
}

enum OptState {
    Adam { m: Vec<f64>, v: Vec<f64>, t: i32 },
    Sgd { velocity: Vec<f64> },
}

impl OptState {
    fn new(kind: OptimizerKind, n: usize) -> Self {
        match kind {
            OptimizerKind::Adam => OptState::Adam {
                m: vec![0.0; n],
                v: vec![0.0; n],
                t: 0,
            },
            OptimizerKind::Sgd => OptState::Sgd {
                velocity: vec![0.0; n],
            },
        }
    }

    fn step(&mut self, cfg: &OptimizerConfig, weights: &mut [f64], grad: &[f64]) {
        add_work(8 * weights.len() as u64);
        match self {
            OptState::Adam { m, v, t } => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                *t += 1;
                let c1 = 1.0 - B1.powi(*t);
                let c2 = 1.0 - B2.powi(*t);
                for i in 0..weights.len() {
                    m[i] = B1 * m[i] + (1.0 - B1) * grad[i];
                    v[i] = B2 * v[i] + (1.0 - B2) * grad[i] * grad[i];
                    weights[i] -= cfg.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPS);
                }
            }
            OptState::Sgd { velocity } => {
                for i in 0..weights.len() {
                    velocity[i] = 0.9 * velocity[i] + grad[i];
                    weights[i] -= cfg.lr * velocity[i];
                }
            }
        }
    }
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z =
        seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Trains `state` in place with teacher forcing.
///
/// Each epoch draws a fresh sampling plan, and every minibatch takes one
/// optimizer step on the clipped gradient of the loss plus coupled L2 weight
/// decay. A batch with a non-finite loss, gradient or update (see
/// [`WEIGHT_LIMIT`]) is skipped and marks its epoch non-finite.
pub fn train(
    state: &mut ModelState,
    dataset: &TimeSeriesDataset,
    split: &SplitView,
    cfg: &TrainConfig,
) -> Result<TrainReport, ZooError> {
    if cfg.epochs == 0 {
        return Err(ZooError::InvalidTraining(
            "epochs must be at least 1".into(),
        ));
    }
    let window = state.dims.window;
    let horizon = state.dims.horizon;
    if split.horizon != horizon {
        return Err(ZooError::ShapeMismatch(format!(
            "split horizon {} but model horizon {horizon}",
            split.horizon
        )));
    }
    let sampler = SamplerConfig {
        window_size: window,
        ..cfg.sampler.clone()
    };
    let mut opt = OptState::new(cfg.optimizer.kind, state.weights.len());
    let mut report = TrainReport {
        epoch_losses: Vec::with_capacity(cfg.epochs),
        timed_out: false,
    };
    let mut bad_streak = 0;
    let mut candidate = state.weights.clone();
    for epoch in 0..cfg.epochs {
        let plan = epoch_plan(split, &sampler, epoch as u64)
            .map_err(|e| ZooError::InvalidTraining(e.to_string()))?;
        let mut total = 0.0;
        let mut batches = 0usize;
        let mut finite = true;
        for (bi, chunk) in plan.chunks(sampler.batch_size.max(1)).enumerate() {
            if cfg.deadline.is_some_and(|d| d.expired()) {
                report.timed_out = true;
                return Ok(report);
            }
            let instances: Vec<_> = chunk
                .iter()
                .map(|&p| materialize(dataset, p, window, horizon))
                .collect();
            let batch = Batch::from_instances(&instances, state.scaler, cfg.mase_period, true);
            let dropout_seed = mix(state.seed, epoch as u64, bi as u64);
            let step = state.loss_and_grad(&state.weights, &batch, Some(dropout_seed));
            let (loss, mut grad) = match step {
                Ok(v) => v,
                Err(ZooError::NonFiniteLoss | ZooError::NonFiniteGradient) => {
                    finite = false;
                    continue;
                }
                Err(e) => return Err(e),
            };
            for (g, w) in grad.iter_mut().zip(&state.weights) {
                *g += cfg.optimizer.weight_decay * w;
            }
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > GRAD_CLIP {
                let s = GRAD_CLIP / norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
            candidate.copy_from_slice(&state.weights);
            opt.step(&cfg.optimizer, &mut candidate, &grad);
            if candidate.iter().all(|w| w.abs() <= WEIGHT_LIMIT) {
                state.weights.copy_from_slice(&candidate);
                total += loss;
                batches += 1;
            } else {
                finite = false;
            }
        }
        if finite && batches > 0 {
            bad_streak = 0;
            report.epoch_losses.push(total / batches as f64);
        } else {
            bad_streak += 1;
            report.epoch_losses.push(f64::NAN);
            if bad_streak >= DIVERGENCE_PATIENCE {
                return Err(ZooError::Diverged { epoch });
            }
        }
    }
    Ok(report)
}

/// Forecast for one series.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastOutput {
    pub series_index: usize,
    pub origin: usize,
    /// Point path in original units.
    pub point: Vec<f64>,
    /// Per-step head parameters in original units: `[μ, σ]`, `[μ, σ, ν]`,
    /// sorted `[lower, median, upper]` or `[value]`.
    pub params: Vec<Vec<f64>>,
}

/// Upper bound on the rows of one inference pass, sample replicas included.
/// The forward tape keeps every intermediate, so this bounds peak memory.
const PREDICT_ROWS: usize = 256;

/// Forecasts `H` steps after each `(series_index, origin)` pair.
///
/// Auto-regressive models generate from their own outputs. Sampling
/// inference draws `num_samples` values per step (whole trajectories for
/// models that feed samples back into the encoder).
pub fn predict(
    state: &ModelState,
    dataset: &TimeSeriesDataset,
    targets: &[(usize, usize)],
    mase_period: usize,
    seed: u64,
) -> Result<Vec<ForecastOutput>, ZooError> {
    let head = &state.spec.head;
    let c = head.channels();
    let (w, h) = (state.dims.window, state.dims.horizon);
    let mode = state.spec.mode();
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x5eed, state.seed));
    let replicas = if mode == ForecastMode::DeepAr && head.samples() {
        head.num_samples.max(1)
    } else {
        1
    };
    let mut out = Vec::with_capacity(targets.len());
    for chunk in targets.chunks((PREDICT_ROWS / replicas).max(1)) {
        let instances: Vec<_> = chunk
            .iter()
            .map(|&(i, o)| materialize_at(dataset, i, o, w, h))
            .collect();
        let batch = Batch::from_instances(&instances, state.scaler, mase_period, false);
        let feedback = if mode == ForecastMode::NonAutoRegressive {
            Feedback::Truth
        } else {
            Feedback::Point
        };
        let raw = state.forward(&batch, feedback)?;
        let trajectories = if mode == ForecastMode::DeepAr && head.samples() {
            let s = head.num_samples;
            let (_, chosen) = state.generate(
                &state.weights,
                &batch.repeat_rows(s),
                Feedback::Sample(&mut rng),
            )?;
            Some(chosen)
        } else {
            None
        };
        for (r, &(series_index, origin)) in chunk.iter().enumerate() {
            let st = batch.stats[r];
            let mut point = Vec::with_capacity(h);
            let mut params = Vec::with_capacity(h);
            for k in 0..h {
                let row: Vec<f64> = (0..c).map(|j| raw[[r, k * c + j]]).collect();
                let p = step_params(head, &row);
                let scaled_point = if head.samples() {
                    let s = head.num_samples;
                    let mut draws: Vec<f64> = match &trajectories {
                        Some(t) => (0..s).map(|j| t[[r * s + j, k]]).collect(),
                        None => (0..s).map(|_| sample_step(head, &p, &mut rng)).collect(),
                    };
                    reduce_samples(head.inference, &mut draws)
                } else {
                    point_of_params(head, &p)
                };
                point.push(st.inverse(scaled_point));
                params.push(match head.kind {
                    HeadKind::Distribution => {
                        let mut v = vec![st.inverse(p[0]), p[1] * st.scale];
                        if head.dist == DistKind::StudentT {
                            v.push(p[2]);
                        }
                        v
                    }
                    HeadKind::Quantile => sorted3(&p).iter().map(|&q| st.inverse(q)).collect(),
                    HeadKind::Scalar => vec![st.inverse(p[0])],
                });
            }
            out.push(ForecastOutput {
                series_index,
                origin,
                point,
                params,
            });
        }
    }
    Ok(out)
}

/// Point paths only, as a `series × H` matrix in `targets` order.
pub fn predict_points(
    state: &ModelState,
    dataset: &TimeSeriesDataset,
    targets: &[(usize, usize)],
    mase_period: usize,
    seed: u64,
) -> Result<Array2<f64>, ZooError> {
    let f = predict(state, dataset, targets, mase_period, seed)?;
    let h = state.dims.horizon;
    let mut m = Array2::zeros((f.len(), h));
    for (i, o) in f.iter().enumerate() {
        for k in 0..h {
            m[[i, k]] = o.point[k];
        }
    }
    Ok(m)
}
