//! Training and validating one configuration at one fidelity.
//!
//! Budgets transform the training data or schedule; the validation tail is
//! forecast by the model on a proxy subset of series and by the last-value
//! dummy on the rest.

use std::borrow::Cow;

use thiserror::Error;

use crate::clock::{ClockKind, Deadline, RunClock};
use crate::configspace::{ConfigError, Configuration, Pipeline};
use crate::dataset::{base_window_size, DatasetError, Series, SplitView, TimeSeriesDataset};
use crate::fidelity::{
    apply_resolution, effective_batches, effective_epochs, grid_indices, resolution_stride,
    shrink_window, subsample_indices, BudgetType, FidelityBudget, FidelityError,
};
use crate::history::EvalStatus;
use crate::metrics::{mae, mase, MetricError};
use crate::sampling::{window_from_multiplier, SamplerConfig};
use crate::surrogate::{EvalOutcome, Evaluator, Job};
use crate::zoo::{predict_points, train, InputDims, ModelState, TrainConfig, ZooError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Fidelity(#[from] FidelityError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Zoo(#[from] ZooError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("evaluation exceeded its time limit")]
    Timeout,
    #[error("non-finite forecast for series {0}")]
    NonFiniteForecast(String),
}

/// Series whose validation tail is forecast by the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyPlan {
    /// Sorted series indices.
    pub evaluated_indices: Vec<usize>,
    pub covered_fraction: f64,
}

/// Grid proxy set: every series for small datasets or full budgets,
/// otherwise `m = min(N, max(min_proxy, round(b N)))` series at
/// `floor(j N / m)`.
pub fn proxy_plan(n: usize, budget_value: f64, min_proxy: usize, threshold: usize) -> ProxyPlan {
    let m = if n <= threshold || budget_value >= 1.0 {
        n
    } else {
        ((budget_value * n as f64).round() as usize)
            .max(min_proxy)
            .min(n)
    };
    ProxyPlan {
        evaluated_indices: grid_indices(n, m),
        covered_fraction: m as f64 / n.max(1) as f64,
    }
}

/// `[last; horizon]`.
pub fn dummy_forecast(last: f64, horizon: usize) -> Vec<f64> {
    vec![last; horizon]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxySettings {
    pub enabled: bool,
    pub min_proxy: usize,
    /// Datasets with at most this many series are always fully evaluated.
    pub threshold: usize,
}

impl Default for ProxySettings {
    fn default() -> Self {
        Self {
            enabled: true,
            min_proxy: 1000,
            threshold: 1000,
        }
    }
}

impl ProxySettings {
    pub fn plan(&self, n: usize, budget_value: f64) -> ProxyPlan {
        if self.enabled {
            proxy_plan(n, budget_value, self.min_proxy, self.threshold)
        } else {
            proxy_plan(n, 1.0, self.min_proxy, self.threshold)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    /// Epochs at full fidelity.
    pub max_epochs: usize,
    pub proxy: ProxySettings,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            max_epochs: 50,
            proxy: ProxySettings::default(),
        }
    }
}

/// Mean MASE over the series where it is defined. When it is defined
/// nowhere (every training part constant) the mean MAE is returned instead.
///
/// Series whose training part is not longer than `m` are scaled with the
/// one-step naive error.
pub fn validation_loss(
    dataset: &TimeSeriesDataset,
    split: &SplitView,
    forecasts: &[Vec<f64>],
    m: usize,
) -> Result<f64, MetricError> {
    let mut scaled = Vec::with_capacity(forecasts.len());
    let mut absolute = Vec::with_capacity(forecasts.len());
    for ((s, r), f) in dataset.series.iter().zip(&split.ranges).zip(forecasts) {
        let y_train = &s.targets[r.train.clone()];
        let y_true = &s.targets[r.val.clone()];
        absolute.push(mae(y_true, f)?);
        let period = if y_train.len() > m { m } else { 1 };
        if y_train.len() > period {
            if let Some(v) = mase(y_true, f, y_train, period)? {
                scaled.push(v);
            }
        }
    }
    let pick = if scaled.is_empty() {
        &absolute
    } else {
        &scaled
    };
    if pick.is_empty() {
        return Err(MetricError::AllUndefined);
    }
    Ok(pick.iter().sum::<f64>() / pick.len() as f64)
}

/// Validation loss of the last-value forecast on every series.
pub fn dummy_loss(dataset: &TimeSeriesDataset, split: &SplitView) -> Result<f64, MetricError> {
    let forecasts: Vec<Vec<f64>> = dataset
        .series
        .iter()
        .zip(&split.ranges)
        .map(|(s, r)| dummy_forecast(s.targets[r.val.start - 1], r.val.len()))
        .collect();
    validation_loss(dataset, split, &forecasts, dataset.frequency.mase_period())
}

fn truncate(series: &Series, len: usize) -> Series {
    let rows = |m: &ndarray::Array2<f64>| m.slice(ndarray::s![..len, ..]).to_owned();
    Series {
        id: series.id.clone(),
        targets: series.targets[..len].to_vec(),
        past_covariates: series.past_covariates.as_ref().map(rows),
        future_covariates: series.future_covariates.as_ref().map(rows),
        start_index: series.start_index,
    }
}

/// Series, split and MASE period the model sees at one budget.
struct View<'a> {
    data: Cow<'a, TimeSeriesDataset>,
    split: Cow<'a, SplitView>,
    mase_period: usize,
}

/// A resolution budget downsamples train and validation, anchored at the
/// end of the validation tail, with horizon `max(1, round(b H))`.
fn view<'a>(
    dataset: &'a TimeSeriesDataset,
    split: &'a SplitView,
    budget: FidelityBudget,
) -> Result<View<'a>, EvalError> {
    let m = dataset.frequency.mase_period();
    if budget.budget_type != BudgetType::Resolution || resolution_stride(budget.value) == 1 {
        return Ok(View {
            data: Cow::Borrowed(dataset),
            split: Cow::Borrowed(split),
            mase_period: m,
        });
    }
    let b = budget.value;
    let horizon = ((b * split.horizon as f64).round() as usize).max(1);
    let series = dataset
        .series
        .iter()
        .zip(&split.ranges)
        .map(|(s, r)| apply_resolution(&truncate(s, r.val.end), b))
        .collect::<Result<Vec<_>, _>>()?;
    let data = TimeSeriesDataset {
        name: dataset.name.clone(),
        series,
        frequency: dataset.frequency,
        horizon,
    };
    let split = SplitView::train_val(&data, horizon)?;
    Ok(View {
        data: Cow::Owned(data),
        split: Cow::Owned(split),
        mase_period: ((m as f64 / resolution_stride(b) as f64).round() as usize).max(1),
    })
}

struct Fit {
    epochs: usize,
    num_batches: usize,
    window: usize,
}

fn fit_model(
    pipeline: &Pipeline,
    data: &TimeSeriesDataset,
    split: &SplitView,
    fit: Fit,
    mase_period: usize,
    seed: u64,
    deadline: Option<Deadline>,
) -> Result<(ModelState, bool), EvalError> {
    let dims = InputDims {
        window: fit.window,
        horizon: split.horizon,
        past_dim: data.past_dim(),
        future_dim: data.future_dim(),
    };
    let mut state = ModelState::build(&pipeline.arch, dims, pipeline.scaler, seed)?;
    let cfg = TrainConfig {
        epochs: fit.epochs,
        sampler: SamplerConfig {
            window_size: state.dims.window,
            batch_size: pipeline.batch_size,
            num_batches_per_epoch: fit.num_batches,
            strategy: pipeline.strategy,
            seed,
        },
        optimizer: pipeline.optimizer,
        mase_period,
        deadline,
    };
    let report = train(&mut state, data, split, &cfg)?;
    Ok((state, report.timed_out))
}

fn forecast(
    state: &ModelState,
    data: &TimeSeriesDataset,
    split: &SplitView,
    plan: &ProxyPlan,
    mase_period: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, EvalError> {
    let targets: Vec<(usize, usize)> = plan
        .evaluated_indices
        .iter()
        .map(|&i| (i, split.ranges[i].val.start))
        .collect();
    let points = predict_points(state, data, &targets, mase_period, seed)?;
    let mut out: Vec<Vec<f64>> = data
        .series
        .iter()
        .zip(&split.ranges)
        .map(|(s, r)| dummy_forecast(s.targets[r.val.start - 1], split.horizon))
        .collect();
    for (row, &i) in plan.evaluated_indices.iter().enumerate() {
        let path = points.row(row).to_vec();
        if path.iter().any(|v| !v.is_finite()) {
            return Err(EvalError::NonFiniteForecast(data.series[i].id.clone()));
        }
        out[i] = path;
    }
    Ok(out)
}

struct Scored {
    loss: f64,
    train_seconds: f64,
    eval_seconds: f64,
    forecasts: Vec<Vec<f64>>,
}

#[allow(clippy::too_many_arguments)]
fn run(
    config: &Configuration,
    budget: FidelityBudget,
    dataset: &TimeSeriesDataset,
    split: &SplitView,
    seed: u64,
    settings: &EvalSettings,
    clock: RunClock,
    deadline: Option<Deadline>,
) -> Result<Scored, EvalError> {
    let pipeline = Pipeline::from_config(config)?;
    let v = view(dataset, split, budget)?;
    let b = budget.value;
    let base = base_window_size(dataset.frequency, dataset.horizon);
    let mut fit = Fit {
        epochs: settings.max_epochs,
        num_batches: pipeline.num_batches_per_epoch,
        window: shrink_window(
            window_from_multiplier(pipeline.window_multiplier, base),
            b,
            budget.budget_type,
        ),
    };
    match budget.budget_type {
        BudgetType::Epochs => fit.epochs = effective_epochs(settings.max_epochs, b),
        BudgetType::Samples => {
            fit.num_batches = effective_batches(pipeline.num_batches_per_epoch, b)
        }
        BudgetType::Resolution | BudgetType::Series | BudgetType::Vanilla => {}
    }
    let (state, timed_out) = if budget.budget_type == BudgetType::Series && b < 1.0 {
        let keep = subsample_indices(&v.data, b);
        // an epoch over fewer series holds proportionally fewer samples
        fit.num_batches = effective_batches(
            pipeline.num_batches_per_epoch,
            keep.len() as f64 / v.data.len() as f64,
        );
        let data = TimeSeriesDataset {
            series: keep.iter().map(|&i| v.data.series[i].clone()).collect(),
            ..(*v.data).clone()
        };
        let sub = SplitView {
            horizon: v.split.horizon,
            ranges: keep.iter().map(|&i| v.split.ranges[i].clone()).collect(),
        };
        fit_model(&pipeline, &data, &sub, fit, v.mase_period, seed, deadline)?
    } else {
        fit_model(
            &pipeline,
            &v.data,
            &v.split,
            fit,
            v.mase_period,
            seed,
            deadline,
        )?
    };
    if timed_out {
        return Err(EvalError::Timeout);
    }
    let train_seconds = clock.now();
    let plan = settings.proxy.plan(v.data.len(), b);
    let forecasts = forecast(&state, &v.data, &v.split, &plan, v.mase_period, seed)?;
    let loss = validation_loss(&v.data, &v.split, &forecasts, v.mase_period)?;
    if deadline.is_some_and(|d| d.expired()) {
        return Err(EvalError::Timeout);
    }
    Ok(Scored {
        loss,
        train_seconds,
        eval_seconds: clock.now() - train_seconds,
        forecasts,
    })
}

/// Trains `config` at `budget` and scores its validation forecasts.
///
/// Errors become `failed` and overrunning `time_limit` becomes `timeout`,
/// both with `penalty` as their loss.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    config: &Configuration,
    budget: FidelityBudget,
    dataset: &TimeSeriesDataset,
    split: &SplitView,
    seed: u64,
    settings: &EvalSettings,
    clock: ClockKind,
    time_limit: f64,
    penalty: f64,
) -> EvalOutcome {
    let clock = RunClock::start(clock);
    let deadline = time_limit
        .is_finite()
        .then(|| Deadline::new(clock, time_limit));
    match run(
        config, budget, dataset, split, seed, settings, clock, deadline,
    ) {
        Ok(s) => EvalOutcome {
            status: EvalStatus::Ok,
            val_loss: s.loss,
            train_seconds: s.train_seconds,
            eval_seconds: s.eval_seconds,
            val_forecasts: Some(s.forecasts),
        },
        Err(e) => {
            let status = if matches!(e, EvalError::Timeout) {
                EvalStatus::Timeout
            } else {
                EvalStatus::Failed
            };
            log::debug!("evaluation {status}: {e}");
            EvalOutcome {
                status,
                val_loss: penalty,
                train_seconds: clock.now(),
                eval_seconds: 0.0,
                val_forecasts: None,
            }
        }
    }
}

/// [`Evaluator`] over one dataset; the penalty is the all-dummy loss.
#[derive(Debug, Clone)]
pub struct PipelineEvaluator<'a> {
    pub dataset: &'a TimeSeriesDataset,
    pub split: SplitView,
    pub settings: EvalSettings,
    penalty: f64,
}

impl<'a> PipelineEvaluator<'a> {
    pub fn new(dataset: &'a TimeSeriesDataset, settings: EvalSettings) -> Result<Self, EvalError> {
        let split = crate::dataset::split(dataset)?;
        let penalty = dummy_loss(dataset, &split)?;
        Ok(Self {
            dataset,
            split,
            settings,
            penalty,
        })
    }
}

impl Evaluator for PipelineEvaluator<'_> {
    fn evaluate(&self, job: &Job) -> EvalOutcome {
        evaluate(
            &job.config,
            job.budget,
            self.dataset,
            &self.split,
            job.seed,
            &self.settings,
            job.clock,
            job.time_limit,
            self.penalty,
        )
    }

    fn penalty(&self) -> f64 {
        self.penalty
    }
}

/// Trains `config` from scratch at full fidelity on train and validation
/// together (`[0, L - H)` per series).
pub fn refit(
    config: &Configuration,
    dataset: &TimeSeriesDataset,
    seed: u64,
    max_epochs: usize,
) -> Result<ModelState, EvalError> {
    let pipeline = Pipeline::from_config(config)?;
    let split = SplitView::train_val(dataset, dataset.horizon)?;
    let fit = Fit {
        epochs: max_epochs,
        num_batches: pipeline.num_batches_per_epoch,
        window: window_from_multiplier(
            pipeline.window_multiplier,
            base_window_size(dataset.frequency, dataset.horizon),
        ),
    };
    let (state, _) = fit_model(
        &pipeline,
        dataset,
        &split,
        fit,
        dataset.frequency.mase_period(),
        seed,
        None,
    )?;
    Ok(state)
}

/// Point forecasts of the last `H` steps of every series, from origin `L - H`.
pub fn forecast_test(
    state: &ModelState,
    dataset: &TimeSeriesDataset,
    seed: u64,
) -> Result<Vec<Vec<f64>>, EvalError> {
    let split = SplitView::train_val(dataset, dataset.horizon)?;
    if state.dims.horizon != dataset.horizon {
        return Err(ZooError::ShapeMismatch(format!(
            "model horizon {} but dataset horizon {}",
            state.dims.horizon, dataset.horizon
        ))
        .into());
    }
    let all = ProxyPlan {
        evaluated_indices: (0..dataset.len()).collect(),
        covered_fraction: 1.0,
    };
    forecast(
        state,
        dataset,
        &split,
        &all,
        dataset.frequency.mase_period(),
        seed,
    )
}
