//! `tsforge run`: optimize, select and refit the ensemble, forecast the test
//! tails and write the run directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use tsforge::clock::ClockKind;
use tsforge::configspace::{default_space, ConfigSpace};
use tsforge::dataset::{load_dataset, split, Frequency, TimeSeriesDataset};
use tsforge::ensemble::{
    refit_members, select, Candidate, FittedEnsemble, Manifest, ManifestMember,
};
use tsforge::evaluation::{EvalSettings, PipelineEvaluator, ProxySettings};
use tsforge::fidelity::{BudgetType, FidelityLadder};
use tsforge::history::{append_record, full_fidelity_curve, EvalStatus, RunRecord};
use tsforge::metrics::{incumbent_auc, incumbent_trajectory, mae, mase, smape};
use tsforge::surrogate::{run_optimization, OptimizerSettings};

use crate::output::{forecasts_csv, write_atomic};
use crate::{CliError, RunArgs};

/// Share of the walltime one evaluation may use unless `eval_timeout` is set.
pub const DEFAULT_EVAL_TIMEOUT_FRACTION: f64 = 0.1;

pub const HISTORY_FILE: &str = "history.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: PathBuf,
    pub csv_horizon: Option<usize>,
    pub csv_frequency: Option<Frequency>,
    pub budget_type: BudgetType,
    pub walltime: f64,
    pub seed: u64,
    pub ensemble_size: usize,
    pub max_epochs: usize,
    pub proxy: ProxySettings,
    pub out: PathBuf,
    pub workers: usize,
    pub clock: ClockKind,
    pub overrides: Vec<(String, String)>,
}

impl RunConfig {
    pub fn from_args(a: &RunArgs) -> Result<Self, CliError> {
        let overrides = a
            .overrides
            .iter()
            .map(|kv| {
                kv.split_once('=')
                    .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                    .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got '{kv}'")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let cfg = Self {
            data: a.data.clone(),
            csv_horizon: a.csv.horizon,
            csv_frequency: a.csv.frequency,
            budget_type: a.budget,
            walltime: a.walltime,
            seed: a.seed,
            ensemble_size: a.ensemble_size,
            max_epochs: a.max_epochs,
            proxy: ProxySettings {
                enabled: !a.no_proxy,
                min_proxy: a.proxy_min,
                threshold: a.proxy_threshold,
            },
            out: a.out.clone(),
            workers: a.workers,
            clock: a.clock,
            overrides,
        };
        cfg.optimizer_settings()?;
        Ok(cfg)
    }

    /// Optimizer settings with the `--set` overrides applied.
    pub fn optimizer_settings(&self) -> Result<OptimizerSettings, CliError> {
        if !(self.walltime >= 0.0) {
            return Err(CliError::Usage(format!(
                "walltime must be non-negative, got {}",
                self.walltime
            )));
        }
        if self.workers == 0 || self.ensemble_size == 0 || self.max_epochs == 0 {
            return Err(CliError::Usage(
                "workers, ensemble size and max epochs must be positive".into(),
            ));
        }
        let mut s = OptimizerSettings::new(self.budget_type, self.walltime, self.seed);
        s.clock = self.clock;
        s.workers = self.workers;
        s.eval_timeout = Some(self.walltime * DEFAULT_EVAL_TIMEOUT_FRACTION);
        let (mut min_budget, mut eta) = (s.ladder.lowest(), s.ladder.eta);
        for (key, value) in &self.overrides {
            let bad = || CliError::Usage(format!("invalid value for {key}: '{value}'"));
            let int = || value.parse::<usize>().map_err(|_| bad());
            let real = || {
                value
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(bad)
            };
            match key.as_str() {
                "cohort_size" => s.cohort_size = int()?.max(1),
                "min_budget" => min_budget = real()?,
                "eta" => eta = real()?,
                "eval_timeout" => {
                    s.eval_timeout = if value == "none" { None } else { Some(real()?) }
                }
                "max_evaluations" => s.max_evaluations = Some(int()?),
                "random_candidates" => s.suggest.random_candidates = int()?,
                "local_starts" => s.suggest.local_starts = int()?,
                "neighbors_per_start" => s.suggest.neighbors_per_start = int()?,
                "num_trees" => s.suggest.forest.num_trees = int()?.max(1),
                "min_leaf" => s.suggest.forest.min_leaf = int()?.max(1),
                "feature_fraction" => s.suggest.forest.feature_fraction = real()?,
                _ => return Err(CliError::Usage(format!("unknown override '{key}'"))),
            }
        }
        if self.budget_type != BudgetType::Vanilla {
            s.ladder = FidelityLadder::geometric(min_budget, eta)
                .map_err(|e| CliError::Usage(e.to_string()))?;
        }
        Ok(s)
    }
}

/// Test-tail scores of one series; `None` where a metric is undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesScores {
    pub id: String,
    pub mase: Option<f64>,
    pub smape: Option<f64>,
    pub mae: Option<f64>,
}

/// Means over the series where each metric is defined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateScores {
    pub mase: Option<f64>,
    pub smape: Option<f64>,
    pub mae: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records: Vec<RunRecord>,
    pub incumbent: RunRecord,
    pub ensemble_val_loss: f64,
    pub forecasts: Vec<Vec<f64>>,
    pub test: AggregateScores,
}

/// MASE period for a series with `train_len` in-sample points; too-short
/// histories fall back to the one-step naive scale.
fn period(train_len: usize, m: usize) -> usize {
    if train_len > m {
        m
    } else {
        1
    }
}

/// Scores forecasts of the last `H` points, with `[0, L - H)` as in-sample data.
pub fn score_test(
    dataset: &TimeSeriesDataset,
    forecasts: &[Vec<f64>],
) -> (Vec<SeriesScores>, AggregateScores) {
    let h = dataset.horizon;
    let m = dataset.frequency.mase_period();
    let rows: Vec<SeriesScores> = dataset
        .series
        .iter()
        .zip(forecasts)
        .map(|(s, pred)| {
            let t = s.len() - h;
            let (train, truth) = s.targets.split_at(t);
            let finite = |v: f64| Some(v).filter(|x| x.is_finite());
            SeriesScores {
                id: s.id.clone(),
                mase: mase(truth, pred, train, period(t, m))
                    .ok()
                    .flatten()
                    .and_then(finite),
                smape: smape(truth, pred).ok().and_then(finite),
                mae: mae(truth, pred).ok().and_then(finite),
            }
        })
        .collect();
    let mean = |f: fn(&SeriesScores) -> Option<f64>| {
        let v: Vec<f64> = rows.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let agg = AggregateScores {
        mase: mean(|r| r.mase),
        smape: mean(|r| r.smape),
        mae: mean(|r| r.mae),
    };
    (rows, agg)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn metrics_csv(rows: &[SeriesScores], agg: &AggregateScores) -> String {
    let mut out = String::from("series_id,mase,smape,mae\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.id,
            cell(r.mase),
            cell(r.smape),
            cell(r.mae)
        )
        .expect("string write");
    }
    writeln!(
        out,
        "aggregate,{},{},{}",
        cell(agg.mase),
        cell(agg.smape),
        cell(agg.mae)
    )
    .expect("string write");
    out
}

/// Last-value and seasonal-naive forecasts of the test tails.
fn baselines(dataset: &TimeSeriesDataset) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let h = dataset.horizon;
    let m = dataset.frequency.mase_period();
    dataset
        .series
        .iter()
        .map(|s| {
            let t = s.len() - h;
            let y = &s.targets;
            let last = vec![y[t - 1]; h];
            let seasonal = if t >= m {
                (0..h).map(|i| y[t - m + i % m]).collect()
            } else {
                last.clone()
            };
            (last, seasonal)
        })
        .unzip()
}

fn checkpoint_name(config_id: u64) -> String {
    format!("models/member_{config_id}.json")
}

fn write_ensemble(
    out: &Path,
    fitted: &FittedEnsemble,
    space: &ConfigSpace,
    horizon: usize,
    val_loss: f64,
) -> Result<(), CliError> {
    fs::create_dir_all(out.join("models"))?;
    let mut members = Vec::with_capacity(fitted.members.len());
    let mut configs = BTreeMap::new();
    for m in &fitted.members {
        let checkpoint = checkpoint_name(m.member.config_id);
        write_atomic(&out.join(&checkpoint), m.state.to_json().as_bytes())?;
        configs.insert(m.member.config_id, m.member.config.values.clone());
        members.push(ManifestMember {
            config_id: m.member.config_id,
            weight: m.member.weight,
            seed: m.seed,
            checkpoint,
        });
    }
    let manifest = Manifest {
        space_hash: space.hash().to_string(),
        horizon,
        val_loss,
        fallback_to_dummy: fitted.fallback_to_dummy,
        members,
        configs,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&out.join(MANIFEST_FILE), text.as_bytes())?;
    Ok(())
}

struct SummaryInput<'a> {
    cfg: &'a RunConfig,
    settings: &'a OptimizerSettings,
    dataset: &'a TimeSeriesDataset,
    records: &'a [RunRecord],
    incumbent: &'a RunRecord,
    fitted: &'a FittedEnsemble,
    ensemble_val_loss: f64,
    test: AggregateScores,
    dummy: AggregateScores,
    seasonal: AggregateScores,
}

fn summary_text(s: &SummaryInput) -> String {
    let mut out = String::new();
    let d = s.dataset;
    let w = &mut out;
    let line = |w: &mut String, text: String| writeln!(w, "{text}").expect("string write");
    line(
        w,
        format!(
            "dataset {} ({} series, horizon {}, frequency {})",
            d.name,
            d.len(),
            d.horizon,
            d.frequency
        ),
    );
    line(
        w,
        format!(
            "budget {} rungs {:?} walltime {} clock {} seed {} workers {}",
            s.cfg.budget_type,
            s.settings.ladder.rungs,
            s.cfg.walltime,
            s.cfg.clock,
            s.cfg.seed,
            s.cfg.workers
        ),
    );
    let count = |st: EvalStatus| s.records.iter().filter(|r| r.status == st).count();
    line(
        w,
        format!(
            "evaluations {} (ok {}, failed {}, timeout {})",
            s.records.len(),
            count(EvalStatus::Ok),
            count(EvalStatus::Failed),
            count(EvalStatus::Timeout)
        ),
    );
    for &b in &s.settings.ladder.rungs {
        let n = s.records.iter().filter(|r| r.budget_value == b).count();
        line(w, format!("  rung {b}: {n}"));
    }
    line(
        w,
        format!(
            "incumbent config {} val_loss {} at {}s",
            s.incumbent.config_id, s.incumbent.val_loss, s.incumbent.wall_clock
        ),
    );
    line(w, format!("  {}", s.incumbent.configuration().describe()));
    let curve = full_fidelity_curve(s.records);
    line(
        w,
        "incumbent trajectory (wall_clock, incumbent_loss)".into(),
    );
    for (t, l) in incumbent_trajectory(&curve) {
        line(w, format!("  {t} {l}"));
    }
    let horizon = if s.cfg.walltime > 0.0 {
        s.cfg.walltime
    } else {
        curve.last().map_or(0.0, |p| p.0)
    };
    if let Ok(auc) = incumbent_auc(&curve, horizon) {
        line(
            w,
            format!(
                "auc raw {} normalized {} (from {}s to {horizon}s)",
                auc.raw, auc.normalized, auc.t_first
            ),
        );
    }
    line(w, format!("ensemble val_loss {}", s.ensemble_val_loss));
    if s.fitted.fallback_to_dummy {
        line(
            w,
            "  every member failed to refit: forecasts repeat the last value".into(),
        );
    }
    for m in &s.fitted.members {
        line(
            w,
            format!("  config {} weight {}", m.member.config_id, m.member.weight),
        );
    }
    let scores = |a: &AggregateScores| {
        format!(
            "mase {} smape {} mae {}",
            cell(a.mase),
            cell(a.smape),
            cell(a.mae)
        )
    };
    line(w, format!("test ensemble {}", scores(&s.test)));
    line(w, format!("test last-value {}", scores(&s.dummy)));
    line(w, format!("test seasonal-naive {}", scores(&s.seasonal)));
    out
}

pub fn cmd_run(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let settings = cfg.optimizer_settings()?;
    let dataset = load_dataset(&cfg.data, cfg.csv_horizon, cfg.csv_frequency)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let split_view = split(&dataset).map_err(|e| CliError::Data(e.to_string()))?;
    let eval_settings = EvalSettings {
        max_epochs: cfg.max_epochs,
        proxy: cfg.proxy,
    };
    let evaluator = PipelineEvaluator::new(&dataset, eval_settings)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let space = default_space();

    fs::create_dir_all(&cfg.out)?;
    write_atomic(
        &cfg.out.join("space.txt"),
        space.definition_text().as_bytes(),
    )?;
    let history = cfg.out.join(HISTORY_FILE);
    write_atomic(&history, b"")?;
    let mut append_error = None;
    let result = run_optimization(&space, &settings, &evaluator, |r| {
        if append_error.is_none() {
            append_error = append_record(&history, r).err();
        }
    });
    if let Some(e) = append_error {
        return Err(CliError::Io(std::io::Error::other(e.to_string())));
    }
    let incumbent = result
        .incumbent_record()
        .cloned()
        .ok_or(CliError::NoSuccessfulEvaluation)?;
    log::info!(
        "incumbent {} with validation loss {}",
        incumbent.config_id,
        incumbent.val_loss
    );

    let candidates: Vec<Candidate> = result
        .val_forecasts
        .iter()
        .filter_map(|(&id, paths)| {
            let record = result
                .records
                .iter()
                .find(|r| r.config_id == id && r.is_ok() && r.is_full_fidelity())?;
            Some(Candidate {
                config_id: id,
                config: record.configuration(),
                val_forecasts: paths.clone(),
            })
        })
        .collect();
    let ensemble = select(&candidates, &dataset, &split_view, cfg.ensemble_size)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let mut fitted = refit_members(&ensemble, &dataset, cfg.seed, cfg.max_epochs);
    let forecasts = match fitted.forecast(&dataset) {
        Ok(f) => f,
        Err(e) => {
            log::warn!("ensemble forecast failed ({e}); falling back to the last value");
            fitted = FittedEnsemble {
                members: Vec::new(),
                fallback_to_dummy: true,
            };
            fitted
                .forecast(&dataset)
                .map_err(|e| CliError::Data(e.to_string()))?
        }
    };
    write_ensemble(
        &cfg.out,
        &fitted,
        &space,
        dataset.horizon,
        ensemble.val_loss,
    )?;
    write_atomic(
        &cfg.out.join("forecasts.csv"),
        forecasts_csv(&dataset, &forecasts).as_bytes(),
    )?;
    let (rows, test) = score_test(&dataset, &forecasts);
    write_atomic(
        &cfg.out.join("metrics.csv"),
        metrics_csv(&rows, &test).as_bytes(),
    )?;

    let (last, seasonal) = baselines(&dataset);
    let summary = summary_text(&SummaryInput {
        cfg,
        settings: &settings,
        dataset: &dataset,
        records: &result.records,
        incumbent: &incumbent,
        fitted: &fitted,
        ensemble_val_loss: ensemble.val_loss,
        test,
        dummy: score_test(&dataset, &last).1,
        seasonal: score_test(&dataset, &seasonal).1,
    });
    write_atomic(&cfg.out.join("summary.txt"), summary.as_bytes())?;
    Ok(RunOutcome {
        records: result.records,
        incumbent,
        ensemble_val_loss: ensemble.val_loss,
        forecasts,
        test,
    })
}
