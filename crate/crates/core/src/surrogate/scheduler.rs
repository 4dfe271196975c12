//! Successive-halving scheduler driving the surrogate.
//!
//! New configurations enter the lowest rung in cohorts. Once every member
//! of a cohort has finished a rung, the best `ceil(n / eta)` move up one
//! rung. Promotions run before new configurations, so with one worker each
//! cohort climbs the whole ladder before the next one starts.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::clock::{add_work, work_units, ClockKind, RunClock};
use crate::configspace::{ConfigSpace, Configuration};
use crate::fidelity::{BudgetType, FidelityBudget, FidelityLadder};
use crate::history::{EvalStatus, RunRecord};

use super::{suggest, SuggestParams};

/// One evaluation request.
#[derive(Debug, Clone)]
pub struct Job {
    pub config_id: u64,
    pub config: Configuration,
    pub budget: FidelityBudget,
    pub rung: usize,
    pub seed: u64,
    /// Seconds the evaluation may take before it must stop.
    pub time_limit: f64,
    pub clock: ClockKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub status: EvalStatus,
    pub val_loss: f64,
    pub train_seconds: f64,
    pub eval_seconds: f64,
    /// Validation point forecasts, one path per series.
    pub val_forecasts: Option<Vec<Vec<f64>>>,
}

impl EvalOutcome {
    pub fn failed(penalty: f64) -> Self {
        Self {
            status: EvalStatus::Failed,
            val_loss: penalty,
            train_seconds: 0.0,
            eval_seconds: 0.0,
            val_forecasts: None,
        }
    }
}

/// Maps a job to a validation loss.
pub trait Evaluator: Sync {
    fn evaluate(&self, job: &Job) -> EvalOutcome;
    /// Loss recorded for failed evaluations.
    fn penalty(&self) -> f64;
}

#[derive(Debug, Clone)]
pub struct OptimizerSettings {
    pub ladder: FidelityLadder,
    pub budget_type: BudgetType,
    /// Optimization budget in seconds of `clock`.
    pub time_limit: f64,
    pub clock: ClockKind,
    pub seed: u64,
    pub cohort_size: usize,
    pub workers: usize,
    /// Upper bound on the time of one full-budget evaluation; a run at
    /// budget value `b` may take `b` times as long.
    pub eval_timeout: Option<f64>,
    /// Stop after this many evaluations.
    pub max_evaluations: Option<usize>,
    pub suggest: SuggestParams,
}

impl OptimizerSettings {
    pub fn new(budget_type: BudgetType, time_limit: f64, seed: u64) -> Self {
        Self {
            ladder: FidelityLadder::for_budget_type(budget_type),
            budget_type,
            time_limit,
            clock: ClockKind::Wall,
            seed,
            cohort_size: 9,
            workers: 1,
            eval_timeout: None,
            max_evaluations: None,
            suggest: SuggestParams::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    /// Every evaluation in completion order.
    pub records: Vec<RunRecord>,
    /// Index into `records` of the best successful top-rung run.
    pub incumbent: Option<usize>,
    /// Validation forecasts of successful top-rung runs by config id.
    pub val_forecasts: BTreeMap<u64, Vec<Vec<f64>>>,
}

impl OptimizationResult {
    pub fn incumbent_record(&self) -> Option<&RunRecord> {
        self.incumbent.map(|i| &self.records[i])
    }
}

struct Cohort {
    /// Per rung: members entering it and `(id, loss, completion)` of those finished.
    entering: Vec<usize>,
    finished: Vec<Vec<(u64, f64, usize)>>,
    promoted: Vec<bool>,
}

struct Scheduler<'a> {
    space: &'a ConfigSpace,
    settings: &'a OptimizerSettings,
    rng: ChaCha8Rng,
    initial: std::collections::VecDeque<Configuration>,
    configs: BTreeMap<u64, Configuration>,
    cohort_of: BTreeMap<u64, usize>,
    cohorts: Vec<Cohort>,
    promotions: Vec<(u64, usize)>,
    next_id: u64,
    suggestions: usize,
    started: usize,
    completed: usize,
    /// Configurations started at the lowest rung and their finished losses.
    low_taken: Vec<Configuration>,
    low_observed: Vec<(Configuration, f64)>,
}

fn mix(seed: u64, a: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Scheduler<'_> {
    fn top(&self) -> usize {
        self.settings.ladder.rungs.len() - 1
    }

    fn job(&self, id: u64, rung: usize, remaining: f64) -> Job {
        let value = self.settings.ladder.rungs[rung];
        Job {
            config_id: id,
            config: self.configs[&id].clone(),
            budget: FidelityBudget {
                budget_type: self.settings.budget_type,
                value,
            },
            rung,
            seed: mix(self.settings.seed, id),
            time_limit: self
                .settings
                .eval_timeout
                .map_or(remaining, |t| (t * value).min(remaining)),
            clock: self.settings.clock,
        }
    }

    /// Promotions first (highest rung first), then a new configuration.
    fn next(&mut self, remaining: f64) -> Option<Job> {
        if remaining <= 0.0
            || self
                .settings
                .max_evaluations
                .is_some_and(|m| self.started >= m)
        {
            return None;
        }
        self.started += 1;
        if let Some(pos) =
            (0..self.promotions.len()).max_by_key(|&i| (self.promotions[i].1, usize::MAX - i))
        {
            let (id, rung) = self.promotions.remove(pos);
            return Some(self.job(id, rung, remaining));
        }
        let config = match self.initial.pop_front() {
            Some(c) => c,
            None => {
                let c = suggest(
                    &self.low_observed,
                    &self.low_taken,
                    self.space,
                    self.suggestions,
                    &self.settings.suggest,
                    &mut self.rng,
                );
                self.suggestions += 1;
                c
            }
        };
        let id = self.next_id;
        self.next_id += 1;
        self.low_taken.push(config.clone());
        self.configs.insert(id, config);
        let size = self.settings.cohort_size.max(1);
        let open = self.cohorts.last().is_some_and(|c| c.entering[0] < size);
        if !open {
            let rungs = self.top() + 1;
            self.cohorts.push(Cohort {
                entering: vec![0; rungs],
                finished: vec![Vec::new(); rungs],
                promoted: vec![false; rungs],
            });
        }
        let ci = self.cohorts.len() - 1;
        self.cohorts[ci].entering[0] += 1;
        self.cohort_of.insert(id, ci);
        Some(self.job(id, 0, remaining))
    }

    fn finish(&mut self, job: &Job, loss: f64) {
        let seq = self.completed;
        self.completed += 1;
        if job.rung == 0 {
            self.low_observed.push((job.config.clone(), loss));
        }
        let ci = self.cohort_of[&job.config_id];
        let size = self.settings.cohort_size.max(1);
        let top = self.top();
        let eta = self.settings.ladder.eta;
        let cohort = &mut self.cohorts[ci];
        cohort.finished[job.rung].push((job.config_id, loss, seq));
        let r = job.rung;
        // the lowest rung is complete once the full cohort is back, higher rungs once every promoted member is
        let expected = if r == 0 { size } else { cohort.entering[r] };
        let ready = r < top && !cohort.promoted[r] && cohort.finished[r].len() == expected;
        if ready {
            cohort.promoted[r] = true;
            let mut ranked = cohort.finished[r].clone();
            ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.2.cmp(&b.2)));
            let k = (ranked.len() as f64 / eta).ceil() as usize;
            cohort.entering[r + 1] = k;
            for &(id, _, _) in ranked.iter().take(k) {
                self.promotions.push((id, r + 1));
            }
        }
    }
}

fn guarded(evaluator: &dyn Evaluator, job: &Job) -> EvalOutcome {
    let penalty = evaluator.penalty();
    let mut out = match catch_unwind(AssertUnwindSafe(|| evaluator.evaluate(job))) {
        Ok(o) => o,
        Err(_) => {
            log::warn!("evaluation of config {} panicked", job.config_id);
            EvalOutcome::failed(penalty)
        }
    };
    if out.status == EvalStatus::Ok && !out.val_loss.is_finite() {
        out.status = EvalStatus::Failed;
    }
    if out.status != EvalStatus::Ok {
        out.val_loss = penalty;
        out.val_forecasts = None;
    }
    out
}

/// Runs the optimization until the time limit (or evaluation cap) is hit.
///
/// `on_record` sees every record as it completes, in completion order. With
/// one worker, evaluations run on the calling thread and the whole run is
/// reproducible under the work clock. With more workers, the work done on
/// worker threads is added to the calling thread's work counter as results
/// arrive.
pub fn run_optimization(
    space: &ConfigSpace,
    settings: &OptimizerSettings,
    evaluator: &dyn Evaluator,
    mut on_record: impl FnMut(&RunRecord),
) -> OptimizationResult {
    let clock = RunClock::start(settings.clock);
    let mut sched = Scheduler {
        space,
        settings,
        rng: ChaCha8Rng::seed_from_u64(mix(settings.seed, 0x5eed)),
        initial: space.initial_design().into(),
        configs: BTreeMap::new(),
        cohort_of: BTreeMap::new(),
        cohorts: Vec::new(),
        promotions: Vec::new(),
        next_id: 0,
        suggestions: 0,
        started: 0,
        completed: 0,
        low_taken: Vec::new(),
        low_observed: Vec::new(),
    };
    let mut result = OptimizationResult {
        records: Vec::new(),
        incumbent: None,
        val_forecasts: BTreeMap::new(),
    };
    let top = sched.top();
    let mut complete =
        |sched: &mut Scheduler, job: Job, out: EvalOutcome, result: &mut OptimizationResult| {
            sched.finish(&job, out.val_loss);
            let record = RunRecord {
                config_id: job.config_id,
                config: job.config.values.clone(),
                space_hash: job.config.space_hash.clone(),
                budget_type: job.budget.budget_type,
                budget_value: job.budget.value,
                val_loss: out.val_loss,
                train_seconds: out.train_seconds,
                eval_seconds: out.eval_seconds,
                status: out.status,
                wall_clock: clock.now(),
                seed: job.seed,
            };
            on_record(&record);
            if job.rung == top && out.status == EvalStatus::Ok {
                if let Some(f) = out.val_forecasts {
                    result.val_forecasts.insert(job.config_id, f);
                }
                let better = result
                    .incumbent
                    .is_none_or(|i| out.val_loss < result.records[i].val_loss);
                if better {
                    result.incumbent = Some(result.records.len());
                }
            }
            result.records.push(record);
        };
    if settings.workers <= 1 {
        while let Some(job) = sched.next(settings.time_limit - clock.now()) {
            let out = guarded(evaluator, &job);
            complete(&mut sched, job, out, &mut result);
        }
        return result;
    }
    std::thread::scope(|s| {
        let (res_tx, res_rx) = mpsc::channel::<(usize, Job, EvalOutcome, u64)>();
        let mut senders = Vec::with_capacity(settings.workers);
        for w in 0..settings.workers {
            let (tx, rx) = mpsc::channel::<Job>();
            senders.push(tx);
            let res_tx = res_tx.clone();
            s.spawn(move || {
                for job in rx {
                    let start = work_units();
                    let out = guarded(evaluator, &job);
                    let used = work_units().wrapping_sub(start);
                    if res_tx.send((w, job, out, used)).is_err() {
                        break;
                    }
                }
            });
        }
        let mut idle: Vec<usize> = (0..settings.workers).rev().collect();
        let mut in_flight = 0;
        loop {
            while let Some(&w) = idle.last() {
                match sched.next(settings.time_limit - clock.now()) {
                    Some(job) => {
                        idle.pop();
                        senders[w].send(job).expect("worker alive");
                        in_flight += 1;
                    }
                    None => break,
                }
            }
            if in_flight == 0 {
                break;
            }
            let (w, job, out, used) = res_rx.recv().expect("worker result");
            add_work(used);
            in_flight -= 1;
            idle.push(w);
            complete(&mut sched, job, out, &mut result);
        }
        drop(senders);
    });
    result
}
