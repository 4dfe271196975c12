//! First-order hyperparameter importance from forest marginals.
//!
//! Each dimension gets a reference measure: the inactive sentinel carries
//! its observed frequency, the remaining mass is spread uniformly over the
//! unit interval (real and wide integer ranges) or over the choices
//! (categorical and narrow integer ranges). Under the product of these
//! measures a tree is piecewise constant on boxes, so its marginals and
//! variances are exact finite sums.

use std::collections::BTreeMap;
use std::fmt::Write;

use rand::Rng;
use thiserror::Error;

use crate::configspace::{ConfigSpace, Domain, INACTIVE};
use crate::history::RunRecord;
use crate::surrogate::{Forest, ForestParams, SurrogateError, Tree};

pub const MIN_RUNS: usize = 10;
/// Integer ranges with at most this many values are treated as discrete.
const MAX_DISCRETE: i64 = 256;

#[derive(Debug, Error, PartialEq)]
pub enum ImportanceError {
    #[error("need at least {MIN_RUNS} successful runs at the rung, got {0}")]
    TooFewRuns(usize),
    #[error("every loss is equal; there is no variance to attribute")]
    ZeroVariance,
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceReport {
    pub budget_value: f64,
    /// Space order.
    pub per_hyperparameter: Vec<(String, f64)>,
    /// Variance not explained by any single hyperparameter.
    pub residual: f64,
}

impl ImportanceReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.per_hyperparameter
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }
}

/// Reference measure of one vectorized dimension.
#[derive(Debug, Clone, PartialEq)]
struct Measure {
    inactive: f64,
    /// Atoms of the active part; `None` means uniform on `[0, 1]`.
    atoms: Option<Vec<f64>>,
}

impl Measure {
    fn of(domain: &Domain, inactive: f64) -> Self {
        let grid = |k: usize| -> Vec<f64> {
            if k < 2 {
                vec![0.0]
            } else {
                (0..k).map(|i| i as f64 / (k - 1) as f64).collect()
            }
        };
        let atoms = match domain {
            Domain::Categorical(c) => Some(grid(c.len())),
            Domain::Integer { lo, hi, log: false } if hi - lo < MAX_DISCRETE => {
                Some(grid((hi - lo + 1) as usize))
            }
            _ => None,
        };
        Self { inactive, atoms }
    }

    /// Mass of `(lo, hi]`.
    fn mass(&self, lo: f64, hi: f64) -> f64 {
        let inside = |v: f64| lo < v && v <= hi;
        let mut m = if inside(INACTIVE) { self.inactive } else { 0.0 };
        let active = 1.0 - self.inactive;
        match &self.atoms {
            Some(a) => {
                m += active * a.iter().filter(|&&v| inside(v)).count() as f64 / a.len() as f64
            }
            None => m += active * (hi.min(1.0) - lo.max(0.0)).max(0.0),
        }
        m
    }

    /// Cells on which a tree splitting at `thresholds` is constant: a
    /// representative point and the cell's mass.
    fn cells(&self, thresholds: &[f64]) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        if self.inactive > 0.0 {
            out.push((INACTIVE, self.inactive));
        }
        let active = 1.0 - self.inactive;
        if active <= 0.0 {
            return out;
        }
        match &self.atoms {
            Some(a) => out.extend(a.iter().map(|&v| (v, active / a.len() as f64))),
            None => {
                let mut edges = vec![0.0];
                edges.extend(thresholds.iter().copied().filter(|&t| t > 0.0 && t < 1.0));
                edges.push(1.0);
                for w in edges.windows(2) {
                    if w[1] > w[0] {
                        out.push((0.5 * (w[0] + w[1]), active * (w[1] - w[0])));
                    }
                }
            }
        }
        out
    }
}

/// Per-dimension variance fractions of one tree, or `None` when the tree is
/// constant under the measure.
fn tree_fractions(tree: &Tree, measures: &[Measure]) -> Option<Vec<f64>> {
    let dims = measures.len();
    let leaves: Vec<(f64, Vec<f64>, Vec<(f64, f64)>)> = tree
        .leaf_boxes(dims)
        .into_iter()
        .map(|(value, bounds)| {
            let masses = bounds
                .iter()
                .zip(measures)
                .map(|(&(lo, hi), m)| m.mass(lo, hi))
                .collect();
            (value, masses, bounds)
        })
        .filter(|(_, masses, _): &(f64, Vec<f64>, _)| masses.iter().all(|&m| m > 0.0))
        .collect();
    let volume = |masses: &[f64]| masses.iter().product::<f64>();
    let mean: f64 = leaves.iter().map(|(v, m, _)| v * volume(m)).sum();
    let total: f64 = leaves
        .iter()
        .map(|(v, m, _)| (v - mean).powi(2) * volume(m))
        .sum();
    if total <= 1e-14 * (1.0 + mean * mean) {
        return None;
    }
    let fractions = (0..dims)
        .map(|i| {
            let cells = measures[i].cells(&tree.thresholds(i));
            let var: f64 = cells
                .iter()
                .map(|&(x, w)| {
                    // marginal at x: leaves whose box holds x, weighted by their volume in the other dims
                    let y: f64 = leaves
                        .iter()
                        .filter(|(_, _, b)| b[i].0 < x && x <= b[i].1)
                        .map(|(v, m, _)| {
                            v * m
                                .iter()
                                .enumerate()
                                .filter(|&(j, _)| j != i)
                                .map(|(_, q)| q)
                                .product::<f64>()
                        })
                        .sum();
                    w * (y - mean).powi(2)
                })
                .sum();
            var / total
        })
        .collect();
    Some(fractions)
}

/// First-order importances of the successful runs at `budget_value`.
pub fn fanova<R: Rng + ?Sized>(
    records: &[RunRecord],
    space: &ConfigSpace,
    budget_value: f64,
    num_trees: usize,
    rng: &mut R,
) -> Result<ImportanceReport, ImportanceError> {
    let runs: Vec<&RunRecord> = records
        .iter()
        .filter(|r| r.is_ok() && r.budget_value == budget_value)
        .collect();
    if runs.len() < MIN_RUNS {
        return Err(ImportanceError::TooFewRuns(runs.len()));
    }
    let x: Vec<Vec<f64>> = runs
        .iter()
        .map(|r| space.vectorize(&r.configuration()))
        .collect();
    let y: Vec<f64> = runs.iter().map(|r| r.val_loss).collect();
    if y.iter().all(|&v| v == y[0]) {
        return Err(ImportanceError::ZeroVariance);
    }
    let measures: Vec<Measure> = space
        .defs()
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let inactive =
                x.iter().filter(|row| row[i] == INACTIVE).count() as f64 / x.len() as f64;
            Measure::of(&d.domain, inactive)
        })
        .collect();
    // raw losses keep the fractions invariant to affine rescaling
    let params = ForestParams {
        num_trees,
        log_transform: false,
        ..ForestParams::default()
    };
    let forest = Forest::fit(&x, &y, &params, rng)?;
    let per_tree: Vec<Vec<f64>> = forest
        .trees
        .iter()
        .filter_map(|t| tree_fractions(t, &measures))
        .collect();
    if per_tree.is_empty() {
        return Err(ImportanceError::ZeroVariance);
    }
    let n = per_tree.len() as f64;
    let per_hyperparameter: Vec<(String, f64)> = space
        .defs()
        .iter()
        .enumerate()
        .map(|(i, d)| {
            (
                d.name.clone(),
                per_tree.iter().map(|f| f[i]).sum::<f64>() / n,
            )
        })
        .collect();
    let explained: f64 = per_hyperparameter.iter().map(|(_, v)| v).sum();
    Ok(ImportanceReport {
        budget_value,
        per_hyperparameter,
        residual: 1.0 - explained,
    })
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Long-format rows `hyperparameter,dataset,importance`.
pub fn per_dataset_csv(reports: &BTreeMap<String, ImportanceReport>) -> String {
    let mut out = String::from("hyperparameter,dataset,importance\n");
    for (dataset, r) in reports {
        for (name, v) in &r.per_hyperparameter {
            writeln!(out, "{name},{dataset},{v}").expect("string write");
        }
        writeln!(out, "residual,{dataset},{}", r.residual).expect("string write");
    }
    out
}

/// One row per hyperparameter: quartiles of its importance across datasets.
pub fn pooled_csv(reports: &BTreeMap<String, ImportanceReport>) -> String {
    let mut out = String::from("hyperparameter,datasets,q1,median,q3,iqr\n");
    let Some(first) = reports.values().next() else {
        return out;
    };
    for (name, _) in &first.per_hyperparameter {
        let mut v: Vec<f64> = reports.values().filter_map(|r| r.get(name)).collect();
        v.sort_by(f64::total_cmp);
        let (q1, q2, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
        writeln!(out, "{name},{},{q1},{q2},{q3},{}", v.len(), q3 - q1).expect("string write");
    }
    out
}
