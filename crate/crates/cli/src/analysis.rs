//! `tsforge importance` and `tsforge report`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tsforge::configspace::default_space;
use tsforge::history::{full_fidelity_curve, load_history, RunRecord};
use tsforge::importance::{fanova, per_dataset_csv, pooled_csv, ImportanceReport};
use tsforge::metrics::{incumbent_auc, incumbent_trajectory, AucValues};

use crate::output::{trajectory_csv, write_atomic};
use crate::CliError;

fn load(path: &Path, space_hash: Option<&str>) -> Result<Vec<RunRecord>, CliError> {
    load_history(path, space_hash).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Name of the run a history belongs to: its directory for
/// `<run>/history.jsonl`, the file stem otherwise.
pub fn dataset_label(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    if path
        .file_name()
        .is_some_and(|n| n == crate::run::HISTORY_FILE)
    {
        if let Some(dir) = path.parent().and_then(Path::file_name) {
            return dir.to_string_lossy().into_owned();
        }
    }
    stem
}

/// Per-history reports keyed by unique labels.
pub fn importance_reports(
    histories: &[impl AsRef<Path>],
    rung: f64,
    trees: usize,
    seed: u64,
) -> Result<BTreeMap<String, ImportanceReport>, CliError> {
    let space = default_space();
    let mut reports = BTreeMap::new();
    for (i, path) in histories.iter().enumerate() {
        let path = path.as_ref();
        let records = load(path, Some(space.hash()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let report = fanova(&records, &space, rung, trees, &mut rng)
            .map_err(|e| CliError::Analysis(format!("{}: {e}", path.display())))?;
        let mut label = dataset_label(path);
        if reports.contains_key(&label) {
            label = format!("{label}#{}", i + 1);
        }
        reports.insert(label, report);
    }
    Ok(reports)
}

pub fn cmd_importance(
    histories: &[impl AsRef<Path>],
    out: &Path,
    rung: f64,
    trees: usize,
    seed: u64,
) -> Result<(), CliError> {
    let reports = importance_reports(histories, rung, trees, seed)?;
    std::fs::create_dir_all(out)?;
    write_atomic(
        &out.join("importance.csv"),
        per_dataset_csv(&reports).as_bytes(),
    )?;
    let pooled = pooled_csv(&reports);
    write_atomic(&out.join("importance_pooled.csv"), pooled.as_bytes())?;
    print!("{pooled}");
    eprintln!(
        "note: the importance of a conditional hyperparameter includes the effect of its activity"
    );
    Ok(())
}

/// Trajectory and AUC of one history over `[t_first, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub trajectory: Vec<(f64, f64)>,
    pub auc: AucValues,
    pub horizon: f64,
}

fn curve_of(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let curve = full_fidelity_curve(&load(path, None)?);
    if curve.is_empty() {
        return Err(CliError::Analysis(format!(
            "{}: no successful full-fidelity run",
            path.display()
        )));
    }
    Ok(curve)
}

fn report_of(curve: &[(f64, f64)], horizon: f64) -> Result<Report, CliError> {
    let auc = incumbent_auc(curve, horizon).map_err(|e| CliError::Analysis(e.to_string()))?;
    Ok(Report {
        trajectory: incumbent_trajectory(curve),
        auc,
        horizon,
    })
}

/// Reports of one or two histories. Without an explicit horizon both end at
/// the latest completion among them, so their AUCs cover the same window.
pub fn reports(
    history: &Path,
    compare: Option<&Path>,
    horizon: Option<f64>,
) -> Result<Vec<Report>, CliError> {
    let mut curves = vec![curve_of(history)?];
    if let Some(p) = compare {
        curves.push(curve_of(p)?);
    }
    let horizon = horizon.unwrap_or_else(|| {
        curves
            .iter()
            .filter_map(|c| c.last())
            .map(|p| p.0)
            .fold(f64::NEG_INFINITY, f64::max)
    });
    curves.iter().map(|c| report_of(c, horizon)).collect()
}

pub fn auc_table(names: &[String], reports: &[Report]) -> String {
    let mut out = String::from("history,t_first,horizon,auc_raw,auc_normalized\n");
    for (name, r) in names.iter().zip(reports) {
        writeln!(
            out,
            "{name},{},{},{},{}",
            r.auc.t_first, r.horizon, r.auc.raw, r.auc.normalized
        )
        .expect("string write");
    }
    out
}

pub fn cmd_report(
    history: &Path,
    compare: Option<&Path>,
    horizon: Option<f64>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let reports = reports(history, compare, horizon)?;
    let paths: Vec<&Path> = std::iter::once(history).chain(compare).collect();
    let names: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            for (i, r) in reports.iter().enumerate() {
                let file = if i == 0 {
                    "trajectory.csv"
                } else {
                    "trajectory_compare.csv"
                };
                write_atomic(&dir.join(file), trajectory_csv(&r.trajectory).as_bytes())?;
            }
        }
        None => {
            for (name, r) in names.iter().zip(&reports) {
                println!("# {name}");
                print!("{}", trajectory_csv(&r.trajectory));
                println!();
            }
        }
    }
    print!("{}", auc_table(&names, &reports));
    Ok(())
}
