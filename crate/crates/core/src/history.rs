//! Run records and the append-only JSON-lines history.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::configspace::{Configuration, Value};
use crate::fidelity::BudgetType;

#[derive(Debug, Error)]
pub enum HistoryError {
    #[error("corrupt record at line {line}: {reason}")]
    CorruptRecord { line: usize, reason: String },
    #[error("history i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalStatus {
    Ok,
    Failed,
    Timeout,
}

impl fmt::Display for EvalStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalStatus::Ok => "ok",
            EvalStatus::Failed => "failed",
            EvalStatus::Timeout => "timeout",
        })
    }
}

/// One pipeline evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_id: u64,
    pub config: BTreeMap<String, Value>,
    pub space_hash: String,
    pub budget_type: BudgetType,
    pub budget_value: f64,
    /// Finite for every status; failed and timed-out runs carry the penalty.
    pub val_loss: f64,
    pub train_seconds: f64,
    pub eval_seconds: f64,
    pub status: EvalStatus,
    /// Completion time, seconds since the optimization started.
    pub wall_clock: f64,
    pub seed: u64,
}

impl RunRecord {
    pub fn configuration(&self) -> Configuration {
        Configuration {
            values: self.config.clone(),
            space_hash: self.space_hash.clone(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == EvalStatus::Ok
    }

    pub fn is_full_fidelity(&self) -> bool {
        self.budget_value >= 1.0
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("run records serialize")
    }
}

/// Appends one record as a line and flushes.
pub fn append_record(path: impl AsRef<Path>, record: &RunRecord) -> Result<(), HistoryError> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut line = record.to_json_line();
    line.push('\n');
    f.write_all(line.as_bytes())?;
    f.flush()?;
    Ok(())
}

/// Parses a history. A final line without its newline that fails to parse
/// is a write cut short by a crash: it is dropped with a warning. Records
/// from another space are rejected when `space_hash` is given.
pub fn parse_history(text: &str, space_hash: Option<&str>) -> Result<Vec<RunRecord>, HistoryError> {
    let mut out = Vec::new();
    let lines: Vec<&str> = text.split('\n').collect();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let last_unterminated = i == lines.len() - 1;
        match serde_json::from_str::<RunRecord>(line) {
            Ok(r) => {
                if let Some(h) = space_hash {
                    if r.space_hash != h {
                        return Err(HistoryError::CorruptRecord {
                            line: i + 1,
                            reason: format!("space hash {} does not match {h}", r.space_hash),
                        });
                    }
                }
                out.push(r);
            }
            Err(e) if last_unterminated => {
                log::warn!("dropping truncated history line {}: {e}", i + 1);
            }
            Err(e) => {
                return Err(HistoryError::CorruptRecord {
                    line: i + 1,
                    reason: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

pub fn load_history(
    path: impl AsRef<Path>,
    space_hash: Option<&str>,
) -> Result<Vec<RunRecord>, HistoryError> {
    parse_history(&std::fs::read_to_string(path)?, space_hash)
}

/// `(wall_clock, val_loss)` of successful full-fidelity runs in completion order.
pub fn full_fidelity_curve(records: &[RunRecord]) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.is_ok() && r.is_full_fidelity())
        .map(|r| (r.wall_clock, r.val_loss))
        .collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}
