//! Multi-series forecasting datasets: loading, validation, and the
//! train/validation/test tail split.
//!
//! A dataset holds `N` univariate-target series sharing one forecasting
//! horizon `H`. The last `H` points of every series are the test tail and
//! the `H` points before them are the validation tail; everything earlier is
//! training data.

use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing directive @{0}")]
    MissingDirective(&'static str),
    #[error("malformed line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("dataset contains no series")]
    EmptyDataset,
    #[error("series {0} has no observed values")]
    AllMissingSeries(String),
    #[error("series too short for a {horizon}-step split (need {needed} points): {ids:?}")]
    SeriesTooShort {
        ids: Vec<String>,
        horizon: usize,
        needed: usize,
    },
    #[error("invalid series {id}: {reason}")]
    InvalidSeries { id: String, reason: String },
    #[error("invalid frequency token '{0}'")]
    InvalidFrequency(String),
}

/// Sampling frequency of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frequency {
    Yearly,
    Quarterly,
    Monthly,
    Weekly,
    Daily,
    Hourly,
    Other(usize),
}

impl Frequency {
    /// Candidate seasonal periods, ascending.
    pub fn seasonality(self) -> Vec<usize> {
        match self {
            Frequency::Yearly => vec![1],
            Frequency::Quarterly => vec![4],
            Frequency::Monthly => vec![12],
            Frequency::Weekly => vec![52],
            Frequency::Daily => vec![7, 365],
            Frequency::Hourly => vec![24, 168],
            Frequency::Other(k) => vec![k.max(1)],
        }
    }

    /// Seasonal period used for MASE scaling (first candidate).
    pub fn mase_period(self) -> usize {
        self.seasonality()[0]
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Frequency::Yearly => f.write_str("yearly"),
            Frequency::Quarterly => f.write_str("quarterly"),
            Frequency::Monthly => f.write_str("monthly"),
            Frequency::Weekly => f.write_str("weekly"),
            Frequency::Daily => f.write_str("daily"),
            Frequency::Hourly => f.write_str("hourly"),
            Frequency::Other(k) => write!(f, "other:{k}"),
        }
    }
}

impl FromStr for Frequency {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let token = s.trim().to_ascii_lowercase();
        let freq = match token.as_str() {
            "yearly" => Frequency::Yearly,
            "quarterly" => Frequency::Quarterly,
            "monthly" => Frequency::Monthly,
            "weekly" => Frequency::Weekly,
            "daily" => Frequency::Daily,
            "hourly" => Frequency::Hourly,
            "half_hourly" => Frequency::Other(48),
            "10_minutes" => Frequency::Other(144),
            other => {
                let inner = other
                    .strip_prefix("other:")
                    .or_else(|| {
                        other
                            .strip_prefix("other(")
                            .and_then(|r| r.strip_suffix(')'))
                    })
                    .unwrap_or(other);
                match inner.parse::<usize>() {
                    Ok(k) if k >= 1 => Frequency::Other(k),
                    _ => return Err(DatasetError::InvalidFrequency(s.to_string())),
                }
            }
        };
        Ok(freq)
    }
}

/// Candidate seasonal periods for a frequency.
pub fn seasonality_for_frequency(frequency: Frequency) -> Vec<usize> {
    frequency.seasonality()
}

/// One series: targets plus optional covariate matrices (rows aligned with targets).
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub id: String,
    pub targets: Vec<f64>,
    pub past_covariates: Option<Array2<f64>>,
    pub future_covariates: Option<Array2<f64>>,
    pub start_index: i64,
}

impl Series {
    pub fn new(id: impl Into<String>, targets: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            targets,
            past_covariates: None,
            future_covariates: None,
            start_index: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn past_dim(&self) -> usize {
        self.past_covariates.as_ref().map_or(0, |m| m.ncols())
    }

    pub fn future_dim(&self) -> usize {
        self.future_covariates.as_ref().map_or(0, |m| m.ncols())
    }

    fn validate(&self) -> Result<(), DatasetError> {
        let bad = |reason: String| DatasetError::InvalidSeries {
            id: self.id.clone(),
            reason,
        };
        if let Some(i) = self.targets.iter().position(|v| !v.is_finite()) {
            return Err(bad(format!("non-finite target at index {i}")));
        }
        for (name, cov) in [
            ("past", &self.past_covariates),
            ("future", &self.future_covariates),
        ] {
            if let Some(m) = cov {
                if m.nrows() != self.targets.len() {
                    return Err(bad(format!(
                        "{name} covariates have {} rows, expected {}",
                        m.nrows(),
                        self.targets.len()
                    )));
                }
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(bad(format!("non-finite {name} covariate")));
                }
            }
        }
        Ok(())
    }
}

/// A collection of series sharing frequency and horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    pub name: String,
    pub series: Vec<Series>,
    pub frequency: Frequency,
    pub horizon: usize,
}

impl TimeSeriesDataset {
    /// Builds a dataset, checking the shared invariants.
    pub fn new(
        name: impl Into<String>,
        series: Vec<Series>,
        frequency: Frequency,
        horizon: usize,
    ) -> Result<Self, DatasetError> {
        if series.is_empty() {
            return Err(DatasetError::EmptyDataset);
        }
        if horizon == 0 {
            return Err(DatasetError::MalformedLine {
                line: 0,
                reason: "horizon must be positive".into(),
            });
        }
        let p = series[0].past_dim();
        let f = series[0].future_dim();
        for s in &series {
            s.validate()?;
            if s.past_dim() != p || s.future_dim() != f {
                return Err(DatasetError::InvalidSeries {
                    id: s.id.clone(),
                    reason: "covariate dimensions differ across series".into(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            series,
            frequency,
            horizon,
        })
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn past_dim(&self) -> usize {
        self.series.first().map_or(0, Series::past_dim)
    }

    pub fn future_dim(&self) -> usize {
        self.series.first().map_or(0, Series::future_dim)
    }

    /// Serializes to the TSF-subset text format (covariates are not written).
    pub fn to_tsf_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# {}\n", self.name));
        out.push_str(&format!("@frequency {}\n", self.frequency));
        out.push_str(&format!("@horizon {}\n", self.horizon));
        out.push_str("@missing ?\n@data\n");
        for s in &self.series {
            out.push_str(&s.id);
            out.push(':');
            let vals: Vec<String> = s.targets.iter().map(|v| format!("{v}")).collect();
            out.push_str(&vals.join(","));
            out.push('\n');
        }
        out
    }
}

/// Per-series index ranges for train, validation and test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeriesRanges {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitView {
    pub horizon: usize,
    pub ranges: Vec<SeriesRanges>,
}

impl SplitView {
    /// Two-way split: `train = [0, L-h)`, `val = [L-h, L)`, empty test.
    ///
    /// Used for refitting on train ∪ val (the "val" role is then the test
    /// tail) and for budget-transformed views that carry no test tail.
    pub fn train_val(dataset: &TimeSeriesDataset, horizon: usize) -> Result<Self, DatasetError> {
        let needed = horizon + 1;
        let short: Vec<String> = dataset
            .series
            .iter()
            .filter(|s| s.len() < needed)
            .map(|s| s.id.clone())
            .collect();
        if !short.is_empty() {
            return Err(DatasetError::SeriesTooShort {
                ids: short,
                horizon,
                needed,
            });
        }
        let ranges = dataset
            .series
            .iter()
            .map(|s| {
                let l = s.len();
                SeriesRanges {
                    train: 0..l - horizon,
                    val: l - horizon..l,
                    test: l..l,
                }
            })
            .collect();
        Ok(Self { horizon, ranges })
    }

    pub fn train_len(&self, series: usize) -> usize {
        self.ranges[series].train.len()
    }
}

/// Reserves the last `H` points of each series as test and the `H` before as validation.
pub fn split(dataset: &TimeSeriesDataset) -> Result<SplitView, DatasetError> {
    let h = dataset.horizon;
    let needed = 2 * h + 1;
    let short: Vec<String> = dataset
        .series
        .iter()
        .filter(|s| s.len() < needed)
        .map(|s| s.id.clone())
        .collect();
    if !short.is_empty() {
        return Err(DatasetError::SeriesTooShort {
            ids: short,
            horizon: h,
            needed,
        });
    }
    let ranges = dataset
        .series
        .iter()
        .map(|s| {
            let l = s.len();
            SeriesRanges {
                train: 0..l - 2 * h,
                val: l - 2 * h..l - h,
                test: l - h..l,
            }
        })
        .collect();
    Ok(SplitView { horizon: h, ranges })
}

/// Smallest seasonal period `S >= H`, else the largest period.
pub fn base_window_size(frequency: Frequency, horizon: usize) -> usize {
    let periods = frequency.seasonality();
    periods
        .iter()
        .copied()
        .find(|&s| s >= horizon)
        .unwrap_or_else(|| periods.iter().copied().max().unwrap_or(1))
}

fn read_text(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parses a TSF-subset file (see [`parse_tsf`]).
pub fn load_tsf_subset(path: impl AsRef<Path>) -> Result<TimeSeriesDataset, DatasetError> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    parse_tsf(&text, &name)
}

/// Parses TSF-subset text: `#` comments, `@frequency`, `@horizon`,
/// optional `@missing`, then `@data` followed by `id:v1,v2,...` lines.
pub fn parse_tsf(text: &str, name: &str) -> Result<TimeSeriesDataset, DatasetError> {
    let mut frequency: Option<Frequency> = None;
    let mut horizon: Option<usize> = None;
    let mut missing_token = "?".to_string();
    let mut in_data = false;
    let mut series = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !in_data {
            let Some(directive) = line.strip_prefix('@') else {
                return Err(DatasetError::MalformedLine {
                    line: line_no,
                    reason: "expected a directive before @data".into(),
                });
            };
            let mut parts = directive.splitn(2, char::is_whitespace);
            let key = parts.next().unwrap_or("").to_ascii_lowercase();
            let value = parts.next().unwrap_or("").trim();
            match key.as_str() {
                "frequency" => {
                    frequency = Some(value.parse().map_err(|_| DatasetError::MalformedLine {
                        line: line_no,
                        reason: format!("unknown frequency '{value}'"),
                    })?)
                }
                "horizon" => {
                    let h = value
                        .parse::<usize>()
                        .ok()
                        .filter(|&h| h > 0)
                        .ok_or_else(|| DatasetError::MalformedLine {
                            line: line_no,
                            reason: format!("horizon must be a positive integer, got '{value}'"),
                        })?;
                    horizon = Some(h);
                }
                "missing" => {
                    if !value.is_empty() && value != "true" && value != "false" {
                        missing_token = value.to_string();
                    }
                }
                "data" => {
                    if frequency.is_none() {
                        return Err(DatasetError::MissingDirective("frequency"));
                    }
                    if horizon.is_none() {
                        return Err(DatasetError::MissingDirective("horizon"));
                    }
                    in_data = true;
                }
                // other Monash directives (@relation, @attribute, ...) carry nothing we use
                _ => {}
            }
            continue;
        }
        series.push(parse_data_line(line, line_no, &missing_token)?);
    }

    let frequency = frequency.ok_or(DatasetError::MissingDirective("frequency"))?;
    let horizon = horizon.ok_or(DatasetError::MissingDirective("horizon"))?;
    if !in_data {
        return Err(DatasetError::MissingDirective("data"));
    }
    TimeSeriesDataset::new(name, series, frequency, horizon)
}

fn parse_data_line(line: &str, line_no: usize, missing: &str) -> Result<Series, DatasetError> {
    let (id, values) = match (line.find(':'), line.rfind(':')) {
        (Some(first), Some(last)) => (&line[..first], &line[last + 1..]),
        _ => {
            return Err(DatasetError::MalformedLine {
                line: line_no,
                reason: "expected 'id:v1,v2,...'".into(),
            })
        }
    };
    let id = id.trim();
    if id.is_empty() {
        return Err(DatasetError::MalformedLine {
            line: line_no,
            reason: "empty series id".into(),
        });
    }
    let mut raw: Vec<Option<f64>> = Vec::new();
    for tok in values.split(',') {
        let tok = tok.trim();
        if tok == missing || tok == "?" {
            raw.push(None);
            continue;
        }
        let v: f64 = tok.parse().map_err(|_| DatasetError::MalformedLine {
            line: line_no,
            reason: format!("invalid value '{tok}'"),
        })?;
        if !v.is_finite() {
            return Err(DatasetError::MalformedLine {
                line: line_no,
                reason: format!("non-finite value '{tok}'"),
            });
        }
        raw.push(Some(v));
    }
    let targets =
        impute_locf(&raw).ok_or_else(|| DatasetError::AllMissingSeries(id.to_string()))?;
    Ok(Series::new(id, targets))
}

/// Last-observation-carried-forward; leading gaps take the first observed value.
pub fn impute_locf(raw: &[Option<f64>]) -> Option<Vec<f64>> {
    let first = raw.iter().flatten().copied().next()?;
    let mut last = first;
    Some(
        raw.iter()
            .map(|v| {
                if let Some(v) = v {
                    last = *v;
                }
                last
            })
            .collect(),
    )
}

/// Loads long-format `series_id,value` rows, grouping by id in order of first appearance.
pub fn load_csv(
    path: impl AsRef<Path>,
    horizon: usize,
    frequency: Frequency,
) -> Result<TimeSeriesDataset, DatasetError> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    parse_csv(&text, &name, horizon, frequency)
}

pub fn parse_csv(
    text: &str,
    name: &str,
    horizon: usize,
    frequency: Frequency,
) -> Result<TimeSeriesDataset, DatasetError> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: std::collections::HashMap<String, Vec<f64>> = Default::default();
    for (idx, raw) in text.lines().enumerate() {
        let row = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split(',');
        let (Some(id), Some(value), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(DatasetError::MalformedRow {
                row,
                reason: "expected two columns".into(),
            });
        };
        let id = id.trim();
        let value = value.trim();
        if row == 1 && id == "series_id" {
            continue;
        }
        let v: f64 = value
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| DatasetError::MalformedRow {
                row,
                reason: format!("invalid value '{value}'"),
            })?;
        if id.is_empty() {
            return Err(DatasetError::MalformedRow {
                row,
                reason: "empty series id".into(),
            });
        }
        groups
            .entry(id.to_string())
            .or_insert_with(|| {
                order.push(id.to_string());
                Vec::new()
            })
            .push(v);
    }
    if order.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    let series = order
        .into_iter()
        .map(|id| {
            let targets = groups.remove(&id).unwrap_or_default();
            Series::new(id, targets)
        })
        .collect();
    TimeSeriesDataset::new(name, series, frequency, horizon)
}

/// Loads by extension: `.csv` needs an explicit horizon and frequency, anything else is TSF.
pub fn load_dataset(
    path: impl AsRef<Path>,
    csv_horizon: Option<usize>,
    csv_frequency: Option<Frequency>,
) -> Result<TimeSeriesDataset, DatasetError> {
    let path = path.as_ref();
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let h = csv_horizon.ok_or(DatasetError::MissingDirective("horizon"))?;
        let f = csv_frequency.ok_or(DatasetError::MissingDirective("frequency"))?;
        load_csv(path, h, f)
    } else {
        load_tsf_subset(path)
    }
}
