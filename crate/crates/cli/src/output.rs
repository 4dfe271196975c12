//! Artifact writers. Every file goes through a temporary sibling and a
//! rename, so readers never see a partial artifact.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use tsforge::dataset::TimeSeriesDataset;

pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Long format `series_id,step,value`, steps counted from 1.
pub fn forecasts_csv(dataset: &TimeSeriesDataset, forecasts: &[Vec<f64>]) -> String {
    let mut out = String::from("series_id,step,value\n");
    for (s, path) in dataset.series.iter().zip(forecasts) {
        for (h, v) in path.iter().enumerate() {
            writeln!(out, "{},{},{v}", s.id, h + 1).expect("string write");
        }
    }
    out
}

/// `wall_clock,incumbent_loss` rows.
pub fn trajectory_csv(trajectory: &[(f64, f64)]) -> String {
    let mut out = String::from("wall_clock,incumbent_loss\n");
    for (t, l) in trajectory {
        writeln!(out, "{t},{l}").expect("string write");
    }
    out
}
