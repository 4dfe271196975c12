//! `tsforge forecast`: reload a saved ensemble and forecast a dataset.

use std::fs;
use std::path::Path;

use tsforge::configspace::{default_space, Configuration};
use tsforge::dataset::{load_dataset, TimeSeriesDataset};
use tsforge::ensemble::{FittedEnsemble, FittedMember, Manifest, Member};
use tsforge::zoo::ModelState;

use crate::output::{forecasts_csv, write_atomic};
use crate::{CliError, CsvArgs};

/// Reads a manifest and its checkpoints, checking them against the current
/// space and the dataset's horizon.
pub fn load_ensemble(
    manifest_path: &Path,
    dataset: &TimeSeriesDataset,
) -> Result<FittedEnsemble, CliError> {
    let bad = |what: String| CliError::Data(format!("{}: {what}", manifest_path.display()));
    let text = fs::read_to_string(manifest_path).map_err(|e| bad(e.to_string()))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let space = default_space();
    if manifest.space_hash != space.hash() {
        return Err(bad(format!(
            "space hash {} does not match {}",
            manifest.space_hash,
            space.hash()
        )));
    }
    if manifest.horizon != dataset.horizon {
        return Err(bad(format!(
            "ensemble horizon {} but dataset horizon {}",
            manifest.horizon, dataset.horizon
        )));
    }
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut members = Vec::with_capacity(manifest.members.len());
    for m in &manifest.members {
        let values = manifest
            .configs
            .get(&m.config_id)
            .ok_or_else(|| bad(format!("no configuration for member {}", m.config_id)))?;
        let config = Configuration {
            values: values.clone(),
            space_hash: manifest.space_hash.clone(),
        };
        space.validate(&config).map_err(|e| bad(e.to_string()))?;
        let path = dir.join(&m.checkpoint);
        let state_text =
            fs::read_to_string(&path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        let state = ModelState::from_json(&state_text)
            .map_err(|e| bad(format!("{}: {e}", path.display())))?;
        members.push(FittedMember {
            member: Member {
                config_id: m.config_id,
                config,
                weight: m.weight,
            },
            seed: m.seed,
            state,
        });
    }
    Ok(FittedEnsemble {
        members,
        fallback_to_dummy: manifest.fallback_to_dummy,
    })
}

pub fn cmd_forecast(
    manifest: &Path,
    data: &Path,
    csv: &CsvArgs,
    out: &Path,
) -> Result<(), CliError> {
    let dataset = load_dataset(data, csv.horizon, csv.frequency)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let ensemble = load_ensemble(manifest, &dataset)?;
    let forecasts = ensemble
        .forecast(&dataset)
        .map_err(|e| CliError::Data(e.to_string()))?;
    write_atomic(out, forecasts_csv(&dataset, &forecasts).as_bytes())?;
    Ok(())
}
