use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::svg::{line_chart, Series};
use super::{ExperimentFailure, ExperimentResult, ExperimentRun};
use crate::error::{KinnError, Result};

pub const RESULTS_SCHEMA_VERSION: u32 = 1;

/// Contents of `results.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub schema_version: u32,
    pub results: Vec<ExperimentResult>,
    pub failures: Vec<ExperimentFailure>,
}

const CSV_HEADER: [&str; 6] = ["experiment", "description", "train_data_percent", "mse_nn", "mse_expert", "mse_kinn"];

fn percent(fraction: f64) -> String {
    let p = fraction * 100.0;
    if (p - p.round()).abs() < 1e-9 {
        format!("{}", p.round())
    } else {
        format!("{p}")
    }
}

/// Writes `results.csv`, `results.json` and one `predictions-<label>.csv`
/// per result into `dir`. Returns the written paths.
pub fn write_results(dir: impl AsRef<Path>, run: &ExperimentRun) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| KinnError::io(dir, e))?;
    let mut written = Vec::new();

    let csv_path = dir.join("results.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(CSV_HEADER)?;
    for r in &run.results {
        w.write_record([
            r.label.clone(),
            r.description.clone(),
            percent(r.data_fraction),
            r.mse_nn.to_string(),
            r.mse_expert.to_string(),
            r.mse_kinn.to_string(),
        ])?;
    }
    w.flush().map_err(|e| KinnError::io(&csv_path, e))?;
    written.push(csv_path);

    let json_path = dir.join("results.json");
    let file = ResultsFile {
        schema_version: RESULTS_SCHEMA_VERSION,
        results: run.results.clone(),
        failures: run.failures.clone(),
    };
    let text = serde_json::to_string_pretty(&file)?;
    fs::write(&json_path, text + "\n").map_err(|e| KinnError::io(&json_path, e))?;
    written.push(json_path);

    for r in &run.results {
        written.push(write_predictions(dir, r)?);
    }
    Ok(written)
}

/// `predictions-<label>.csv` with columns `t, truth, nn, expert, kinn`,
/// where `t` is the index into the full series.
pub fn write_predictions(dir: &Path, r: &ExperimentResult) -> Result<PathBuf> {
    let path = dir.join(format!("predictions-{}.csv", r.label));
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["t", "truth", "nn", "expert", "kinn"])?;
    for (i, t) in r.test_indices.iter().enumerate() {
        w.write_record([
            t.to_string(),
            r.truth[i].to_string(),
            r.nn.predictions[i].to_string(),
            r.expert.predictions[i].to_string(),
            r.kinn.predictions[i].to_string(),
        ])?;
    }
    w.flush().map_err(|e| KinnError::io(&path, e))?;
    Ok(path)
}

/// Reads `results.json` from `dir`.
pub fn read_results(dir: impl AsRef<Path>) -> Result<ResultsFile> {
    let path = dir.as_ref().join("results.json");
    if !path.exists() {
        return Err(KinnError::EmptyInput(format!("no results.json in {}", dir.as_ref().display())));
    }
    let text = fs::read_to_string(&path).map_err(|e| KinnError::io(&path, e))?;
    let file: ResultsFile = serde_json::from_str(&text)?;
    if file.schema_version != RESULTS_SCHEMA_VERSION {
        return Err(KinnError::VersionMismatch {
            found: file.schema_version,
            expected: RESULTS_SCHEMA_VERSION,
        });
    }
    Ok(file)
}

/// Writes `predictions-<label>.svg` and `errors-<label>.svg` for every
/// result.
pub fn render_plots(dir: impl AsRef<Path>, results: &[ExperimentResult]) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| KinnError::io(dir, e))?;
    let mut written = Vec::new();
    for r in results {
        let x: Vec<f64> = r.test_indices.iter().map(|&t| t as f64).collect();
        let preds = line_chart(
            &format!("Experiment {}: {}", r.label, r.description),
            "time step",
            "value",
            &x,
            &[
                Series::new("truth", "#000000", r.truth.clone()),
                Series::new("nn", "#1f77b4", r.nn.predictions.clone()),
                Series::new("expert", "#2ca02c", r.expert.predictions.clone()),
                Series::new("kinn", "#d62728", r.kinn.predictions.clone()),
            ],
        );
        let errors = line_chart(
            &format!("Experiment {}: absolute error per step", r.label),
            "time step",
            "|error|",
            &x,
            &[
                Series::new("nn", "#1f77b4", r.nn.errors.clone()),
                Series::new("expert", "#2ca02c", r.expert.errors.clone()),
                Series::new("kinn", "#d62728", r.kinn.errors.clone()),
            ],
        );
        for (name, body) in [("predictions", preds), ("errors", errors)] {
            let path = dir.join(format!("{name}-{}.svg", r.label));
            fs::write(&path, body).map_err(|e| KinnError::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Plain-text table with the same columns as `results.csv`, followed by
/// the step-wise diagnostics and any failures.
pub fn summary_table(file: &ResultsFile) -> String {
    let mut out = format!(
        "{:<10} {:<48} {:>18} {:>10} {:>10} {:>10}\n",
        CSV_HEADER[0], CSV_HEADER[1], CSV_HEADER[2], CSV_HEADER[3], CSV_HEADER[4], CSV_HEADER[5]
    );
    for r in &file.results {
        out += &format!(
            "{:<10} {:<48} {:>18} {:>10.4} {:>10.4} {:>10.4}\n",
            r.label,
            r.description,
            percent(r.data_fraction),
            r.mse_nn,
            r.mse_expert,
            r.mse_kinn
        );
    }
    out += "\nstep-wise (kinn error > comparator / |difference| < threshold), epochs to best\n";
    for r in &file.results {
        out += &format!(
            "{:<10} vs expert {:.3} / {:.3}   vs nn {:.3} / {:.3}   epochs nn {} kinn {}\n",
            r.label,
            r.exceed_vs_expert.exceed,
            r.exceed_vs_expert.near_tie,
            r.exceed_vs_nn.exceed,
            r.exceed_vs_nn.near_tie,
            r.epochs_to_best_nn,
            r.epochs_to_best_kinn
        );
    }
    for f in &file.failures {
        out += &format!("FAILED {}: {}\n", f.label, f.error);
    }
    out
}
