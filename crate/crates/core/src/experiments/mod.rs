//! The five comparison regimes: full data, reduced data, noisy expert,
//! reduced data with a noisy expert, and degenerate (zero or lagged)
//! experts. Each regime trains a plain network, fits or builds an expert,
//! trains the residual model on top of it and scores all three on the same
//! untouched test split.

mod report;
mod stepwise;
mod svg;
mod synthetic;

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{KinnError, Result};
use crate::expert::{fit_sarima, seasonal_naive, Decoration, Expert, ExpertModel, FitOptions, NoiseDistribution, SarimaConfig, SarimaModel};
use crate::kinn::{kinn_predict, kinn_train, nn_predict, nn_train, ConditioningMode};
use crate::nn::{NetworkConfig, TrainOptions, TrainReport};
use crate::timeseries::{population_std, SplitBounds, SplitSpec, TimeSeries};

pub use report::{
    read_results, render_plots, summary_table, write_predictions, write_results, ResultsFile, RESULTS_SCHEMA_VERSION,
};
pub use stepwise::{absolute_errors, mse, stepwise_analysis, StepwiseComparison, NEAR_TIE_THRESHOLD};
pub use svg::{line_chart, Series};
pub use synthetic::{generate_synthetic, SyntheticSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpertKind {
    /// SARIMA fitted on the (possibly truncated) training split.
    Fitted,
    /// The fitted expert plus seeded noise.
    Noisy,
    /// Predicts zero everywhere.
    Zero,
    /// Returns the previous observation.
    Lagged,
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub id: u8,
    /// Row label, unique across the table (`"2a"`, `"5b"`, ...).
    pub label: String,
    pub description: String,
    /// Share of the training split kept, counted from its end.
    pub data_fraction: f64,
    pub expert_kind: ExpertKind,
}

/// MSE values reported for the original traffic data, kept for
/// comparison in summaries. They are not targets for the synthetic runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMse {
    pub nn: f64,
    pub expert: f64,
    pub kinn: f64,
}

fn row(id: u8, label: &str, description: &str, data_fraction: f64, expert_kind: ExpertKind) -> ExperimentSpec {
    ExperimentSpec {
        id,
        label: label.into(),
        description: description.into(),
        data_fraction,
        expert_kind,
    }
}

/// All seven rows in table order.
pub fn table_rows() -> Vec<ExperimentSpec> {
    table_rows_with(0.5, 0.1)
}

/// The seven rows with custom reduced-data fractions: `reduced` for row
/// 2a, `small` for rows 2b and 4.
pub fn table_rows_with(reduced: f64, small: f64) -> Vec<ExperimentSpec> {
    use ExpertKind::*;
    let pct = |f: f64| format!("{}", (f * 1000.0).round() / 10.0);
    vec![
        row(1, "1", "Full training set and accurate expert", 1.0, Fitted),
        row(
            2,
            "2a",
            &format!("Reduced training set ({}%) and accurate expert", pct(reduced)),
            reduced,
            Fitted,
        ),
        row(
            2,
            "2b",
            &format!("Reduced training set ({}%) and accurate expert", pct(small)),
            small,
            Fitted,
        ),
        row(3, "3", "Full training set and noisy expert", 1.0, Noisy),
        row(4, "4", "Reduced training set and noisy expert", small, Noisy),
        row(5, "5a", "Full training set and Zero expert pred.", 1.0, Zero),
        row(5, "5b", "Full training set and Delayed expert pred.", 1.0, Lagged),
    ]
}

/// Rows belonging to experiment `id`.
pub fn specs_for_id(id: u8) -> Result<Vec<ExperimentSpec>> {
    let rows: Vec<_> = table_rows().into_iter().filter(|r| r.id == id).collect();
    if rows.is_empty() {
        return Err(KinnError::InvalidConfig(format!("experiment id {id} is not in 1..=5")));
    }
    Ok(rows)
}

pub fn reference_mse(label: &str) -> Option<ReferenceMse> {
    let (nn, expert, kinn) = match label {
        "1" => (5.90, 1.24, 0.74),
        "2a" => (6.36, 1.52, 0.89),
        "2b" => (6.68, 2.67, 1.53),
        "3" => (5.90, 7.81, 3.09),
        "4" => (6.68, 7.81, 3.73),
        "5a" => (5.90, 621.00, 5.92),
        "5b" => (5.90, 9.04, 5.91),
        _ => return None,
    };
    Some(ReferenceMse { nn, expert, kinn })
}

/// Noise added to the expert in the noisy regimes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSettings {
    pub seed: u64,
    pub distribution: NoiseDistribution,
    /// Fixed amplitude; `None` uses the standard deviation of the training
    /// data actually used.
    pub amplitude: Option<f64>,
}

impl Default for NoiseSettings {
    fn default() -> Self {
        Self {
            seed: 7,
            distribution: NoiseDistribution::Uniform,
            amplitude: None,
        }
    }
}

/// Everything a regime needs besides the series itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSettings {
    pub split: SplitSpec,
    pub sarima: SarimaConfig,
    pub fit: FitOptions,
    pub noise: NoiseSettings,
    pub lag: usize,
    pub network: NetworkConfig,
    pub train: TrainOptions,
    pub window: usize,
    pub mode: ConditioningMode,
    pub near_tie_threshold: f64,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            split: SplitSpec::default(),
            sarima: SarimaConfig::default(),
            fit: FitOptions::default(),
            noise: NoiseSettings::default(),
            lag: 1,
            network: NetworkConfig::default(),
            train: TrainOptions::default(),
            window: 3,
            mode: ConditioningMode::default(),
            near_tie_threshold: NEAR_TIE_THRESHOLD,
        }
    }
}

impl ExperimentSettings {
    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        self.network.validate()?;
        self.train.validate()?;
        if self.window == 0 {
            return Err(KinnError::InvalidConfig("window size must be positive".into()));
        }
        if self.lag == 0 {
            return Err(KinnError::InvalidConfig("lag must be >= 1".into()));
        }
        if let Some(a) = self.noise.amplitude {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(KinnError::InvalidConfig(format!("noise amplitude {a}")));
            }
        }
        if !(self.near_tie_threshold >= 0.0) {
            return Err(KinnError::InvalidConfig("near-tie threshold must be >= 0".into()));
        }
        Ok(())
    }
}

/// Training range kept when using `fraction` of `train`: the most recent
/// `round(fraction * len)` samples, at least one.
pub fn truncate_train(train: &Range<usize>, fraction: f64) -> Result<Range<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(KinnError::InvalidConfig(format!("data fraction {fraction} not in (0, 1]")));
    }
    let keep = ((train.len() as f64 * fraction).round() as usize).clamp(1, train.len());
    Ok(train.end - keep..train.end)
}

/// Test-set predictions and their absolute errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTrace {
    pub predictions: Vec<f64>,
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub id: u8,
    pub label: String,
    pub description: String,
    pub data_fraction: f64,
    pub expert_kind: ExpertKind,
    pub train_range: [usize; 2],
    pub mse_nn: f64,
    pub mse_expert: f64,
    pub mse_kinn: f64,
    pub exceed_vs_expert: StepwiseComparison,
    pub exceed_vs_nn: StepwiseComparison,
    pub epochs_to_best_nn: usize,
    pub epochs_to_best_kinn: usize,
    pub nn_report: TrainReport,
    pub kinn_report: TrainReport,
    /// Fitted SARIMA underlying the Fitted and Noisy regimes.
    pub sarima: Option<SarimaModel>,
    pub test_indices: Vec<usize>,
    pub truth: Vec<f64>,
    pub nn: ModelTrace,
    pub expert: ModelTrace,
    pub kinn: ModelTrace,
    pub reference: Option<ReferenceMse>,
}

/// A regime that failed, kept alongside the successful ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentFailure {
    pub label: String,
    pub error: String,
}

/// Plain-network run on one training range; shared by every regime using
/// the same data fraction.
#[derive(Debug, Clone)]
pub struct BaselineRun {
    pub train_range: Range<usize>,
    pub predictions: Vec<f64>,
    pub report: TrainReport,
}

pub fn run_baseline(series: &TimeSeries, bounds: &SplitBounds, settings: &ExperimentSettings) -> Result<BaselineRun> {
    let (model, report) = nn_train(&series.values, bounds, &settings.network, &settings.train, settings.window)?;
    let predictions = nn_predict(&model, &series.values, bounds.test.clone())?;
    Ok(BaselineRun {
        train_range: bounds.train.clone(),
        predictions,
        report,
    })
}

fn trace(predictions: Vec<f64>, truth: &[f64]) -> ModelTrace {
    ModelTrace {
        errors: absolute_errors(&predictions, truth),
        predictions,
    }
}

/// Builds the regime's expert from the training range.
pub fn build_expert(
    series: &TimeSeries,
    train: Range<usize>,
    kind: ExpertKind,
    settings: &ExperimentSettings,
) -> Result<(ExpertModel, Option<SarimaModel>)> {
    match kind {
        ExpertKind::Fitted | ExpertKind::Noisy => {
            let values = &series.values[train];
            let fit = fit_sarima(values, settings.sarima, settings.fit)?;
            let sarima = fit.model;
            let expert = ExpertModel::Sarima(sarima.clone());
            if kind == ExpertKind::Fitted {
                return Ok((expert, Some(sarima)));
            }
            let amplitude = settings.noise.amplitude.unwrap_or_else(|| population_std(values));
            let noisy = expert.decorate(Decoration::Noisy {
                amplitude,
                seed: settings.noise.seed,
                distribution: settings.noise.distribution,
            })?;
            Ok((noisy, Some(sarima)))
        }
        // The degenerate experts ignore the wrapped model entirely.
        ExpertKind::Zero => Ok((ExpertModel::SeasonalNaive(seasonal_naive(1)?).decorate(Decoration::Zero)?, None)),
        ExpertKind::Lagged => {
            let lagged = ExpertModel::SeasonalNaive(seasonal_naive(1)?).decorate(Decoration::Lagged { lag: settings.lag })?;
            Ok((lagged, None))
        }
    }
}

/// Runs one regime. `baseline` may carry a plain-network run for the same
/// training range; otherwise one is trained.
pub fn run_experiment(
    series: &TimeSeries,
    spec: &ExperimentSpec,
    settings: &ExperimentSettings,
    baseline: Option<&BaselineRun>,
) -> Result<ExperimentResult> {
    settings.validate()?;
    let full = settings.split.bounds(series.len())?;
    let bounds = SplitBounds {
        train: truncate_train(&full.train, spec.data_fraction)?,
        ..full
    };
    let test = bounds.test.clone();
    let truth = series.values[test.clone()].to_vec();

    let owned;
    let baseline = match baseline {
        Some(b) if b.train_range == bounds.train => b,
        _ => {
            owned = run_baseline(series, &bounds, settings)?;
            &owned
        }
    };

    let (expert, sarima) = build_expert(series, bounds.train.clone(), spec.expert_kind, settings)?;
    let expert_preds = expert.rolling(&series.values, test.clone())?;
    let (model, kinn_report) = kinn_train(
        &series.values,
        &bounds,
        expert,
        settings.mode,
        &settings.network,
        &settings.train,
        settings.window,
    )?;
    let kinn_preds = kinn_predict(&model, &series.values, test.clone())?;

    let nn = trace(baseline.predictions.clone(), &truth);
    let expert = trace(expert_preds, &truth);
    let kinn = trace(kinn_preds, &truth);
    Ok(ExperimentResult {
        id: spec.id,
        label: spec.label.clone(),
        description: spec.description.clone(),
        data_fraction: spec.data_fraction,
        expert_kind: spec.expert_kind,
        train_range: [bounds.train.start, bounds.train.end],
        mse_nn: mse(&nn.predictions, &truth)?,
        mse_expert: mse(&expert.predictions, &truth)?,
        mse_kinn: mse(&kinn.predictions, &truth)?,
        exceed_vs_expert: stepwise_analysis(&kinn.errors, &expert.errors, settings.near_tie_threshold)?,
        exceed_vs_nn: stepwise_analysis(&kinn.errors, &nn.errors, settings.near_tie_threshold)?,
        epochs_to_best_nn: baseline.report.best_epoch,
        epochs_to_best_kinn: kinn_report.best_epoch,
        nn_report: baseline.report.clone(),
        kinn_report,
        sarima,
        test_indices: test.collect(),
        truth,
        nn,
        expert,
        kinn,
        reference: reference_mse(&spec.label),
    })
}

/// Outcome of a batch of regimes. Failures do not stop the others.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRun {
    pub results: Vec<ExperimentResult>,
    pub failures: Vec<ExperimentFailure>,
}

/// Runs `specs` in order, training the plain network once per distinct
/// data fraction.
pub fn run_experiments(series: &TimeSeries, specs: &[ExperimentSpec], settings: &ExperimentSettings) -> ExperimentRun {
    let mut run = ExperimentRun::default();
    let mut baselines: BTreeMap<(usize, usize), BaselineRun> = BTreeMap::new();
    for spec in specs {
        let outcome = (|| {
            settings.validate()?;
            let full = settings.split.bounds(series.len())?;
            let train = truncate_train(&full.train, spec.data_fraction)?;
            let key = (train.start, train.end);
            if !baselines.contains_key(&key) {
                let bounds = SplitBounds { train, ..full };
                baselines.insert(key, run_baseline(series, &bounds, settings)?);
            }
            run_experiment(series, spec, settings, baselines.get(&key))
        })();
        match outcome {
            Ok(r) => run.results.push(r),
            Err(e) => run.failures.push(ExperimentFailure {
                label: spec.label.clone(),
                error: e.to_string(),
            }),
        }
    }
    run
}
