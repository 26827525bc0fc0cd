//! Python bindings. Built as the `kinn` extension module.

use std::collections::HashMap;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use kinn_core::config::RunConfig;
use kinn_core::experiments::{self, SyntheticSpec};
use kinn_core::expert::{self as expert_mod, Expert, ExpertModel, FitOptions, SarimaConfig, SarimaModel};
use kinn_core::kinn::{self as kinn_mod, ConditioningMode, KinnModel, NeuralForecaster};
use kinn_core::nn::{NetworkConfig, TrainOptions, TrainReport};
use kinn_core::timeseries::{self, SplitSpec};
use kinn_core::{ErrorClass, KinnError};

fn to_py(e: KinnError) -> PyErr {
    let msg = e.to_string();
    match e.class() {
        ErrorClass::Usage => PyValueError::new_err(msg),
        ErrorClass::Computation => PyRuntimeError::new_err(msg),
        ErrorClass::Io => PyOSError::new_err(msg),
    }
}

type PyRes<T> = PyResult<T>;

fn wrap<T>(r: kinn_core::Result<T>) -> PyRes<T> {
    r.map_err(to_py)
}

/// Partial autocorrelations for lags `0..=max_lag`.
#[pyfunction]
fn pacf(values: Vec<f64>, max_lag: usize) -> PyRes<Vec<f64>> {
    wrap(timeseries::pacf_values(&values, max_lag))
}

/// Sample autocorrelations for lags `0..=max_lag`.
#[pyfunction]
fn acf(values: Vec<f64>, max_lag: usize) -> PyRes<Vec<f64>> {
    wrap(timeseries::acf(&values, max_lag))
}

#[pyfunction]
#[pyo3(signature = (ar, ma, n, noise_std=1.0, seed=0, intercept=0.0))]
fn simulate_arma(ar: Vec<f64>, ma: Vec<f64>, n: usize, noise_std: f64, seed: u64, intercept: f64) -> PyRes<Vec<f64>> {
    Ok(wrap(expert_mod::simulate_arma(&ar, &ma, intercept, n, noise_std, seed))?.values)
}

#[pyfunction]
#[pyo3(signature = (length=None, season=None, amplitude=None, ar=None, noise_std=None, peak_factor=None, seed=None))]
fn generate_synthetic(
    length: Option<usize>,
    season: Option<usize>,
    amplitude: Option<f64>,
    ar: Option<f64>,
    noise_std: Option<f64>,
    peak_factor: Option<f64>,
    seed: Option<u64>,
) -> PyRes<Vec<f64>> {
    let d = SyntheticSpec::default();
    let spec = SyntheticSpec {
        length: length.unwrap_or(d.length),
        season: season.unwrap_or(d.season),
        amplitude: amplitude.unwrap_or(d.amplitude),
        ar: ar.unwrap_or(d.ar),
        noise_std: noise_std.unwrap_or(d.noise_std),
        peak_factor: peak_factor.unwrap_or(d.peak_factor),
        seed: seed.unwrap_or(d.seed),
        ..d
    };
    Ok(wrap(experiments::generate_synthetic(&spec))?.values)
}

#[pyfunction]
fn mse(predictions: Vec<f64>, truth: Vec<f64>) -> PyRes<f64> {
    wrap(experiments::mse(&predictions, &truth))
}

/// Fractions of steps where `errors` exceeds `comparator` and where the two
/// are within `threshold`.
#[pyfunction]
#[pyo3(signature = (errors, comparator, threshold=experiments::NEAR_TIE_THRESHOLD))]
fn stepwise_analysis(errors: Vec<f64>, comparator: Vec<f64>, threshold: f64) -> PyRes<HashMap<String, f64>> {
    let c = wrap(experiments::stepwise_analysis(&errors, &comparator, threshold))?;
    Ok(HashMap::from([
        ("exceed".to_string(), c.exceed),
        ("near_tie".to_string(), c.near_tie),
        ("threshold".to_string(), c.threshold),
        ("steps".to_string(), c.steps as f64),
    ]))
}

/// Seasonal ARIMA expert fitted by conditional sum of squares.
#[pyclass(module = "kinn", frozen)]
struct Sarima {
    inner: SarimaModel,
}

#[pymethods]
impl Sarima {
    #[staticmethod]
    #[pyo3(signature = (train, p=1, d=0, q=1, seasonal_p=0, seasonal_d=1, seasonal_q=1, s=48, max_iterations=2000, tolerance=1e-8))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        train: Vec<f64>,
        p: usize,
        d: usize,
        q: usize,
        seasonal_p: usize,
        seasonal_d: usize,
        seasonal_q: usize,
        s: usize,
        max_iterations: usize,
        tolerance: f64,
    ) -> PyRes<Self> {
        let config = SarimaConfig {
            p,
            d,
            q,
            seasonal_p,
            seasonal_d,
            seasonal_q,
            s,
        };
        let opts = FitOptions {
            max_iterations,
            tolerance,
        };
        Ok(Self {
            inner: wrap(expert_mod::fit_sarima(&train, config, opts))?.model,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyRes<Self> {
        match serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))? {
            ExpertModel::Sarima(inner) => Ok(Self { inner }),
            _ => Err(PyValueError::new_err("expected a plain SARIMA expert")),
        }
    }

    fn to_json(&self) -> PyRes<String> {
        serde_json::to_string_pretty(&ExpertModel::Sarima(self.inner.clone()))
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// Forecast of the value following `history`.
    fn predict_one(&self, history: Vec<f64>) -> PyRes<f64> {
        wrap(self.inner.predict_one(&history))
    }

    /// One-step forecasts for targets `start..end` of `series`, each from
    /// the observations before it.
    fn rolling_forecast(&self, series: Vec<f64>, start: usize, end: usize) -> PyRes<Vec<f64>> {
        wrap(self.inner.rolling(&series, start..end))
    }

    #[getter]
    fn ar(&self) -> Vec<f64> {
        self.inner.ar.clone()
    }

    #[getter]
    fn ma(&self) -> Vec<f64> {
        self.inner.ma.clone()
    }

    #[getter]
    fn sar(&self) -> Vec<f64> {
        self.inner.sar.clone()
    }

    #[getter]
    fn sma(&self) -> Vec<f64> {
        self.inner.sma.clone()
    }

    #[getter]
    fn intercept(&self) -> f64 {
        self.inner.intercept
    }

    #[getter]
    fn css(&self) -> f64 {
        self.inner.fit_metadata.css
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.fit_metadata.converged
    }

    #[getter]
    fn min_history(&self) -> usize {
        self.inner.min_history()
    }

    fn __repr__(&self) -> String {
        format!(
            "Sarima(ar={:?}, ma={:?}, sar={:?}, sma={:?}, intercept={})",
            self.inner.ar, self.inner.ma, self.inner.sar, self.inner.sma, self.inner.intercept
        )
    }
}

fn report_dict(r: &TrainReport) -> PyRes<String> {
    serde_json::to_string(r).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn parse_mode(mode: &str) -> PyRes<ConditioningMode> {
    match mode {
        "stack_channel" => Ok(ConditioningMode::StackChannel),
        "append_to_sequence" => Ok(ConditioningMode::AppendToSequence),
        other => Err(PyValueError::new_err(format!(
            "mode must be \"stack_channel\" or \"append_to_sequence\", got {other:?}"
        ))),
    }
}

fn train_options(epochs: usize, batch_size: usize, learning_rate: f64, seed: u64) -> TrainOptions {
    TrainOptions {
        epochs,
        batch_size,
        learning_rate,
        seed,
        ..Default::default()
    }
}

/// LSTM corrector trained on the residual of a SARIMA expert.
#[pyclass(module = "kinn", frozen)]
struct Kinn {
    inner: KinnModel,
    report: TrainReport,
}

#[pymethods]
impl Kinn {
    /// Trains on the 70/10/20 chronological split of `series` (or the
    /// given fractions). The expert must be fitted on the training part.
    #[staticmethod]
    #[pyo3(signature = (series, expert, widths=vec![16, 16, 16], epochs=600, window=3, mode="stack_channel", seed=0, batch_size=32, learning_rate=1e-3, split=(0.7, 0.1, 0.2)))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        series: Vec<f64>,
        expert: &Sarima,
        widths: Vec<usize>,
        epochs: usize,
        window: usize,
        mode: &str,
        seed: u64,
        batch_size: usize,
        learning_rate: f64,
        split: (f64, f64, f64),
    ) -> PyRes<Self> {
        let mode = parse_mode(mode)?;
        let bounds = wrap(
            SplitSpec {
                train: split.0,
                val: split.1,
                test: split.2,
            }
            .bounds(series.len()),
        )?;
        let config = NetworkConfig::with_widths(mode.input_channels(), &widths, seed);
        let opts = train_options(epochs, batch_size, learning_rate, seed);
        let (inner, report) = wrap(kinn_mod::kinn_train(
            &series,
            &bounds,
            ExpertModel::Sarima(expert.inner.clone()),
            mode,
            &config,
            &opts,
            window,
        ))?;
        Ok(Self { inner, report })
    }

    #[staticmethod]
    fn load(dir: &str) -> PyRes<Self> {
        let inner = wrap(KinnModel::load_bundle(dir))?;
        Ok(Self {
            inner,
            report: TrainReport {
                train_loss: Vec::new(),
                val_loss: Vec::new(),
                best_epoch: 0,
                best_val_loss: f64::NAN,
            },
        })
    }

    fn save(&self, dir: &str) -> PyRes<()> {
        wrap(self.inner.save_bundle(dir))
    }

    /// Predictions in original units for targets `start..end`.
    fn predict(&self, series: Vec<f64>, start: usize, end: usize) -> PyRes<Vec<f64>> {
        wrap(kinn_mod::kinn_predict(&self.inner, &series, start..end))
    }

    #[getter]
    fn best_epoch(&self) -> usize {
        self.report.best_epoch
    }

    /// Training report as a JSON string.
    fn report_json(&self) -> PyRes<String> {
        report_dict(&self.report)
    }
}

/// Plain LSTM forecaster on the value window only.
#[pyclass(module = "kinn", frozen)]
struct NeuralNet {
    inner: NeuralForecaster,
    report: TrainReport,
}

#[pymethods]
impl NeuralNet {
    #[staticmethod]
    #[pyo3(signature = (series, widths=vec![16, 16, 16], epochs=600, window=3, seed=0, batch_size=32, learning_rate=1e-3, split=(0.7, 0.1, 0.2)))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        series: Vec<f64>,
        widths: Vec<usize>,
        epochs: usize,
        window: usize,
        seed: u64,
        batch_size: usize,
        learning_rate: f64,
        split: (f64, f64, f64),
    ) -> PyRes<Self> {
        let bounds = wrap(
            SplitSpec {
                train: split.0,
                val: split.1,
                test: split.2,
            }
            .bounds(series.len()),
        )?;
        let config = NetworkConfig::with_widths(1, &widths, seed);
        let opts = train_options(epochs, batch_size, learning_rate, seed);
        let (inner, report) = wrap(kinn_mod::nn_train(&series, &bounds, &config, &opts, window))?;
        Ok(Self { inner, report })
    }

    fn predict(&self, series: Vec<f64>, start: usize, end: usize) -> PyRes<Vec<f64>> {
        wrap(kinn_mod::nn_predict(&self.inner, &series, start..end))
    }

    #[getter]
    fn best_epoch(&self) -> usize {
        self.report.best_epoch
    }

    fn report_json(&self) -> PyRes<String> {
        report_dict(&self.report)
    }
}

/// Runs the experiments selected by a TOML run configuration and returns
/// the contents of `results.json` as a string.
#[pyfunction]
fn run_experiments(config_toml: &str) -> PyRes<String> {
    let config = wrap(RunConfig::from_toml_str(config_toml))?;
    let series = wrap(config.load_series())?;
    let run = experiments::run_experiments(&series, &config.experiment_specs(), &config.experiment_settings());
    let file = experiments::ResultsFile {
        schema_version: experiments::RESULTS_SCHEMA_VERSION,
        results: run.results,
        failures: run.failures,
    };
    serde_json::to_string(&file).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn kinn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(pacf, m)?)?;
    m.add_function(wrap_pyfunction!(acf, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_arma, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(stepwise_analysis, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiments, m)?)?;
    m.add_class::<Sarima>()?;
    m.add_class::<Kinn>()?;
    m.add_class::<NeuralNet>()?;
    Ok(())
}
