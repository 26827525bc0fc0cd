//! Run configuration, read from a TOML file. Every key is optional and
//! unknown keys are rejected.
//!
//! ```toml
//! output_dir = "out"
//!
//! [dataset]
//! source = "synthetic"        # or "csv"
//! # path = "flow.csv"
//! # timestamp_column = "timestamp"
//! # value_column = "flow"
//! bucket_secs = 1800
//! fill = "reject"             # or "forward"
//!
//! [dataset.synthetic]
//! length = 8000
//! season = 48
//!
//! [split]
//! train = 0.7
//! val = 0.1
//! test = 0.2
//!
//! [expert]
//! decorator = "none"          # none | noisy | zero | lagged
//! max_iterations = 2000
//! tolerance = 1e-8
//! lag = 1
//!
//! [expert.orders]
//! p = 1
//! d = 0
//! q = 1
//! P = 0
//! D = 1
//! Q = 1
//! s = 48
//!
//! [expert.noise]
//! seed = 7
//! distribution = "uniform"    # or "gaussian"
//! # amplitude = 5.0           # default: std of the training data used
//!
//! [network]
//! widths = [64, 64, 64]
//! window = 3
//! epochs = 600
//! batch_size = 32
//! learning_rate = 1e-3
//! seed = 0
//!
//! [kinn]
//! mode = "stack_channel"      # or "append_to_sequence"
//!
//! [experiment]
//! ids = [1, 2, 3, 4, 5]
//! reduced_fraction = 0.5
//! small_fraction = 0.1
//! near_tie_threshold = 1.5
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{KinnError, Result};
use crate::experiments::{
    generate_synthetic, table_rows_with, ExperimentSettings, ExperimentSpec, NoiseSettings, SyntheticSpec,
    NEAR_TIE_THRESHOLD,
};
use crate::expert::{Decoration, FitOptions, SarimaConfig};
use crate::kinn::ConditioningMode;
use crate::nn::{Activation, NetworkConfig, TrainOptions};
use crate::timeseries::{aggregate, load_csv, ColumnSpec, FillPolicy, SplitSpec, TimeSeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub split: SplitSpec,
    pub expert: ExpertConfig,
    pub network: NetworkSection,
    pub kinn: KinnSection,
    pub experiment: ExperimentSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            dataset: DatasetConfig::default(),
            split: SplitSpec::default(),
            expert: ExpertConfig::default(),
            network: NetworkSection::default(),
            kinn: KinnSection::default(),
            experiment: ExperimentSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    #[default]
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: DataSource,
    pub path: Option<PathBuf>,
    pub timestamp_column: String,
    pub value_column: String,
    /// Aggregation bucket in seconds. Ignored when it equals the input
    /// spacing.
    pub bucket_secs: i64,
    pub fill: FillPolicy,
    pub synthetic: SyntheticSpec,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        let columns = ColumnSpec::default();
        Self {
            source: DataSource::Synthetic,
            path: None,
            timestamp_column: columns.timestamp,
            value_column: columns.value,
            bucket_secs: 1800,
            fill: FillPolicy::Reject,
            synthetic: SyntheticSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoratorKind {
    #[default]
    None,
    Noisy,
    Zero,
    Lagged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpertConfig {
    pub orders: SarimaConfig,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Decoration applied by `fit-expert`; experiments choose their own.
    pub decorator: DecoratorKind,
    pub noise: NoiseSettings,
    pub lag: usize,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        let fit = FitOptions::default();
        Self {
            orders: SarimaConfig::default(),
            max_iterations: fit.max_iterations,
            tolerance: fit.tolerance,
            decorator: DecoratorKind::None,
            noise: NoiseSettings::default(),
            lag: 1,
        }
    }
}

impl ExpertConfig {
    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
        }
    }

    /// Decoration to apply after fitting; `train_std` fills in the noise
    /// amplitude when none is configured.
    pub fn decoration(&self, train_std: f64) -> Option<Decoration> {
        match self.decorator {
            DecoratorKind::None => None,
            DecoratorKind::Noisy => Some(Decoration::Noisy {
                amplitude: self.noise.amplitude.unwrap_or(train_std),
                seed: self.noise.seed,
                distribution: self.noise.distribution,
            }),
            DecoratorKind::Zero => Some(Decoration::Zero),
            DecoratorKind::Lagged => Some(Decoration::Lagged { lag: self.lag }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub widths: Vec<usize>,
    /// One per layer; default sigmoid for the first layer, ReLU after.
    pub activations: Option<Vec<Activation>>,
    /// Seeds both the initialisation and the per-epoch shuffle.
    pub seed: u64,
    pub window: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub patience: Option<usize>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let net = NetworkConfig::default();
        let train = TrainOptions::default();
        Self {
            widths: net.layer_widths,
            activations: None,
            seed: 0,
            window: 3,
            epochs: train.epochs,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            beta1: train.beta1,
            beta2: train.beta2,
            epsilon: train.epsilon,
            patience: None,
        }
    }
}

impl NetworkSection {
    pub fn network_config(&self, input_channels: usize) -> NetworkConfig {
        let mut config = NetworkConfig::with_widths(input_channels, &self.widths, self.seed);
        if let Some(acts) = &self.activations {
            config.activations = acts.clone();
        }
        config
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            seed: self.seed,
            patience: self.patience,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KinnSection {
    pub mode: ConditioningMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub ids: Vec<u8>,
    pub reduced_fraction: f64,
    pub small_fraction: f64,
    pub near_tie_threshold: f64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            ids: vec![1, 2, 3, 4, 5],
            reduced_fraction: 0.5,
            small_fraction: 0.1,
            near_tie_threshold: NEAR_TIE_THRESHOLD,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| KinnError::InvalidConfig(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| KinnError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            KinnError::InvalidConfig(msg) => KinnError::InvalidConfig(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| KinnError::InvalidConfig(e.to_string()))
    }

    /// Checks every section without touching data beyond confirming that
    /// referenced files exist.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(KinnError::InvalidConfig(msg));
        match self.dataset.source {
            DataSource::Synthetic => self.dataset.synthetic.validate()?,
            DataSource::Csv => match &self.dataset.path {
                None => return bad("dataset.path is required when source = \"csv\"".into()),
                Some(p) if !p.is_file() => {
                    return Err(KinnError::io(
                        p,
                        std::io::Error::new(std::io::ErrorKind::NotFound, "dataset file not found"),
                    ))
                }
                Some(_) => {}
            },
        }
        if self.dataset.bucket_secs <= 0 {
            return bad(format!("dataset.bucket_secs must be positive, got {}", self.dataset.bucket_secs));
        }
        self.experiment_settings().validate()?;
        if self.expert.orders.s == 0 && (self.expert.orders.seasonal_p + self.expert.orders.seasonal_d + self.expert.orders.seasonal_q) > 0 {
            return bad("expert.orders.s must be positive for seasonal terms".into());
        }
        if !(self.expert.tolerance > 0.0) {
            return bad(format!("expert.tolerance must be positive, got {}", self.expert.tolerance));
        }
        if let Some(d) = self.expert.decoration(1.0) {
            d.validate()?;
        }
        if let Some(acts) = &self.network.activations {
            if acts.len() != self.network.widths.len() {
                return bad(format!(
                    "network.activations has {} entries for {} layers",
                    acts.len(),
                    self.network.widths.len()
                ));
            }
        }
        for f in [self.experiment.reduced_fraction, self.experiment.small_fraction] {
            if !(f > 0.0 && f <= 1.0) {
                return bad(format!("data fractions must lie in (0, 1], got {f}"));
            }
        }
        if self.experiment.ids.is_empty() {
            return bad("experiment.ids is empty".into());
        }
        for &id in &self.experiment.ids {
            if !(1..=5).contains(&id) {
                return bad(format!("experiment id {id} is not in 1..=5"));
            }
        }
        Ok(())
    }

    pub fn experiment_settings(&self) -> ExperimentSettings {
        ExperimentSettings {
            split: self.split,
            sarima: self.expert.orders,
            fit: self.expert.fit_options(),
            noise: self.expert.noise.clone(),
            lag: self.expert.lag,
            network: self.network.network_config(1),
            train: self.network.train_options(),
            window: self.network.window,
            mode: self.kinn.mode,
            near_tie_threshold: self.experiment.near_tie_threshold,
        }
    }

    /// Table rows selected by `experiment.ids`, in table order.
    pub fn experiment_specs(&self) -> Vec<ExperimentSpec> {
        table_rows_with(self.experiment.reduced_fraction, self.experiment.small_fraction)
            .into_iter()
            .filter(|r| self.experiment.ids.contains(&r.id))
            .collect()
    }

    /// The configured series, generated or read and bucketed.
    pub fn load_series(&self) -> Result<TimeSeries> {
        match self.dataset.source {
            DataSource::Synthetic => generate_synthetic(&self.dataset.synthetic),
            DataSource::Csv => {
                let path = self
                    .dataset
                    .path
                    .as_ref()
                    .ok_or_else(|| KinnError::InvalidConfig("dataset.path is required".into()))?;
                let columns = ColumnSpec {
                    timestamp: self.dataset.timestamp_column.clone(),
                    value: self.dataset.value_column.clone(),
                };
                let raw = load_csv(path, &columns, self.dataset.fill)?;
                if raw.interval == self.dataset.bucket_secs {
                    Ok(raw)
                } else {
                    aggregate(&raw, self.dataset.bucket_secs)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_toml_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.network.epochs, 600);
        assert_eq!(c.network.window, 3);
        assert_eq!(c.experiment_specs().len(), 7);
    }

    #[test]
    fn unknown_keys_rejected() {
        for text in ["bogus = 1", "[network]\nwidth = [3]", "[expert.orders]\nR = 1", "[dataset.synthetic]\nfoo = 2"] {
            let err = RunConfig::from_toml_str(text).unwrap_err();
            assert!(matches!(err, KinnError::InvalidConfig(_)), "{text}: {err}");
        }
    }

    #[test]
    fn out_of_range_values_rejected() {
        for text in [
            "[split]\ntrain = 0.9\nval = 0.2\ntest = 0.2",
            "[network]\nwidths = []",
            "[network]\nwindow = 0",
            "[network]\nlearning_rate = -1.0",
            "[experiment]\nids = [6]",
            "[experiment]\nsmall_fraction = 0.0",
            "[expert]\ndecorator = \"lagged\"\nlag = 0",
            "[dataset]\nsource = \"csv\"",
            "[dataset.synthetic]\nar = 1.5",
            "[network]\nwidths = [4, 4]\nactivations = [\"relu\"]",
        ] {
            assert!(RunConfig::from_toml_str(text).is_err(), "{text}");
        }
    }

    #[test]
    fn missing_csv_is_io_error() {
        let err = RunConfig::from_toml_str("[dataset]\nsource = \"csv\"\npath = \"/nonexistent/flow.csv\"").unwrap_err();
        assert!(matches!(err, KinnError::Io { .. }));
    }

    #[test]
    fn partial_sections_and_round_trip() {
        let c = RunConfig::from_toml_str(
            "[expert.orders]\np = 2\n[network]\nwidths = [8]\n[experiment]\nids = [5]\n[kinn]\nmode = \"append_to_sequence\"",
        )
        .unwrap();
        assert_eq!(c.expert.orders.p, 2);
        assert_eq!(c.expert.orders.s, 48);
        assert_eq!(c.kinn.mode, ConditioningMode::AppendToSequence);
        let labels: Vec<_> = c.experiment_specs().into_iter().map(|s| s.label).collect();
        assert_eq!(labels, ["5a", "5b"]);
        let text = c.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn synthetic_series_matches_spec_length() {
        let c = RunConfig::from_toml_str("[dataset.synthetic]\nlength = 300").unwrap();
        assert_eq!(c.load_series().unwrap().len(), 300);
    }
}
