//! Residual composition of a network and an expert.
//!
//! The network sees the recent window together with the expert's one-step
//! forecast and outputs a correction that is added onto that forecast:
//!
//! ```text
//! x_hat_t = net([x_{t-p}, ..., x_{t-1}], expert_t) + expert_t
//! ```
//!
//! Training regresses the network on `x_t - expert_t`, which has the same
//! MSE objective and gradients as training the sum. Everything the network
//! touches is in z-scored units; predictions are reported in original units.

use std::fs;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{KinnError, Result};
use crate::expert::{Expert, ExpertModel};
use crate::nn::{self, load_checkpoint, save_checkpoint, Network, NetworkConfig, TrainOptions, TrainReport};
use crate::timeseries::{windows_for_targets, ChannelLayout, ScalerParams, SplitBounds, WindowedDataset};

/// How the expert forecast enters the network input.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningMode {
    /// One extra time step holding the forecast: `p + 1` steps, 1 channel.
    AppendToSequence,
    /// A second channel repeating the forecast at every step.
    #[default]
    StackChannel,
}

impl ConditioningMode {
    pub fn layout(self) -> ChannelLayout {
        match self {
            ConditioningMode::AppendToSequence => ChannelLayout::ExpertAppended,
            ConditioningMode::StackChannel => ChannelLayout::ValuesPlusExpert,
        }
    }

    pub fn input_channels(self) -> usize {
        match self {
            ConditioningMode::AppendToSequence => 1,
            ConditioningMode::StackChannel => 2,
        }
    }
}

/// Adds the expert forecasts (one per row, already scaled) to value-only
/// windows.
pub fn condition_inputs(base: &WindowedDataset, expert_preds: &[f64], mode: ConditioningMode) -> Result<WindowedDataset> {
    if base.layout != ChannelLayout::ValuesOnly {
        return Err(KinnError::ShapeMismatch(
            "conditioning expects value-only windows".into(),
        ));
    }
    if expert_preds.len() != base.len() {
        return Err(KinnError::Misaligned {
            expected: base.len(),
            got: expert_preds.len(),
        });
    }
    let layout = mode.layout();
    let (seq_len, channels) = match layout {
        ChannelLayout::ExpertAppended => (base.window + 1, 1),
        _ => (base.window, 2),
    };
    let mut inputs = Vec::with_capacity(base.len() * seq_len * channels);
    for (i, &e) in expert_preds.iter().enumerate() {
        let row = base.row(i);
        match layout {
            ChannelLayout::ExpertAppended => {
                inputs.extend_from_slice(row);
                inputs.push(e);
            }
            _ => {
                for &v in row {
                    inputs.push(v);
                    inputs.push(e);
                }
            }
        }
    }
    Ok(WindowedDataset {
        inputs,
        targets: base.targets.clone(),
        target_indices: base.target_indices.clone(),
        window: base.window,
        seq_len,
        channels,
        layout,
    })
}

/// Converts a conditioned dataset to the other conditioning mode without
/// loss of information.
pub fn repack(ds: &WindowedDataset, mode: ConditioningMode) -> Result<WindowedDataset> {
    let mut base = ds.clone_values_only();
    let mut experts = Vec::with_capacity(ds.len());
    for i in 0..ds.len() {
        base.inputs.extend(ds.value_window(i));
        experts.push(ds.expert_value(i).ok_or_else(|| {
            KinnError::ShapeMismatch("dataset carries no expert channel".into())
        })?);
    }
    condition_inputs(&base, &experts, mode)
}

impl WindowedDataset {
    fn clone_values_only(&self) -> WindowedDataset {
        WindowedDataset {
            inputs: Vec::with_capacity(self.len() * self.window),
            targets: self.targets.clone(),
            target_indices: self.target_indices.clone(),
            window: self.window,
            seq_len: self.window,
            channels: 1,
            layout: ChannelLayout::ValuesOnly,
        }
    }
}

/// Trained network, the expert it corrects and the scaling they share.
#[derive(Debug, Clone, PartialEq)]
pub struct KinnModel<E = ExpertModel> {
    pub network: Network,
    pub expert: E,
    pub mode: ConditioningMode,
    pub scaler: ScalerParams,
    pub window: usize,
}

/// Plain window-to-value network, the unconditioned baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralForecaster {
    pub network: Network,
    pub scaler: ScalerParams,
    pub window: usize,
}

/// Residual prediction in original units: `unscale(net + expert)`.
pub fn kinn_forward(network: &Network, conditioned: &WindowedDataset, expert_scaled: &[f64], scaler: &ScalerParams) -> Result<Vec<f64>> {
    if expert_scaled.len() != conditioned.len() {
        return Err(KinnError::Misaligned {
            expected: conditioned.len(),
            got: expert_scaled.len(),
        });
    }
    let residual = network.predict(conditioned)?;
    Ok(residual
        .iter()
        .zip(expert_scaled)
        .map(|(r, e)| scaler.unscale(r + e))
        .collect())
}

/// The residual objective written directly: mean of
/// `(target - (net(input) + expert))^2` in scaled units.
pub fn kinn_objective(network: &Network, conditioned: &WindowedDataset, expert_scaled: &[f64]) -> Result<f64> {
    let residual = network.predict(conditioned)?;
    let sum: f64 = residual
        .iter()
        .zip(expert_scaled)
        .zip(&conditioned.targets)
        .map(|((r, e), t)| {
            let d = t - (r + e);
            d * d
        })
        .sum();
    Ok(sum / conditioned.len() as f64)
}

fn check_bounds(series_len: usize, bounds: &SplitBounds) -> Result<()> {
    if bounds.train.is_empty() || bounds.val.is_empty() || bounds.val.end > series_len || bounds.test.end > series_len {
        return Err(KinnError::InvalidSplit(format!(
            "{bounds:?} does not fit a series of length {series_len}"
        )));
    }
    Ok(())
}

/// Value-only windows in scaled units for `targets`.
fn scaled_windows(series: &[f64], scaler: &ScalerParams, targets: Range<usize>, window: usize) -> Result<WindowedDataset> {
    let lo = targets.start.saturating_sub(window);
    let scaled = scaler.scale_all(&series[lo..targets.end]);
    let mut ds = windows_for_targets(&scaled, targets.start - lo..targets.end - lo, window, None, ChannelLayout::ValuesOnly)?;
    for t in ds.target_indices.iter_mut() {
        *t += lo;
    }
    Ok(ds)
}

/// Residual-conditioned dataset for `targets` together with the expert's
/// scaled forecasts.
fn residual_dataset<E: Expert>(
    series: &[f64],
    expert: &E,
    scaler: &ScalerParams,
    targets: Range<usize>,
    window: usize,
    mode: ConditioningMode,
) -> Result<(WindowedDataset, Vec<f64>)> {
    let raw = expert.rolling(series, targets.clone())?;
    let expert_scaled = scaler.scale_all(&raw);
    let base = scaled_windows(series, scaler, targets, window)?;
    let mut ds = condition_inputs(&base, &expert_scaled, mode)?;
    for (t, e) in ds.targets.iter_mut().zip(&expert_scaled) {
        *t -= e;
    }
    Ok((ds, expert_scaled))
}

/// First training target usable by both the window and the expert.
pub fn first_train_target(bounds: &SplitBounds, window: usize, expert_history: usize) -> usize {
    bounds.train.start + window.max(expert_history)
}

/// Trains the residual network. `series` is in original units and
/// `bounds` index into it; the expert must already be fitted on (or defined
/// over) the training range only. Expert forecasts for every target use
/// the observed history before it.
pub fn kinn_train<E: Expert>(
    series: &[f64],
    bounds: &SplitBounds,
    expert: E,
    mode: ConditioningMode,
    config: &NetworkConfig,
    opts: &TrainOptions,
    window: usize,
) -> Result<(KinnModel<E>, TrainReport)> {
    check_bounds(series.len(), bounds)?;
    let scaler = ScalerParams::fit(&series[bounds.train.clone()])?;
    let first = first_train_target(bounds, window, expert.min_history());
    if first >= bounds.train.end {
        return Err(KinnError::TooShort {
            needed: first - bounds.train.start + 1,
            got: bounds.train.len(),
        });
    }
    let (train_ds, _) = residual_dataset(series, &expert, &scaler, first..bounds.train.end, window, mode)?;
    let (val_ds, _) = residual_dataset(series, &expert, &scaler, bounds.val.clone(), window, mode)?;
    let config = NetworkConfig {
        input_channels: mode.input_channels(),
        ..config.clone()
    };
    let (network, report) = nn::train(&config, &train_ds, &val_ds, opts)?;
    Ok((
        KinnModel {
            network,
            expert,
            mode,
            scaler,
            window,
        },
        report,
    ))
}

/// One-step predictions in original units for each target in `targets`:
/// expert forecast, conditioning, network correction, inverse scaling.
pub fn kinn_predict<E: Expert>(model: &KinnModel<E>, series: &[f64], targets: Range<usize>) -> Result<Vec<f64>> {
    if targets.is_empty() {
        return Ok(Vec::new());
    }
    let (ds, expert_scaled) = residual_dataset(series, &model.expert, &model.scaler, targets, model.window, model.mode)?;
    kinn_forward(&model.network, &ds, &expert_scaled, &model.scaler)
}

/// Trains the unconditioned baseline on value-only windows.
pub fn nn_train(
    series: &[f64],
    bounds: &SplitBounds,
    config: &NetworkConfig,
    opts: &TrainOptions,
    window: usize,
) -> Result<(NeuralForecaster, TrainReport)> {
    nn_train_from(series, bounds, config, opts, window, first_train_target(bounds, window, 0))
}

/// As [`nn_train`] with an explicit first training target.
pub fn nn_train_from(
    series: &[f64],
    bounds: &SplitBounds,
    config: &NetworkConfig,
    opts: &TrainOptions,
    window: usize,
    first_target: usize,
) -> Result<(NeuralForecaster, TrainReport)> {
    check_bounds(series.len(), bounds)?;
    let scaler = ScalerParams::fit(&series[bounds.train.clone()])?;
    let first = first_target.max(bounds.train.start + window);
    if first >= bounds.train.end {
        return Err(KinnError::TooShort {
            needed: first - bounds.train.start + 1,
            got: bounds.train.len(),
        });
    }
    let to_scaled = |r: Range<usize>| -> Result<WindowedDataset> {
        let mut ds = scaled_windows(series, &scaler, r, window)?;
        // Targets were scaled along with the inputs.
        ds.layout = ChannelLayout::ValuesOnly;
        Ok(ds)
    };
    let train_ds = to_scaled(first..bounds.train.end)?;
    let val_ds = to_scaled(bounds.val.clone())?;
    let config = NetworkConfig {
        input_channels: 1,
        ..config.clone()
    };
    let (network, report) = nn::train(&config, &train_ds, &val_ds, opts)?;
    Ok((
        NeuralForecaster {
            network,
            scaler,
            window,
        },
        report,
    ))
}

pub fn nn_predict(model: &NeuralForecaster, series: &[f64], targets: Range<usize>) -> Result<Vec<f64>> {
    if targets.is_empty() {
        return Ok(Vec::new());
    }
    let ds = scaled_windows(series, &model.scaler, targets, model.window)?;
    Ok(model.scaler.unscale_all(&model.network.predict(&ds)?))
}

#[derive(Debug, Serialize, Deserialize)]
struct BundleManifest {
    format_version: u32,
    mode: ConditioningMode,
    window: usize,
    network: NetworkConfig,
}

const BUNDLE_VERSION: u32 = 1;

impl KinnModel<ExpertModel> {
    /// Writes `network.ckpt`, `expert.json`, `scaler.json` and
    /// `manifest.json` into `dir`.
    pub fn save_bundle(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| KinnError::io(dir, e))?;
        save_checkpoint(&self.network, dir.join("network.ckpt"))?;
        self.expert.save_json(dir.join("expert.json"))?;
        write_json(dir.join("scaler.json"), &self.scaler)?;
        write_json(
            dir.join("manifest.json"),
            &BundleManifest {
                format_version: BUNDLE_VERSION,
                mode: self.mode,
                window: self.window,
                network: self.network.config.clone(),
            },
        )
    }

    pub fn load_bundle(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: BundleManifest = read_json(dir.join("manifest.json"))?;
        if manifest.format_version != BUNDLE_VERSION {
            return Err(KinnError::VersionMismatch {
                found: manifest.format_version,
                expected: BUNDLE_VERSION,
            });
        }
        let network = load_checkpoint(dir.join("network.ckpt"))?;
        if network.config != manifest.network {
            return Err(KinnError::CorruptCheckpoint(
                "manifest and checkpoint disagree on the network configuration".into(),
            ));
        }
        Ok(Self {
            network,
            expert: ExpertModel::load_json(dir.join("expert.json"))?,
            mode: manifest.mode,
            scaler: read_json(dir.join("scaler.json"))?,
            window: manifest.window,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct NeuralManifest {
    format_version: u32,
    window: usize,
    network: NetworkConfig,
}

impl NeuralForecaster {
    /// Writes `network.ckpt`, `scaler.json` and `manifest.json` into `dir`.
    pub fn save_bundle(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| KinnError::io(dir, e))?;
        save_checkpoint(&self.network, dir.join("network.ckpt"))?;
        write_json(dir.join("scaler.json"), &self.scaler)?;
        write_json(
            dir.join("manifest.json"),
            &NeuralManifest {
                format_version: BUNDLE_VERSION,
                window: self.window,
                network: self.network.config.clone(),
            },
        )
    }

    pub fn load_bundle(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: NeuralManifest = read_json(dir.join("manifest.json"))?;
        if manifest.format_version != BUNDLE_VERSION {
            return Err(KinnError::VersionMismatch {
                found: manifest.format_version,
                expected: BUNDLE_VERSION,
            });
        }
        let network = load_checkpoint(dir.join("network.ckpt"))?;
        if network.config != manifest.network {
            return Err(KinnError::CorruptCheckpoint(
                "manifest and checkpoint disagree on the network configuration".into(),
            ));
        }
        Ok(Self {
            network,
            scaler: read_json(dir.join("scaler.json"))?,
            window: manifest.window,
        })
    }
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| KinnError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| KinnError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::{make_windows, TimeSeries};

    fn base() -> WindowedDataset {
        make_windows(
            &TimeSeries::from_values(vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            3,
            None,
            ChannelLayout::ValuesOnly,
        )
        .unwrap()
    }

    #[test]
    fn append_mode() {
        let ds = condition_inputs(&base(), &[3.9], ConditioningMode::AppendToSequence).unwrap();
        assert_eq!(ds.row(0), &[1.0, 2.0, 3.0, 3.9]);
        assert_eq!((ds.seq_len, ds.channels), (4, 1));
    }

    #[test]
    fn stack_mode() {
        let ds = condition_inputs(&base(), &[3.9], ConditioningMode::StackChannel).unwrap();
        assert_eq!(ds.row(0), &[1.0, 3.9, 2.0, 3.9, 3.0, 3.9]);
        assert_eq!((ds.seq_len, ds.channels), (3, 2));
    }

    #[test]
    fn short_expert_list_is_misaligned() {
        let err = condition_inputs(&base(), &[], ConditioningMode::StackChannel).unwrap_err();
        assert!(matches!(err, KinnError::Misaligned { expected: 1, got: 0 }));
    }

    #[test]
    fn additive_forward() {
        let cfg = NetworkConfig::with_widths(2, &[2], 0);
        let mut net = Network::new(cfg).unwrap();
        net.params.head_weights.fill(0.0);
        net.params.head_bias[0] = 0.5;
        let ds = condition_inputs(&base(), &[3.0], ConditioningMode::StackChannel).unwrap();
        let scaler = ScalerParams { mean: 10.0, std: 2.0 };
        let out = kinn_forward(&net, &ds, &[3.0], &scaler).unwrap();
        assert_eq!(out, vec![3.5 * 2.0 + 10.0]);
    }

    #[test]
    fn repack_round_trip() {
        let s = condition_inputs(&base(), &[3.9], ConditioningMode::StackChannel).unwrap();
        let a = repack(&s, ConditioningMode::AppendToSequence).unwrap();
        assert_eq!(a.row(0), &[1.0, 2.0, 3.0, 3.9]);
        assert_eq!(repack(&a, ConditioningMode::StackChannel).unwrap(), s);
        assert!(repack(&base(), ConditioningMode::StackChannel).is_err());
    }
}
