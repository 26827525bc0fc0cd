//! Expert forecasters: anything that produces a one-step-ahead prediction
//! from observed history.

mod nelder_mead;
mod sarima;
mod simulate;

use std::fs;
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{KinnError, Result};
use crate::timeseries::TimeSeries;

pub use nelder_mead::{minimize, Minimum, NelderMeadOptions};
pub use sarima::{
    difference, differencing_polynomial, fit_sarima, is_stationary, FitMetadata, FitOptions,
    SarimaConfig, SarimaFit, SarimaModel,
};
pub use simulate::simulate_arma;

/// A one-step-ahead forecaster.
///
/// `predict_one(history)` forecasts the value at index `history.len()` and
/// may only look at `history`.
pub trait Expert: Send + Sync {
    /// Shortest history for which `predict_one` succeeds.
    fn min_history(&self) -> usize;

    fn predict_one(&self, history: &[f64]) -> Result<f64>;

    /// Forecast for each target `t` in `targets` from `series[..t]`.
    fn rolling(&self, series: &[f64], targets: Range<usize>) -> Result<Vec<f64>> {
        check_range(self.min_history(), series.len(), &targets)?;
        targets.map(|t| self.predict_one(&series[..t])).collect()
    }
}

fn check_range(min_history: usize, len: usize, targets: &Range<usize>) -> Result<()> {
    if targets.start < min_history {
        return Err(KinnError::InsufficientHistory {
            needed: min_history,
            got: targets.start,
        });
    }
    if targets.end > len {
        return Err(KinnError::TooShort {
            needed: targets.end,
            got: len,
        });
    }
    Ok(())
}

/// One-step-ahead forecasts over `range` using the observed history up to
/// each target (never the expert's own earlier forecasts).
pub fn rolling_forecast(model: &dyn Expert, series: &TimeSeries, range: Range<usize>) -> Result<Vec<f64>> {
    model.rolling(&series.values, range)
}

impl Expert for SarimaModel {
    fn min_history(&self) -> usize {
        SarimaModel::min_history(self)
    }

    fn predict_one(&self, history: &[f64]) -> Result<f64> {
        SarimaModel::predict_one(self, history)
    }

    fn rolling(&self, series: &[f64], targets: Range<usize>) -> Result<Vec<f64>> {
        check_range(self.min_history(), series.len(), &targets)?;
        self.forecast_range(series, targets)
    }
}

/// Predicts the value one season back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonalNaive {
    pub season: usize,
}

pub fn seasonal_naive(season: usize) -> Result<SeasonalNaive> {
    if season == 0 {
        return Err(KinnError::InvalidConfig("season length must be >= 1".into()));
    }
    Ok(SeasonalNaive { season })
}

impl Expert for SeasonalNaive {
    fn min_history(&self) -> usize {
        self.season
    }

    fn predict_one(&self, history: &[f64]) -> Result<f64> {
        if history.len() < self.season {
            return Err(KinnError::InsufficientHistory {
                needed: self.season,
                got: history.len(),
            });
        }
        Ok(history[history.len() - self.season])
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseDistribution {
    /// Uniform on `[-amplitude, amplitude]`.
    #[default]
    Uniform,
    /// Gaussian with standard deviation `amplitude`.
    Gaussian,
}

/// Ways of degrading an expert.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Decoration {
    /// Adds seeded noise to every prediction. The draw for target `t`
    /// depends only on `(seed, t)`, so forecasts are reproducible in any
    /// call order.
    Noisy {
        amplitude: f64,
        seed: u64,
        #[serde(default)]
        distribution: NoiseDistribution,
    },
    /// Always predicts zero.
    Zero,
    /// Returns the observation `lag` steps before the target.
    Lagged { lag: usize },
}

impl Decoration {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Decoration::Noisy { amplitude, .. } if !(amplitude >= 0.0 && amplitude.is_finite()) => {
                Err(KinnError::InvalidConfig(format!(
                    "noise amplitude must be finite and >= 0, got {amplitude}"
                )))
            }
            Decoration::Lagged { lag: 0 } => {
                Err(KinnError::InvalidConfig("lag must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// Noise offset for target index `t`.
    pub fn noise_offset(amplitude: f64, seed: u64, distribution: NoiseDistribution, t: usize) -> f64 {
        if amplitude == 0.0 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        match distribution {
            NoiseDistribution::Uniform => rng.random_range(-amplitude..=amplitude),
            NoiseDistribution::Gaussian => Normal::new(0.0, amplitude)
                .expect("finite amplitude")
                .sample(&mut rng),
        }
    }

    fn min_history(&self, inner: usize) -> usize {
        match *self {
            Decoration::Noisy { .. } => inner,
            Decoration::Zero => 0,
            Decoration::Lagged { lag } => lag,
        }
    }

    fn apply(&self, history: &[f64], inner: impl FnOnce() -> Result<f64>) -> Result<f64> {
        match *self {
            Decoration::Noisy {
                amplitude,
                seed,
                distribution,
            } => Ok(inner()? + Self::noise_offset(amplitude, seed, distribution, history.len())),
            Decoration::Zero => Ok(0.0),
            Decoration::Lagged { lag } => {
                if history.len() < lag {
                    return Err(KinnError::InsufficientHistory {
                        needed: lag,
                        got: history.len(),
                    });
                }
                Ok(history[history.len() - lag])
            }
        }
    }

    fn apply_rolling(
        &self,
        series: &[f64],
        targets: Range<usize>,
        inner: impl FnOnce(Range<usize>) -> Result<Vec<f64>>,
    ) -> Result<Vec<f64>> {
        match *self {
            Decoration::Noisy {
                amplitude,
                seed,
                distribution,
            } => {
                let base = inner(targets.clone())?;
                Ok(base
                    .into_iter()
                    .zip(targets)
                    .map(|(b, t)| b + Self::noise_offset(amplitude, seed, distribution, t))
                    .collect())
            }
            Decoration::Zero => Ok(vec![0.0; targets.len()]),
            Decoration::Lagged { lag } => {
                check_range(lag, series.len(), &targets)?;
                Ok(targets.map(|t| series[t - lag]).collect())
            }
        }
    }
}

/// An expert wrapped in a [`Decoration`].
#[derive(Debug, Clone, PartialEq)]
pub struct Decorated<E> {
    pub inner: E,
    pub decoration: Decoration,
}

pub fn decorate<E: Expert>(inner: E, decoration: Decoration) -> Result<Decorated<E>> {
    decoration.validate()?;
    Ok(Decorated { inner, decoration })
}

impl<E: Expert> Expert for Decorated<E> {
    fn min_history(&self) -> usize {
        self.decoration.min_history(self.inner.min_history())
    }

    fn predict_one(&self, history: &[f64]) -> Result<f64> {
        self.decoration
            .apply(history, || self.inner.predict_one(history))
    }

    fn rolling(&self, series: &[f64], targets: Range<usize>) -> Result<Vec<f64>> {
        self.decoration
            .apply_rolling(series, targets, |r| self.inner.rolling(series, r))
    }
}

/// Serialisable expert used by configuration files and saved bundles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ExpertModel {
    Sarima(SarimaModel),
    SeasonalNaive(SeasonalNaive),
    Decorated {
        inner: Box<ExpertModel>,
        decoration: Decoration,
    },
}

impl ExpertModel {
    pub fn decorate(self, decoration: Decoration) -> Result<Self> {
        decoration.validate()?;
        Ok(ExpertModel::Decorated {
            inner: Box::new(self),
            decoration,
        })
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| KinnError::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| KinnError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

impl Expert for ExpertModel {
    fn min_history(&self) -> usize {
        match self {
            ExpertModel::Sarima(m) => m.min_history(),
            ExpertModel::SeasonalNaive(m) => m.min_history(),
            ExpertModel::Decorated { inner, decoration } => {
                decoration.min_history(inner.min_history())
            }
        }
    }

    fn predict_one(&self, history: &[f64]) -> Result<f64> {
        match self {
            ExpertModel::Sarima(m) => m.predict_one(history),
            ExpertModel::SeasonalNaive(m) => m.predict_one(history),
            ExpertModel::Decorated { inner, decoration } => {
                decoration.apply(history, || inner.predict_one(history))
            }
        }
    }

    fn rolling(&self, series: &[f64], targets: Range<usize>) -> Result<Vec<f64>> {
        match self {
            ExpertModel::Sarima(m) => Expert::rolling(m, series, targets),
            ExpertModel::SeasonalNaive(m) => m.rolling(series, targets),
            ExpertModel::Decorated { inner, decoration } => {
                decoration.apply_rolling(series, targets, |r| inner.rolling(series, r))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seasonal_naive_examples() {
        let sn = seasonal_naive(2).unwrap();
        assert_eq!(sn.predict_one(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        let last = seasonal_naive(1).unwrap();
        assert_eq!(last.predict_one(&[1.0, 2.0, 3.0]).unwrap(), 3.0);
        assert!(sn.predict_one(&[1.0]).is_err());
        assert!(seasonal_naive(0).is_err());
    }

    #[test]
    fn seasonal_naive_is_perfect_on_periodic_data() {
        let series: Vec<f64> = (0..40).map(|i| [3.0, 1.0, 4.0, 1.5][i % 4]).collect();
        let ts = TimeSeries::from_values(series.clone()).unwrap();
        let preds = rolling_forecast(&seasonal_naive(4).unwrap(), &ts, 4..40).unwrap();
        assert!(preds.iter().zip(&series[4..]).all(|(p, x)| p == x));
    }

    #[test]
    fn zero_decorator() {
        let z = decorate(seasonal_naive(1).unwrap(), Decoration::Zero).unwrap();
        assert_eq!(z.predict_one(&[4.0, 5.0]).unwrap(), 0.0);
        assert_eq!(z.predict_one(&[]).unwrap(), 0.0);
        let ts = TimeSeries::from_values(vec![1.0; 10]).unwrap();
        assert_eq!(rolling_forecast(&z, &ts, 3..8).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn lagged_decorator() {
        let lagged = decorate(seasonal_naive(3).unwrap(), Decoration::Lagged { lag: 1 }).unwrap();
        let ts = TimeSeries::from_values(vec![5.0, 7.0, 9.0, 11.0]).unwrap();
        assert_eq!(rolling_forecast(&lagged, &ts, 2..4).unwrap(), vec![7.0, 9.0]);
        assert_eq!(lagged.predict_one(&[1.0, 2.0, 9.0]).unwrap(), 9.0);
        assert!(lagged.predict_one(&[]).is_err());
        assert!(decorate(seasonal_naive(1).unwrap(), Decoration::Lagged { lag: 0 }).is_err());
    }

    #[test]
    fn noisy_offsets_are_bounded_and_centred() {
        let noisy = decorate(
            decorate(seasonal_naive(1).unwrap(), Decoration::Zero).unwrap(),
            Decoration::Noisy {
                amplitude: 4.0,
                seed: 2024,
                distribution: NoiseDistribution::Uniform,
            },
        )
        .unwrap();
        let history = vec![0.0; 10_000];
        let offsets: Vec<f64> = (0..10_000)
            .map(|k| noisy.predict_one(&history[..k]).unwrap())
            .collect();
        assert!(offsets.iter().all(|o| (-4.0..=4.0).contains(o)));
        let mean = offsets.iter().sum::<f64>() / offsets.len() as f64;
        assert!(mean.abs() <= 0.15, "{mean}");
        // Distinct targets draw distinct offsets.
        assert_ne!(offsets[10], offsets[11]);
    }

    #[test]
    fn noisy_rolling_matches_single_steps() {
        let series: Vec<f64> = (0..30).map(|i| (i as f64 * 0.7).sin()).collect();
        let m = ExpertModel::SeasonalNaive(seasonal_naive(3).unwrap())
            .decorate(Decoration::Noisy {
                amplitude: 0.5,
                seed: 9,
                distribution: NoiseDistribution::Gaussian,
            })
            .unwrap();
        let batch = m.rolling(&series, 5..30).unwrap();
        for (k, t) in (5..30).enumerate() {
            assert_eq!(batch[k], m.predict_one(&series[..t]).unwrap());
        }
    }

    #[test]
    fn expert_json_round_trip() {
        let mut sarima = SarimaModel::zeros(SarimaConfig::default());
        sarima.ar = vec![0.123456789012345];
        sarima.sma = vec![-0.987654321];
        sarima.intercept = 1.0 / 3.0;
        let m = ExpertModel::Sarima(sarima)
            .decorate(Decoration::Noisy {
                amplitude: 2.5,
                seed: 3,
                distribution: NoiseDistribution::Uniform,
            })
            .unwrap();
        let text = serde_json::to_string(&m).unwrap();
        let back: ExpertModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }
}
