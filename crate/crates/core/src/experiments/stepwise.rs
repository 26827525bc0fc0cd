use serde::{Deserialize, Serialize};

use crate::error::{KinnError, Result};

/// Default closeness threshold, in original units.
pub const NEAR_TIE_THRESHOLD: f64 = 1.5;

/// How often one model's absolute error beats or nearly matches another's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepwiseComparison {
    /// Fraction of steps where the first model's error is strictly larger.
    pub exceed: f64,
    /// Fraction of steps where the two errors differ by less than the
    /// threshold.
    pub near_tie: f64,
    pub threshold: f64,
    pub steps: usize,
}

/// Compares `errors` against `comparator` step by step. Ties are not
/// exceedances.
pub fn stepwise_analysis(errors: &[f64], comparator: &[f64], threshold: f64) -> Result<StepwiseComparison> {
    if errors.len() != comparator.len() {
        return Err(KinnError::Misaligned {
            expected: errors.len(),
            got: comparator.len(),
        });
    }
    if errors.is_empty() {
        return Err(KinnError::EmptyInput("no steps to compare".into()));
    }
    let mut exceed = 0usize;
    let mut close = 0usize;
    for (a, b) in errors.iter().zip(comparator) {
        if a > b {
            exceed += 1;
        }
        if (a - b).abs() < threshold {
            close += 1;
        }
    }
    let n = errors.len() as f64;
    Ok(StepwiseComparison {
        exceed: exceed as f64 / n,
        near_tie: close as f64 / n,
        threshold,
        steps: errors.len(),
    })
}

pub fn absolute_errors(predictions: &[f64], truth: &[f64]) -> Vec<f64> {
    predictions.iter().zip(truth).map(|(p, t)| (p - t).abs()).collect()
}

pub fn mse(predictions: &[f64], truth: &[f64]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(KinnError::Misaligned {
            expected: truth.len(),
            got: predictions.len(),
        });
    }
    if truth.is_empty() {
        return Err(KinnError::EmptyInput("no predictions to score".into()));
    }
    let sum: f64 = predictions.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / truth.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strictly_better_everywhere() {
        let c = stepwise_analysis(&[0.1, 0.2], &[1.0, 1.0], NEAR_TIE_THRESHOLD).unwrap();
        assert_eq!(c.exceed, 0.0);
    }

    #[test]
    fn ties_do_not_count() {
        let c = stepwise_analysis(&[1.0, 2.0], &[1.0, 2.0], NEAR_TIE_THRESHOLD).unwrap();
        assert_eq!(c.exceed, 0.0);
        assert_eq!(c.near_tie, 1.0);
    }

    #[test]
    fn half_exceed() {
        let c = stepwise_analysis(&[1.0, 3.0], &[2.0, 2.0], NEAR_TIE_THRESHOLD).unwrap();
        assert_eq!(c.exceed, 0.5);
    }

    #[test]
    fn near_tie_is_strict() {
        let c = stepwise_analysis(&[0.0, 0.0], &[1.5, 1.0], 1.5).unwrap();
        assert_eq!(c.near_tie, 0.5);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            stepwise_analysis(&[1.0], &[1.0, 2.0], 1.5),
            Err(KinnError::Misaligned { .. })
        ));
        assert!(mse(&[1.0], &[]).is_err());
    }

    #[test]
    fn mse_by_hand() {
        assert_eq!(mse(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 2.5);
    }
}
