use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::sarima::is_stationary;
use crate::error::{KinnError, Result};
use crate::timeseries::TimeSeries;

/// Simulates `x_t - mu = sum ar_i (x_{t-i} - mu) + e_t + sum ma_j e_{t-j}`
/// with Gaussian innovations of standard deviation `noise_std`.
///
/// The first `10 * (len(ar) + len(ma) + 1)` samples are discarded as
/// burn-in. The returned series has unit spacing.
pub fn simulate_arma(
    ar: &[f64],
    ma: &[f64],
    intercept: f64,
    n: usize,
    noise_std: f64,
    seed: u64,
) -> Result<TimeSeries> {
    if !is_stationary(ar) {
        return Err(KinnError::NonStationary(format!("ar = {ar:?}")));
    }
    if n == 0 {
        return Err(KinnError::EmptyInput("cannot simulate zero samples".into()));
    }
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(KinnError::InvalidConfig(format!("noise_std = {noise_std}")));
    }
    let burn_in = 10 * (ar.len() + ma.len() + 1);
    let total = n + burn_in;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut dev = vec![0.0; total];
    let mut eps = vec![0.0; total];
    for t in 0..total {
        let e = noise_std * normal.sample(&mut rng);
        eps[t] = e;
        let mut v = e;
        for (i, &a) in ar.iter().enumerate() {
            if t > i {
                v += a * dev[t - 1 - i];
            }
        }
        for (j, &m) in ma.iter().enumerate() {
            if t > j {
                v += m * eps[t - 1 - j];
            }
        }
        dev[t] = v;
    }
    TimeSeries::from_values(dev[burn_in..].iter().map(|d| d + intercept).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::acf;

    #[test]
    fn white_noise_mean() {
        let ts = simulate_arma(&[], &[], 0.0, 10_000, 1.0, 7).unwrap();
        assert_eq!(ts.len(), 10_000);
        let m = ts.mean();
        assert!(m.abs() < 0.05, "{m}");
    }

    #[test]
    fn ar1_lag_one_autocorrelation() {
        let ts = simulate_arma(&[0.8], &[], 0.0, 10_000, 1.0, 11).unwrap();
        let r = acf(&ts.values, 1).unwrap()[1];
        assert!((0.76..=0.84).contains(&r), "{r}");
    }

    #[test]
    fn zero_noise_is_zero() {
        let ts = simulate_arma(&[0.5], &[0.3], 0.0, 50, 0.0, 1).unwrap();
        assert!(ts.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_explosive_ar() {
        assert!(matches!(
            simulate_arma(&[1.1], &[], 0.0, 10, 1.0, 1),
            Err(KinnError::NonStationary(_))
        ));
    }

    #[test]
    fn seeded() {
        let a = simulate_arma(&[0.3], &[0.2], 1.0, 100, 1.0, 5).unwrap();
        let b = simulate_arma(&[0.3], &[0.2], 1.0, 100, 1.0, 5).unwrap();
        let c = simulate_arma(&[0.3], &[0.2], 1.0, 100, 1.0, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
