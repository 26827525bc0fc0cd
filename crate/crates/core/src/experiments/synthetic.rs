use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{KinnError, Result};
use crate::timeseries::TimeSeries;

/// Seasonal traffic-like series: a rectified sinusoid plus AR(1) noise
/// whose standard deviation grows with the seasonal level, clipped at 0.
///
/// ```text
/// base_t  = amplitude * max(0, sin(2 pi t / s))
/// z_t     = ar * z_{t-1} + sqrt(1 - ar^2) * eps_t
/// sigma_t = noise_std * (1 + peak_factor * base_t / amplitude)
/// x_t     = max(0, base_t + sigma_t * z_t)
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub length: usize,
    pub season: usize,
    pub amplitude: f64,
    pub ar: f64,
    pub noise_std: f64,
    pub peak_factor: f64,
    pub seed: u64,
    /// Timestamp of the first sample, seconds since the epoch.
    pub start_time: i64,
    /// Spacing between samples in seconds.
    pub interval: i64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            length: 8000,
            season: 48,
            amplitude: 20.0,
            ar: 0.95,
            noise_std: 3.0,
            peak_factor: 1.0,
            seed: 0,
            start_time: 0,
            interval: 1800,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(KinnError::InvalidConfig(msg));
        if self.length == 0 {
            return bad("synthetic length must be positive".into());
        }
        if self.season == 0 {
            return bad("season length must be positive".into());
        }
        if !(self.ar > -1.0 && self.ar < 1.0) {
            return bad(format!("AR coefficient {} must lie in (-1, 1)", self.ar));
        }
        for (name, v) in [
            ("amplitude", self.amplitude),
            ("noise_std", self.noise_std),
            ("peak_factor", self.peak_factor),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be finite and non-negative"));
            }
        }
        if self.interval <= 0 {
            return bad(format!("interval {} must be positive", self.interval));
        }
        Ok(())
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<TimeSeries> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let innovation = (1.0 - spec.ar * spec.ar).sqrt();
    // Start the AR state in its stationary distribution.
    let mut z: f64 = StandardNormal.sample(&mut rng);
    let mut values = Vec::with_capacity(spec.length);
    for t in 0..spec.length {
        if t > 0 {
            let eps: f64 = StandardNormal.sample(&mut rng);
            z = spec.ar * z + innovation * eps;
        }
        let phase = 2.0 * PI * (t % spec.season) as f64 / spec.season as f64;
        let base = spec.amplitude * phase.sin().max(0.0);
        let level = if spec.amplitude > 0.0 { base / spec.amplitude } else { 0.0 };
        let sigma = spec.noise_std * (1.0 + spec.peak_factor * level);
        values.push((base + sigma * z).max(0.0));
    }
    TimeSeries::new(spec.start_time, spec.interval, values)
}
