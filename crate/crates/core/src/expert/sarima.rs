//! Seasonal ARIMA `(p, d, q)(P, D, Q)_s` estimated by conditional sum of
//! squares.
//!
//! With `w` the differenced series `(1 - B)^d (1 - B^s)^D x` the model is
//!
//! ```text
//! phi(B) Phi(B^s) (w_t - mu) = theta(B) Theta(B^s) e_t
//! phi(B) = 1 - sum ar_i B^i          theta(B) = 1 + sum ma_j B^j
//! Phi(B) = 1 - sum sar_i B^(i s)     Theta(B) = 1 + sum sma_j B^(j s)
//! ```
//!
//! Residuals are computed recursively from the first index where every AR
//! lag is observed, with pre-sample residuals fixed at zero.

use serde::{Deserialize, Serialize};

use super::nelder_mead::{self, NelderMeadOptions};
use crate::error::{KinnError, Result};
use crate::timeseries::{mean, population_std};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SarimaConfig {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    #[serde(rename = "P")]
    pub seasonal_p: usize,
    #[serde(rename = "D")]
    pub seasonal_d: usize,
    #[serde(rename = "Q")]
    pub seasonal_q: usize,
    /// Season length in samples.
    pub s: usize,
}

impl Default for SarimaConfig {
    /// `(1, 0, 1)(0, 1, 1)_48`: daily season of half-hour buckets.
    fn default() -> Self {
        Self {
            p: 1,
            d: 0,
            q: 1,
            seasonal_p: 0,
            seasonal_d: 1,
            seasonal_q: 1,
            s: 48,
        }
    }
}

impl SarimaConfig {
    pub fn arima(p: usize, d: usize, q: usize) -> Self {
        Self {
            p,
            d,
            q,
            seasonal_p: 0,
            seasonal_d: 0,
            seasonal_q: 0,
            s: 1,
        }
    }

    pub fn seasonal(mut self, sp: usize, sd: usize, sq: usize, s: usize) -> Self {
        self.seasonal_p = sp;
        self.seasonal_d = sd;
        self.seasonal_q = sq;
        self.s = s;
        self
    }

    fn is_seasonal(&self) -> bool {
        self.seasonal_p + self.seasonal_d + self.seasonal_q > 0
    }

    /// Observations lost to differencing.
    pub fn differencing_lag(&self) -> usize {
        self.d + self.seasonal_d * self.s
    }

    /// Largest lag of the expanded AR polynomial.
    pub fn ar_span(&self) -> usize {
        self.p + self.seasonal_p * self.s
    }

    pub fn ma_span(&self) -> usize {
        self.q + self.seasonal_q * self.s
    }

    /// Shortest history that yields a forecast.
    pub fn min_history(&self) -> usize {
        self.differencing_lag() + self.ar_span()
    }

    pub fn num_params(&self) -> usize {
        self.p + self.q + self.seasonal_p + self.seasonal_q + 1
    }

    pub fn validate(&self, train_len: usize) -> Result<()> {
        if self.is_seasonal() && self.s < 2 {
            return Err(KinnError::InvalidConfig(format!(
                "seasonal terms need a season length >= 2, got {}",
                self.s
            )));
        }
        let needed = self.differencing_lag() + self.p.max(self.seasonal_p * self.s);
        if needed >= train_len {
            return Err(KinnError::TooShort {
                needed: needed + 1,
                got: train_len,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub css: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SarimaModel {
    pub config: SarimaConfig,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub sar: Vec<f64>,
    pub sma: Vec<f64>,
    pub intercept: f64,
    pub residual_variance: f64,
    pub fit_metadata: FitMetadata,
}

/// Settings for [`fit_sarima`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            tolerance: 1e-8,
        }
    }
}

/// Result of a fit: the model plus the best-CSS trace of the optimiser.
#[derive(Debug, Clone)]
pub struct SarimaFit {
    pub model: SarimaModel,
    pub trace: Vec<f64>,
}

/// Coefficients of `(1 - B)^d (1 - B^s)^D`, lag 0 first.
pub fn differencing_polynomial(d: usize, seasonal_d: usize, s: usize) -> Vec<f64> {
    let mut poly = vec![1.0];
    let mul = |poly: &[f64], lag: usize| {
        let mut out = vec![0.0; poly.len() + lag];
        for (i, &c) in poly.iter().enumerate() {
            out[i] += c;
            out[i + lag] -= c;
        }
        out
    };
    for _ in 0..d {
        poly = mul(&poly, 1);
    }
    for _ in 0..seasonal_d {
        poly = mul(&poly, s);
    }
    poly
}

/// Applies the differencing polynomial; output index `u` corresponds to
/// input index `u + poly.len() - 1`.
pub fn difference(values: &[f64], poly: &[f64]) -> Vec<f64> {
    let lag = poly.len() - 1;
    if values.len() <= lag {
        return Vec::new();
    }
    (lag..values.len())
        .map(|t| poly.iter().enumerate().map(|(k, c)| c * values[t - k]).sum())
        .collect()
}

/// Stationarity of `x_t = sum coef_i x_{t-i} + ...` by stepping down to
/// reflection coefficients; all must lie strictly inside (-1, 1).
pub fn is_stationary(coef: &[f64]) -> bool {
    let mut a = coef.to_vec();
    while let Some(&k) = a.last() {
        if !k.is_finite() || k.abs() >= 1.0 {
            return false;
        }
        let m = a.len() - 1;
        let denom = 1.0 - k * k;
        let prev: Vec<f64> = (0..m).map(|j| (a[j] + k * a[m - 1 - j]) / denom).collect();
        a = prev;
    }
    true
}

/// Sparse lag structure of the expanded multiplicative polynomials.
#[derive(Debug, Clone)]
struct Expanded {
    /// `(lag, coefficient)` with `w_t - mu = sum coef (w_{t-lag} - mu) + ...`
    ar: Vec<(usize, f64)>,
    /// `(lag, coefficient)` with `... + e_t + sum coef e_{t-lag}`
    ma: Vec<(usize, f64)>,
    ar_span: usize,
}

fn expand(config: &SarimaConfig, ar: &[f64], ma: &[f64], sar: &[f64], sma: &[f64]) -> Expanded {
    let s = config.s;
    let mut ar_dense = vec![0.0; config.ar_span() + 1];
    let mut ar_used = vec![false; config.ar_span() + 1];
    // (1 - sum a_i B^i)(1 - sum A_j B^js) = 1 - [sum a_i B^i + sum A_j B^js - sum a_i A_j B^(i+js)]
    for (i, &a) in ar.iter().enumerate() {
        ar_dense[i + 1] += a;
        ar_used[i + 1] = true;
    }
    for (j, &sa) in sar.iter().enumerate() {
        ar_dense[(j + 1) * s] += sa;
        ar_used[(j + 1) * s] = true;
        for (i, &a) in ar.iter().enumerate() {
            ar_dense[i + 1 + (j + 1) * s] -= a * sa;
            ar_used[i + 1 + (j + 1) * s] = true;
        }
    }
    let mut ma_dense = vec![0.0; config.ma_span() + 1];
    let mut ma_used = vec![false; config.ma_span() + 1];
    for (i, &m) in ma.iter().enumerate() {
        ma_dense[i + 1] += m;
        ma_used[i + 1] = true;
    }
    for (j, &sm) in sma.iter().enumerate() {
        ma_dense[(j + 1) * s] += sm;
        ma_used[(j + 1) * s] = true;
        for (i, &m) in ma.iter().enumerate() {
            ma_dense[i + 1 + (j + 1) * s] += m * sm;
            ma_used[i + 1 + (j + 1) * s] = true;
        }
    }
    let sparse = |dense: Vec<f64>, used: Vec<bool>| {
        dense
            .into_iter()
            .zip(used)
            .enumerate()
            .filter(|(_, (_, u))| *u)
            .map(|(lag, (c, _))| (lag, c))
            .collect::<Vec<_>>()
    };
    Expanded {
        ar: sparse(ar_dense, ar_used),
        ma: sparse(ma_dense, ma_used),
        ar_span: config.ar_span(),
    }
}

impl Expanded {
    /// Mean-adjusted one-step prediction of `w[t]` from `w[..t]` and
    /// residuals `e[..t]`.
    #[inline]
    fn predict(&self, w: &[f64], e: &[f64], t: usize, mu: f64) -> f64 {
        let mut acc = mu;
        for &(lag, c) in &self.ar {
            acc += c * (w[t - lag] - mu);
        }
        for &(lag, c) in &self.ma {
            if lag <= t {
                acc += c * e[t - lag];
            }
        }
        acc
    }

    /// Fills `e` with CSS residuals of `w`; entries before `ar_span` stay 0.
    /// Returns the sum of squares and the number of terms.
    fn residuals(&self, w: &[f64], mu: f64, e: &mut Vec<f64>) -> (f64, usize) {
        e.clear();
        e.resize(w.len(), 0.0);
        let mut css = 0.0;
        for t in self.ar_span..w.len() {
            let r = w[t] - self.predict(w, e, t, mu);
            e[t] = r;
            css += r * r;
        }
        (css, w.len().saturating_sub(self.ar_span))
    }
}

struct Layout {
    p: usize,
    q: usize,
    sp: usize,
    sq: usize,
}

impl Layout {
    fn of(c: &SarimaConfig) -> Self {
        Self {
            p: c.p,
            q: c.q,
            sp: c.seasonal_p,
            sq: c.seasonal_q,
        }
    }

    fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64], &'a [f64], f64) {
        let (ar, rest) = x.split_at(self.p);
        let (ma, rest) = rest.split_at(self.q);
        let (sar, rest) = rest.split_at(self.sp);
        let (sma, rest) = rest.split_at(self.sq);
        (ar, ma, sar, sma, rest[0])
    }
}

/// Conditional-sum-of-squares fit with Nelder-Mead from a zero start, the
/// intercept starting at the mean of the differenced series. Iterates whose
/// AR or seasonal AR polynomial is not stationary score `+inf`.
///
/// Hitting the iteration cap is not an error: the best point is returned
/// with `fit_metadata.converged == false`.
pub fn fit_sarima(train: &[f64], config: SarimaConfig, opts: FitOptions) -> Result<SarimaFit> {
    config.validate(train.len())?;
    let poly = differencing_polynomial(config.d, config.seasonal_d, config.s);
    let w = difference(train, &poly);
    if w.len() <= config.ar_span() {
        return Err(KinnError::TooShort {
            needed: config.min_history() + 1,
            got: train.len(),
        });
    }
    let mu0 = mean(&w);
    let scale = population_std(&w);

    let layout = Layout::of(&config);
    let dim = config.num_params();
    let mut x0 = vec![0.0; dim];
    x0[dim - 1] = mu0;
    let mut steps = vec![0.1; dim];
    steps[dim - 1] = 0.1 * scale.max(1e-3);

    let mut scratch = Vec::with_capacity(w.len());
    let mut objective = |x: &[f64]| {
        let (ar, ma, sar, sma, mu) = layout.split(x);
        if !is_stationary(ar) || !is_stationary(sar) {
            return f64::INFINITY;
        }
        let ex = expand(&config, ar, ma, sar, sma);
        ex.residuals(&w, mu, &mut scratch).0
    };

    let start_value = objective(&x0);
    if !start_value.is_finite() {
        return Err(KinnError::NonFinite {
            block: "sarima residuals at the starting point".into(),
        });
    }

    // Restart the simplex around the incumbent until a restart stops
    // helping; a single Nelder-Mead run frequently stalls early.
    let mut best_x = x0;
    let mut best = start_value;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        let run = nelder_mead::minimize(
            &mut objective,
            &best_x,
            &steps,
            NelderMeadOptions {
                max_iterations: opts.max_iterations - iterations,
                tolerance: opts.tolerance,
            },
        );
        iterations += run.iterations;
        let improved = run.value < best;
        let improvement = best - run.value;
        for v in run.trace {
            trace.push(v.min(best));
        }
        if improved {
            best = run.value;
            best_x = run.x;
        }
        if !run.converged {
            break;
        }
        if !improved || improvement <= opts.tolerance * (1.0 + best.abs()) {
            converged = true;
            break;
        }
        for s in steps.iter_mut() {
            *s *= 0.5;
        }
    }

    let (ar, ma, sar, sma, mu) = layout.split(&best_x);
    if !is_stationary(ar) || !is_stationary(sar) || !best.is_finite() {
        return Err(KinnError::NonStationary(format!(
            "optimum ar={ar:?} sar={sar:?}"
        )));
    }
    let ex = expand(&config, ar, ma, sar, sma);
    let (css, terms) = ex.residuals(&w, mu, &mut Vec::new());
    let model = SarimaModel {
        config,
        ar: ar.to_vec(),
        ma: ma.to_vec(),
        sar: sar.to_vec(),
        sma: sma.to_vec(),
        intercept: mu,
        residual_variance: if terms > 0 { css / terms as f64 } else { 0.0 },
        fit_metadata: FitMetadata {
            css,
            iterations,
            converged,
        },
    };
    Ok(SarimaFit { model, trace })
}

impl SarimaModel {
    /// A model with every coefficient zero and no intercept.
    pub fn zeros(config: SarimaConfig) -> Self {
        Self {
            config,
            ar: vec![0.0; config.p],
            ma: vec![0.0; config.q],
            sar: vec![0.0; config.seasonal_p],
            sma: vec![0.0; config.seasonal_q],
            intercept: 0.0,
            residual_variance: 0.0,
            fit_metadata: FitMetadata {
                css: 0.0,
                iterations: 0,
                converged: true,
            },
        }
    }

    pub fn min_history(&self) -> usize {
        self.config.min_history()
    }

    fn check_shapes(&self) -> Result<()> {
        let c = &self.config;
        if self.ar.len() != c.p
            || self.ma.len() != c.q
            || self.sar.len() != c.seasonal_p
            || self.sma.len() != c.seasonal_q
        {
            return Err(KinnError::ShapeMismatch(
                "coefficient counts disagree with the model orders".into(),
            ));
        }
        Ok(())
    }

    /// One-step forecasts for each target `t` in `targets`, each using
    /// `series[..t]` only. Equivalent to calling [`Self::predict_one`] per
    /// target but runs the residual recursion once.
    pub fn forecast_range(&self, series: &[f64], targets: std::ops::Range<usize>) -> Result<Vec<f64>> {
        self.check_shapes()?;
        let needed = self.min_history();
        if targets.start < needed {
            return Err(KinnError::InsufficientHistory {
                needed,
                got: targets.start,
            });
        }
        if targets.end > series.len() + 1 {
            return Err(KinnError::TooShort {
                needed: targets.end - 1,
                got: series.len(),
            });
        }
        if targets.is_empty() {
            return Ok(Vec::new());
        }
        let poly = differencing_polynomial(self.config.d, self.config.seasonal_d, self.config.s);
        let lag = poly.len() - 1;
        // Differenced values up to the last observation any target can see.
        let last_seen = targets.end - 1;
        let w = difference(&series[..last_seen], &poly);
        let ex = expand(&self.config, &self.ar, &self.ma, &self.sar, &self.sma);
        let mu = self.intercept;

        let mut e = vec![0.0; w.len() + 1];
        for t in ex.ar_span..w.len() {
            let r = w[t] - ex.predict(&w, &e, t, mu);
            e[t] = r;
        }
        // `w` gets one slot of headroom so `predict` can index position `u`.
        let mut w_ext = w;
        w_ext.push(0.0);

        let mut out = Vec::with_capacity(targets.len());
        for t in targets {
            let u = t - lag;
            let w_hat = ex.predict(&w_ext, &e[..=u], u, mu);
            let undiff: f64 = poly[1..]
                .iter()
                .enumerate()
                .map(|(k, c)| c * series[t - 1 - k])
                .sum();
            out.push(w_hat - undiff);
        }
        Ok(out)
    }

    /// One-step-ahead forecast of the value following `history`.
    pub fn predict_one(&self, history: &[f64]) -> Result<f64> {
        let n = history.len();
        if n < self.min_history() {
            return Err(KinnError::InsufficientHistory {
                needed: self.min_history(),
                got: n,
            });
        }
        Ok(self.forecast_range(history, n..n + 1)?[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn differencing_polynomials() {
        assert_eq!(differencing_polynomial(0, 0, 1), vec![1.0]);
        assert_eq!(differencing_polynomial(1, 0, 1), vec![1.0, -1.0]);
        assert_eq!(differencing_polynomial(2, 0, 1), vec![1.0, -2.0, 1.0]);
        assert_eq!(
            differencing_polynomial(1, 1, 3),
            vec![1.0, -1.0, 0.0, -1.0, 1.0]
        );
        let x = [1.0, 4.0, 9.0, 16.0];
        assert_eq!(difference(&x, &[1.0, -1.0]), vec![3.0, 5.0, 7.0]);
    }

    #[test]
    fn stationarity_checks() {
        assert!(is_stationary(&[]));
        assert!(is_stationary(&[0.8]));
        assert!(!is_stationary(&[1.0]));
        assert!(!is_stationary(&[-1.2]));
        // AR(2) triangle: a2 in (-1,1), a1 + a2 < 1, a2 - a1 < 1.
        assert!(is_stationary(&[0.5, 0.3]));
        assert!(!is_stationary(&[0.7, 0.4]));
        assert!(!is_stationary(&[-0.7, 0.4]));
        assert!(is_stationary(&[1.2, -0.5]));
    }

    #[test]
    fn expansion_matches_dense_product() {
        let cfg = SarimaConfig::arima(1, 0, 1).seasonal(1, 0, 1, 4);
        let ex = expand(&cfg, &[0.5], &[0.3], &[0.2], &[-0.4]);
        assert_eq!(ex.ar, vec![(1, 0.5), (4, 0.2), (5, -0.1)]);
        let ma: Vec<(usize, f64)> = ex.ma.iter().map(|&(l, c)| (l, (c * 1e12).round() / 1e12)).collect();
        assert_eq!(ma, vec![(1, 0.3), (4, -0.4), (5, -0.12)]);
    }

    #[test]
    fn zero_model_predicts_zero() {
        let m = SarimaModel::zeros(SarimaConfig::arima(2, 0, 1));
        assert_eq!(m.predict_one(&[3.0, -1.0, 7.5]).unwrap(), 0.0);
        assert_eq!(m.predict_one(&[100.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn random_walk_forecast_is_last_value() {
        let m = SarimaModel::zeros(SarimaConfig::arima(0, 1, 0));
        assert_eq!(m.predict_one(&[3.0, -1.0, 7.5]).unwrap(), 7.5);
    }

    #[test]
    fn seasonal_persistence() {
        let m = SarimaModel::zeros(SarimaConfig::arima(0, 0, 0).seasonal(0, 1, 0, 4));
        let h = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(m.predict_one(&h).unwrap(), 3.0);
        assert!(matches!(
            m.predict_one(&h[..3]),
            Err(KinnError::InsufficientHistory { needed: 4, got: 3 })
        ));
    }

    #[test]
    fn hand_computed_arma_forecast() {
        // x_t - 1 = 0.5 (x_{t-1} - 1) + e_t + 0.2 e_{t-1}
        let mut m = SarimaModel::zeros(SarimaConfig::arima(1, 0, 1));
        m.ar = vec![0.5];
        m.ma = vec![0.2];
        m.intercept = 1.0;
        let h = [2.0, 0.0, 3.0];
        // e_1 = (0-1) - 0.5 (2-1) - 0.2*0 = -1.5
        // e_2 = (3-1) - 0.5 (0-1) - 0.2*(-1.5) = 2.8
        // forecast = 1 + 0.5 (3-1) + 0.2 * 2.8 = 2.56
        let f = m.predict_one(&h).unwrap();
        assert!((f - 2.56).abs() < 1e-12, "{f}");
    }

    #[test]
    fn range_forecast_matches_single_steps() {
        let cfg = SarimaConfig::arima(1, 1, 1).seasonal(1, 1, 1, 5);
        let mut m = SarimaModel::zeros(cfg);
        m.ar = vec![0.3];
        m.ma = vec![-0.2];
        m.sar = vec![0.1];
        m.sma = vec![0.4];
        m.intercept = 0.05;
        let series: Vec<f64> = (0..60).map(|i| ((i * 7 % 11) as f64).sin() + i as f64 * 0.1).collect();
        let start = m.min_history();
        let batch = m.forecast_range(&series, start..series.len()).unwrap();
        for (k, t) in (start..series.len()).enumerate() {
            assert_eq!(batch[k], m.predict_one(&series[..t]).unwrap());
        }
    }

    #[test]
    fn config_validation() {
        let bad = SarimaConfig::arima(0, 0, 0).seasonal(0, 1, 0, 1);
        assert!(bad.validate(100).is_err());
        let long = SarimaConfig::default();
        assert!(matches!(long.validate(40), Err(KinnError::TooShort { .. })));
        assert!(long.validate(500).is_ok());
    }

    #[test]
    fn exact_seasonality_is_annihilated() {
        let s = 6;
        let pattern = [1.0, 4.0, 9.0, 3.0, 0.5, 2.0];
        let series: Vec<f64> = (0..300).map(|i| pattern[i % s]).collect();
        let cfg = SarimaConfig::arima(0, 0, 0).seasonal(0, 1, 1, s);
        let fit = fit_sarima(&series, cfg, FitOptions::default()).unwrap();
        assert!(fit.model.residual_variance < 1e-12, "{:?}", fit.model);
        let next = fit.model.predict_one(&series).unwrap();
        assert!((next - pattern[300 % s]).abs() < 1e-6);
    }
}
