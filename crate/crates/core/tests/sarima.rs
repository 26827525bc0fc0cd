use kinn_core::expert::{fit_sarima, simulate_arma, FitOptions, SarimaConfig};

fn arma(p: usize, q: usize) -> SarimaConfig {
    SarimaConfig {
        p,
        d: 0,
        q,
        seasonal_p: 0,
        seasonal_d: 0,
        seasonal_q: 0,
        s: 1,
    }
}

#[test]
fn recovers_ar1() {
    for seed in 0..5 {
        let ts = simulate_arma(&[0.8], &[], 0.0, 2000, 1.0, seed).unwrap();
        let model = fit_sarima(&ts.values, arma(1, 0), FitOptions::default()).unwrap().model;
        assert!((model.ar[0] - 0.8).abs() <= 0.05, "seed {seed}: {}", model.ar[0]);
        assert!(model.fit_metadata.converged);
    }
}

#[test]
fn recovers_ma1() {
    for seed in 0..5 {
        let ts = simulate_arma(&[], &[0.5], 0.0, 2000, 1.0, seed).unwrap();
        let model = fit_sarima(&ts.values, arma(0, 1), FitOptions::default()).unwrap().model;
        assert!((model.ma[0] - 0.5).abs() <= 0.08, "seed {seed}: {}", model.ma[0]);
    }
}

#[test]
fn recovers_intercept_and_noise_level() {
    let ts = simulate_arma(&[0.5], &[], 4.0, 3000, 2.0, 3).unwrap();
    let model = fit_sarima(&ts.values, arma(1, 0), FitOptions::default()).unwrap().model;
    assert!((model.ar[0] - 0.5).abs() <= 0.05);
    // The intercept is the process mean.
    assert!((model.intercept - 4.0).abs() < 0.3, "{}", model.intercept);
    assert!((model.residual_variance - 4.0).abs() < 0.4, "{}", model.residual_variance);
}
