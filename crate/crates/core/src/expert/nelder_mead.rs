//! Derivative-free simplex minimisation (Nelder-Mead with the standard
//! reflection / expansion / contraction / shrink coefficients).

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_iterations: usize,
    /// Converged once `f_worst - f_best <= tolerance * (1 + |f_best|)`.
    pub tolerance: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Best objective value after each iteration.
    pub trace: Vec<f64>,
}

const ALPHA: f64 = 1.0;
const GAMMA: f64 = 2.0;
const RHO: f64 = 0.5;
const SIGMA: f64 = 0.5;

/// Minimises `f` starting from an axis-aligned simplex around `x0` with
/// per-coordinate offsets `steps`. Non-finite objective values are treated
/// as `+inf`, which lets callers reject infeasible points.
pub fn minimize<F>(mut f: F, x0: &[f64], steps: &[f64], opts: NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(x0.len(), steps.len(), "one step per coordinate");
    let n = x0.len();
    let mut eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += steps[i];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(x)).collect();
    let mut trace = Vec::new();

    if n == 0 {
        return Minimum {
            x: Vec::new(),
            value: values[0],
            iterations: 0,
            converged: true,
            trace,
        };
    }

    let mut order: Vec<usize> = (0..=n).collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];
        let (fl, fh) = (values[best], values[worst]);
        if fl.is_finite() && fh - fl <= opts.tolerance * (1.0 + fl.abs()) {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for &i in &order[..n] {
            for (c, v) in centroid.iter_mut().zip(&simplex[i]) {
                *c += v / n as f64;
            }
        }
        let toward = |coef: f64, from: &[f64]| -> Vec<f64> {
            centroid
                .iter()
                .zip(from)
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };

        let xr = toward(ALPHA, &simplex[worst]);
        let fr = eval(&xr);
        if fr < fl {
            let xe = toward(GAMMA, &simplex[worst]);
            let fe = eval(&xe);
            if fe < fr {
                simplex[worst] = xe;
                values[worst] = fe;
            } else {
                simplex[worst] = xr;
                values[worst] = fr;
            }
        } else if fr < values[second_worst] {
            simplex[worst] = xr;
            values[worst] = fr;
        } else {
            let (xc, fc) = if fr < fh {
                // Outside contraction: halfway from the centroid to the reflection.
                let xc: Vec<f64> = centroid
                    .iter()
                    .zip(&xr)
                    .map(|(c, r)| c + RHO * (r - c))
                    .collect();
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = toward(-RHO, &simplex[worst]);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < fr.min(fh) {
                simplex[worst] = xc;
                values[worst] = fc;
            } else {
                let anchor = simplex[best].clone();
                for &i in &order[1..] {
                    for (v, a) in simplex[i].iter_mut().zip(&anchor) {
                        *v = a + SIGMA * (*v - a);
                    }
                    values[i] = eval(&simplex[i]);
                }
            }
        }
        trace.push(values.iter().copied().fold(f64::INFINITY, f64::min));
    }

    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    Minimum {
        x: simplex[best].clone(),
        value: values[best],
        iterations,
        converged,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_quadratic_minimum() {
        let m = minimize(
            |x| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2),
            &[0.0, 0.0],
            &[0.5, 0.5],
            NelderMeadOptions::default(),
        );
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-3 && (m.x[1] + 2.0).abs() < 1e-3, "{:?}", m.x);
    }

    #[test]
    fn rosenbrock() {
        let m = minimize(
            |x| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2),
            &[-1.2, 1.0],
            &[0.1, 0.1],
            NelderMeadOptions {
                max_iterations: 5000,
                tolerance: 1e-14,
            },
        );
        assert!((m.x[0] - 1.0).abs() < 1e-3, "{:?}", m);
    }

    #[test]
    fn trace_is_non_increasing() {
        let m = minimize(
            |x| (x[0] * x[0] - 2.0).abs() + x[1].abs() + (x[2] - x[0]).powi(2),
            &[3.0, -1.0, 0.5],
            &[0.3, 0.3, 0.3],
            NelderMeadOptions::default(),
        );
        assert!(m.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn infeasible_region_is_avoided() {
        let m = minimize(
            |x| if x[0] < 0.5 { f64::NAN } else { (x[0] - 0.2).powi(2) },
            &[1.0],
            &[0.1],
            NelderMeadOptions::default(),
        );
        assert!(m.x[0] >= 0.5 && (m.x[0] - 0.5).abs() < 1e-3, "{:?}", m.x);
    }

    #[test]
    fn iteration_cap_reports_not_converged() {
        let m = minimize(
            |x| (x[0] - 10.0).powi(2),
            &[0.0],
            &[0.1],
            NelderMeadOptions {
                max_iterations: 1,
                tolerance: 1e-8,
            },
        );
        assert!(!m.converged);
        assert_eq!(m.iterations, 1);
    }
}
