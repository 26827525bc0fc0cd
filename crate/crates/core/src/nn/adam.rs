use serde::{Deserialize, Serialize};

use super::NetworkParams;
use crate::error::{KinnError, Result};

/// Adam moments and hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: NetworkParams,
    pub v: NetworkParams,
    pub step: u64,
    pub hyper: AdamHyper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamState {
    pub fn new(params: &NetworkParams, hyper: AdamHyper) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
            hyper,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut NetworkParams, grads: &NetworkParams, state: &mut AdamState) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.m) {
        return Err(KinnError::ShapeMismatch(
            "parameters, gradients and moments differ in shape".into(),
        ));
    }
    state.step += 1;
    let AdamHyper {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.hyper;
    let bc1 = 1.0 - beta1.powi(state.step as i32);
    let bc2 = 1.0 - beta2.powi(state.step as i32);

    let blocks = params
        .blocks_mut()
        .into_iter()
        .zip(grads.blocks())
        .zip(state.m.blocks_mut())
        .zip(state.v.blocks_mut());
    for ((((_, p), (_, g)), (_, m)), (_, v)) in blocks {
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, NetworkConfig};

    fn params() -> NetworkParams {
        init_params(&NetworkConfig::with_widths(1, &[2], 4)).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut p = params();
        let before = p.clone();
        let mut state = AdamState::new(&p, AdamHyper::default());
        let zero = p.zeros_like();
        adam_step(&mut p, &zero, &mut state).unwrap();
        assert_eq!(p, before);
        assert_eq!(state.step, 1);

        let mut g = p.zeros_like();
        g.fill(0.5);
        adam_step(&mut p, &g, &mut state).unwrap();
        let m_before = state.m.to_flat();
        let zero = p.zeros_like();
        adam_step(&mut p, &zero, &mut state).unwrap();
        for (after, before) in state.m.to_flat().iter().zip(&m_before) {
            assert!((after - 0.9 * before).abs() < 1e-15);
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = params();
        let before = p.to_flat();
        let mut g = p.zeros_like();
        let flat: Vec<f64> = (0..g.len()).map(|i| if i % 2 == 0 { 3.0 } else { -0.02 }).collect();
        g.set_flat(&flat).unwrap();
        let mut state = AdamState::new(&p, AdamHyper::default());
        adam_step(&mut p, &g, &mut state).unwrap();
        for ((a, b), gi) in p.to_flat().iter().zip(&before).zip(&flat) {
            let expected = -1e-3 * gi.signum();
            assert!(((a - b) - expected).abs() < 1e-9, "{} vs {expected}", a - b);
        }
    }

    #[test]
    fn deterministic() {
        let p0 = params();
        let mut g = p0.zeros_like();
        g.fill(0.1);
        let run = || {
            let mut p = p0.clone();
            let mut s = AdamState::new(&p, AdamHyper::default());
            adam_step(&mut p, &g, &mut s).unwrap();
            (p, s)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch() {
        let mut p = params();
        let other = init_params(&NetworkConfig::with_widths(1, &[3], 4)).unwrap();
        let mut state = AdamState::new(&p, AdamHyper::default());
        assert!(adam_step(&mut p, &other, &mut state).is_err());
    }
}
