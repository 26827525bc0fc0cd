//! Central finite differences of the batch MSE, for checking the analytic
//! gradient. Uses only the forward pass.

use super::{mse_loss, Batch, Network};
use crate::error::Result;

/// Gradient of `mse(net(batch), targets)` by central differences with step
/// `h`, flattened in `NetworkParams::to_flat` order.
pub fn numerical_gradient(net: &Network, batch: &Batch, targets: &[f64], h: f64) -> Result<Vec<f64>> {
    let base = net.params.to_flat();
    let mut probe = net.clone();
    let mut flat = base.clone();
    let mut out = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        flat[i] = base[i] + h;
        probe.params.set_flat(&flat)?;
        let plus = mse_loss(&probe.forward(batch)?, targets)?;
        flat[i] = base[i] - h;
        probe.params.set_flat(&flat)?;
        let minus = mse_loss(&probe.forward(batch)?, targets)?;
        flat[i] = base[i];
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(out)
}

/// Largest `|a - n| / max(|a|, |n|, floor)` over all entries. The floor
/// keeps near-zero gradients from turning rounding noise into huge ratios.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
