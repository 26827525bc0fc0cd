//! Stacked LSTM regressor with a dense head, written out by hand:
//! forward pass, backpropagation through time, Adam and a training loop
//! with validation-based snapshot selection.
//!
//! Everything runs in `f64` and reduces over the batch in row order, so a
//! given configuration, dataset and seed always produce the same bits.

mod adam;
mod checkpoint;
pub mod gradcheck;
mod train;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KinnError, Result};
use crate::timeseries::WindowedDataset;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use train::{evaluate_loss, train, TrainOptions, TrainReport};

/// Output activation applied to a layer's hidden-state sequence. Gate
/// nonlinearities inside the cell are always sigmoid / tanh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    #[inline]
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub input_channels: usize,
    pub layer_widths: Vec<usize>,
    pub activations: Vec<Activation>,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self::with_widths(1, &[64, 64, 64], 0)
    }
}

impl NetworkConfig {
    /// First layer sigmoid, the rest ReLU.
    pub fn with_widths(input_channels: usize, widths: &[usize], seed: u64) -> Self {
        let activations = (0..widths.len())
            .map(|i| if i == 0 { Activation::Sigmoid } else { Activation::Relu })
            .collect();
        Self {
            input_channels,
            layer_widths: widths.to_vec(),
            activations,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 {
            return Err(KinnError::InvalidConfig("input_channels must be >= 1".into()));
        }
        if self.layer_widths.is_empty() || self.layer_widths.contains(&0) {
            return Err(KinnError::InvalidConfig(
                "need at least one layer and every width > 0".into(),
            ));
        }
        if self.activations.len() != self.layer_widths.len() {
            return Err(KinnError::InvalidConfig(format!(
                "{} activations for {} layers",
                self.activations.len(),
                self.layer_widths.len()
            )));
        }
        Ok(())
    }
}

/// One LSTM layer. `weights` is `4H x (I + H)` row-major with gate blocks
/// in the order input, forget, output, candidate; columns are the layer
/// input followed by the previous hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub input_size: usize,
    pub hidden: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LstmLayer {
    fn zeros(input_size: usize, hidden: usize) -> Self {
        Self {
            input_size,
            hidden,
            weights: vec![0.0; 4 * hidden * (input_size + hidden)],
            bias: vec![0.0; 4 * hidden],
        }
    }

    fn cols(&self) -> usize {
        self.input_size + self.hidden
    }
}

pub const GATE_INPUT: usize = 0;
pub const GATE_FORGET: usize = 1;
pub const GATE_OUTPUT: usize = 2;
pub const GATE_CANDIDATE: usize = 3;

/// All trainable parameters. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub layers: Vec<LstmLayer>,
    pub head_weights: Vec<f64>,
    /// Single element.
    pub head_bias: Vec<f64>,
}

impl NetworkParams {
    pub fn zeros(config: &NetworkConfig) -> Self {
        let mut layers = Vec::with_capacity(config.layer_widths.len());
        let mut input = config.input_channels;
        for &h in &config.layer_widths {
            layers.push(LstmLayer::zeros(input, h));
            input = h;
        }
        Self {
            layers,
            head_weights: vec![0.0; input],
            head_bias: vec![0.0],
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        out.fill(0.0);
        out
    }

    pub fn fill(&mut self, v: f64) {
        for (_, block) in self.blocks_mut() {
            block.fill(v);
        }
    }

    /// Parameter blocks in checkpoint order: per layer weights then bias,
    /// then the head weights and bias.
    pub fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::with_capacity(2 * self.layers.len() + 2);
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("lstm{l}.weights"), &layer.weights));
            out.push((format!("lstm{l}.bias"), &layer.bias));
        }
        out.push(("head.weights".into(), &self.head_weights));
        out.push(("head.bias".into(), &self.head_bias));
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::with_capacity(2 * self.layers.len() + 2);
        for (l, layer) in self.layers.iter_mut().enumerate() {
            out.push((format!("lstm{l}.weights"), &mut layer.weights));
            out.push((format!("lstm{l}.bias"), &mut layer.bias));
        }
        out.push(("head.weights".into(), &mut self.head_weights));
        out.push(("head.bias".into(), &mut self.head_bias));
        out
    }

    pub fn len(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks().into_iter().flat_map(|(_, b)| b.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.len() {
            return Err(KinnError::ShapeMismatch(format!(
                "{} values for {} parameters",
                flat.len(),
                self.len()
            )));
        }
        let mut off = 0;
        for (_, block) in self.blocks_mut() {
            block.copy_from_slice(&flat[off..off + block.len()]);
            off += block.len();
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &NetworkParams) -> bool {
        let a = self.blocks();
        let b = other.blocks();
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.1.len() == y.1.len())
    }

    /// Name of the first block holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<String> {
        self.blocks()
            .into_iter()
            .find(|(_, b)| b.iter().any(|v| !v.is_finite()))
            .map(|(name, _)| name)
    }

    fn add_assign(&mut self, other: &NetworkParams) {
        for ((_, a), (_, b)) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Glorot-uniform weights (each gate matrix bounded separately), zero
/// biases except the forget gate at 1.0, zero head bias.
pub fn init_params(config: &NetworkConfig) -> Result<NetworkParams> {
    config.validate()?;
    let mut params = NetworkParams::zeros(config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for layer in &mut params.layers {
        let (i, h) = (layer.input_size, layer.hidden);
        let bound = (6.0 / (i + h + h) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        for w in layer.weights.iter_mut() {
            *w = dist.sample(&mut rng);
        }
        layer.bias[GATE_FORGET * h..(GATE_FORGET + 1) * h].fill(1.0);
    }
    let fan_in = params.head_weights.len();
    let bound = (6.0 / (fan_in + 1) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    for w in params.head_weights.iter_mut() {
        *w = dist.sample(&mut rng);
    }
    Ok(params)
}

/// Borrowed `rows x seq_len x channels` input block.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub inputs: &'a [f64],
    pub seq_len: usize,
    pub channels: usize,
}

impl<'a> Batch<'a> {
    pub fn new(inputs: &'a [f64], seq_len: usize, channels: usize) -> Result<Self> {
        let stride = seq_len * channels;
        if stride == 0 || !inputs.len().is_multiple_of(stride) {
            return Err(KinnError::ShapeMismatch(format!(
                "{} inputs do not divide into rows of {seq_len} x {channels}",
                inputs.len()
            )));
        }
        Ok(Self {
            inputs,
            seq_len,
            channels,
        })
    }

    pub fn rows(&self) -> usize {
        self.inputs.len() / (self.seq_len * self.channels)
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        let s = self.seq_len * self.channels;
        &self.inputs[i * s..(i + 1) * s]
    }
}

impl<'a> From<&'a WindowedDataset> for Batch<'a> {
    fn from(ds: &'a WindowedDataset) -> Self {
        Batch {
            inputs: &ds.inputs,
            seq_len: ds.seq_len,
            channels: ds.channels,
        }
    }
}

/// Per-layer activations kept for the backward pass.
#[derive(Debug, Clone, Default)]
struct LayerCache {
    /// `T x (I + H)`: the layer input and previous hidden state per step.
    concat: Vec<f64>,
    /// `T x 4H` gate activations.
    gates: Vec<f64>,
    /// `(T + 1) x H`, row 0 is the zero initial state.
    cell: Vec<f64>,
    /// `T x H`
    tanh_cell: Vec<f64>,
    /// `T x H` raw hidden state.
    hidden: Vec<f64>,
    /// `T x H` hidden state after the output activation.
    out: Vec<f64>,
}

/// Scratch space for one sequence; reused across rows.
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    layers: Vec<LayerCache>,
    d_out: Vec<f64>,
    d_below: Vec<f64>,
    dz: Vec<f64>,
    dh_next: Vec<f64>,
    dc_next: Vec<f64>,
    d_concat: Vec<f64>,
}

/// Configuration plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: NetworkConfig,
    pub params: NetworkParams,
}

impl Network {
    pub fn new(config: NetworkConfig) -> Result<Self> {
        let params = init_params(&config)?;
        Ok(Self { config, params })
    }

    pub fn from_parts(config: NetworkConfig, params: NetworkParams) -> Result<Self> {
        config.validate()?;
        if !params.same_shape(&NetworkParams::zeros(&config)) {
            return Err(KinnError::ShapeMismatch(
                "parameters do not match the network configuration".into(),
            ));
        }
        Ok(Self { config, params })
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.channels != self.config.input_channels {
            return Err(KinnError::ShapeMismatch(format!(
                "batch has {} channels, network expects {}",
                batch.channels, self.config.input_channels
            )));
        }
        Ok(())
    }

    /// Forward pass for one sequence, filling `ws` for a later backward.
    fn forward_row(&self, row: &[f64], seq_len: usize, ws: &mut Workspace) -> f64 {
        let params = &self.params;
        if ws.layers.len() != params.layers.len() {
            ws.layers = vec![LayerCache::default(); params.layers.len()];
        }
        for (l, layer) in params.layers.iter().enumerate() {
            let (inp, h) = (layer.input_size, layer.hidden);
            let cols = layer.cols();
            let (below, rest) = ws.layers.split_at_mut(l);
            let cache = &mut rest[0];
            cache.concat.resize(seq_len * cols, 0.0);
            cache.gates.resize(seq_len * 4 * h, 0.0);
            cache.cell.resize((seq_len + 1) * h, 0.0);
            cache.cell[..h].fill(0.0);
            cache.tanh_cell.resize(seq_len * h, 0.0);
            cache.hidden.resize(seq_len * h, 0.0);
            cache.out.resize(seq_len * h, 0.0);
            let act = self.config.activations[l];

            for t in 0..seq_len {
                // Assemble [x_t ; h_{t-1}].
                let concat_t = &mut cache.concat[t * cols..(t + 1) * cols];
                if l == 0 {
                    concat_t[..inp].copy_from_slice(&row[t * inp..(t + 1) * inp]);
                } else {
                    concat_t[..inp].copy_from_slice(&below[l - 1].out[t * inp..(t + 1) * inp]);
                }
                if t == 0 {
                    concat_t[inp..].fill(0.0);
                } else {
                    concat_t[inp..].copy_from_slice(&cache.hidden[(t - 1) * h..t * h]);
                }

                let gates = &mut cache.gates[t * 4 * h..(t + 1) * 4 * h];
                for (r, g) in gates.iter_mut().enumerate() {
                    let w = &layer.weights[r * cols..(r + 1) * cols];
                    let mut z = layer.bias[r];
                    for (a, b) in w.iter().zip(concat_t.iter()) {
                        z += a * b;
                    }
                    *g = if r / h == GATE_CANDIDATE { z.tanh() } else { sigmoid(z) };
                }
                for k in 0..h {
                    let i_g = gates[GATE_INPUT * h + k];
                    let f_g = gates[GATE_FORGET * h + k];
                    let o_g = gates[GATE_OUTPUT * h + k];
                    let g_g = gates[GATE_CANDIDATE * h + k];
                    let c = f_g * cache.cell[t * h + k] + i_g * g_g;
                    let tc = c.tanh();
                    let hv = o_g * tc;
                    cache.cell[(t + 1) * h + k] = c;
                    cache.tanh_cell[t * h + k] = tc;
                    cache.hidden[t * h + k] = hv;
                    cache.out[t * h + k] = act.apply(hv);
                }
            }
        }
        let top = ws.layers.last().expect("at least one layer");
        let h = params.head_weights.len();
        let last = &top.out[(seq_len - 1) * h..seq_len * h];
        params.head_bias[0]
            + params
                .head_weights
                .iter()
                .zip(last)
                .map(|(w, a)| w * a)
                .sum::<f64>()
    }

    /// Accumulates into `grads` the gradient of `d_pred * prediction` for
    /// the sequence whose forward pass is cached in `ws`.
    fn backward_row(&self, seq_len: usize, d_pred: f64, ws: &mut Workspace, grads: &mut NetworkParams) {
        let params = &self.params;
        let n_layers = params.layers.len();
        let top_h = params.head_weights.len();

        // Head.
        {
            let top = &ws.layers[n_layers - 1];
            let last = &top.out[(seq_len - 1) * top_h..seq_len * top_h];
            for (g, a) in grads.head_weights.iter_mut().zip(last) {
                *g += d_pred * a;
            }
            grads.head_bias[0] += d_pred;
        }
        ws.d_out.clear();
        ws.d_out.resize(seq_len * top_h, 0.0);
        for (k, w) in params.head_weights.iter().enumerate() {
            ws.d_out[(seq_len - 1) * top_h + k] = d_pred * w;
        }

        for l in (0..n_layers).rev() {
            let layer = &params.layers[l];
            let glayer = &mut grads.layers[l];
            let (inp, h) = (layer.input_size, layer.hidden);
            let cols = layer.cols();
            let act = self.config.activations[l];
            let cache = &ws.layers[l];

            ws.d_below.clear();
            ws.d_below.resize(seq_len * inp, 0.0);
            ws.dh_next.clear();
            ws.dh_next.resize(h, 0.0);
            ws.dc_next.clear();
            ws.dc_next.resize(h, 0.0);
            ws.dz.resize(4 * h, 0.0);
            ws.d_concat.resize(cols, 0.0);

            for t in (0..seq_len).rev() {
                let gates = &cache.gates[t * 4 * h..(t + 1) * 4 * h];
                let c_prev = &cache.cell[t * h..(t + 1) * h];
                for k in 0..h {
                    let hv = cache.hidden[t * h + k];
                    let y = cache.out[t * h + k];
                    let dh = ws.d_out[t * h + k] * act.derivative(hv, y) + ws.dh_next[k];
                    let tc = cache.tanh_cell[t * h + k];
                    let i_g = gates[GATE_INPUT * h + k];
                    let f_g = gates[GATE_FORGET * h + k];
                    let o_g = gates[GATE_OUTPUT * h + k];
                    let g_g = gates[GATE_CANDIDATE * h + k];
                    let d_o = dh * tc;
                    let dc = ws.dc_next[k] + dh * o_g * (1.0 - tc * tc);
                    let d_i = dc * g_g;
                    let d_g = dc * i_g;
                    let d_f = dc * c_prev[k];
                    ws.dc_next[k] = dc * f_g;
                    ws.dz[GATE_INPUT * h + k] = d_i * i_g * (1.0 - i_g);
                    ws.dz[GATE_FORGET * h + k] = d_f * f_g * (1.0 - f_g);
                    ws.dz[GATE_OUTPUT * h + k] = d_o * o_g * (1.0 - o_g);
                    ws.dz[GATE_CANDIDATE * h + k] = d_g * (1.0 - g_g * g_g);
                }
                let concat_t = &cache.concat[t * cols..(t + 1) * cols];
                ws.d_concat.fill(0.0);
                for r in 0..4 * h {
                    let dz = ws.dz[r];
                    if dz == 0.0 {
                        continue;
                    }
                    glayer.bias[r] += dz;
                    let gw = &mut glayer.weights[r * cols..(r + 1) * cols];
                    for (g, x) in gw.iter_mut().zip(concat_t) {
                        *g += dz * x;
                    }
                    let w = &layer.weights[r * cols..(r + 1) * cols];
                    for (d, wv) in ws.d_concat.iter_mut().zip(w) {
                        *d += dz * wv;
                    }
                }
                ws.d_below[t * inp..(t + 1) * inp].copy_from_slice(&ws.d_concat[..inp]);
                ws.dh_next.copy_from_slice(&ws.d_concat[inp..]);
            }
            std::mem::swap(&mut ws.d_out, &mut ws.d_below);
        }
    }

    /// Predictions for every row of `batch`.
    pub fn forward(&self, batch: &Batch) -> Result<Vec<f64>> {
        self.check_batch(batch)?;
        let mut ws = Workspace::default();
        let out: Vec<f64> = (0..batch.rows())
            .map(|i| self.forward_row(batch.row(i), batch.seq_len, &mut ws))
            .collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(KinnError::NonFinite {
                block: "forward output".into(),
            });
        }
        Ok(out)
    }

    pub fn predict(&self, ds: &WindowedDataset) -> Result<Vec<f64>> {
        self.forward(&Batch::from(ds))
    }

    /// MSE of the selected rows and its exact gradient.
    pub fn loss_and_gradient_rows(
        &self,
        ds: &WindowedDataset,
        rows: &[usize],
        ws: &mut Workspace,
        grads: &mut NetworkParams,
    ) -> Result<f64> {
        let batch = Batch::from(ds);
        self.check_batch(&batch)?;
        if rows.is_empty() {
            return Err(KinnError::EmptyInput("empty batch".into()));
        }
        grads.fill(0.0);
        let scale = 1.0 / rows.len() as f64;
        let mut loss = 0.0;
        for &r in rows {
            let pred = self.forward_row(batch.row(r), batch.seq_len, ws);
            let diff = pred - ds.targets[r];
            loss += diff * diff;
            self.backward_row(batch.seq_len, 2.0 * diff * scale, ws, grads);
        }
        loss *= scale;
        if !loss.is_finite() {
            return Err(KinnError::NonFinite {
                block: "loss".into(),
            });
        }
        if let Some(block) = grads.first_non_finite() {
            return Err(KinnError::NonFinite { block });
        }
        Ok(loss)
    }

    /// MSE over all rows of `batch` against `targets`, and its gradient.
    pub fn backward(&self, batch: &Batch, targets: &[f64]) -> Result<(f64, NetworkParams)> {
        self.check_batch(batch)?;
        if targets.len() != batch.rows() {
            return Err(KinnError::Misaligned {
                expected: batch.rows(),
                got: targets.len(),
            });
        }
        let mut grads = self.params.zeros_like();
        let mut total = self.params.zeros_like();
        let mut ws = Workspace::default();
        if targets.is_empty() {
            return Err(KinnError::EmptyInput("empty batch".into()));
        }
        let scale = 1.0 / targets.len() as f64;
        let mut loss = 0.0;
        for (r, &y) in targets.iter().enumerate() {
            grads.fill(0.0);
            let pred = self.forward_row(batch.row(r), batch.seq_len, &mut ws);
            let diff = pred - y;
            loss += diff * diff;
            self.backward_row(batch.seq_len, 2.0 * diff * scale, &mut ws, &mut grads);
            total.add_assign(&grads);
        }
        if let Some(block) = total.first_non_finite() {
            return Err(KinnError::NonFinite { block });
        }
        Ok((loss * scale, total))
    }
}

/// Mean of squared differences.
pub fn mse_loss(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(KinnError::Misaligned {
            expected: targets.len(),
            got: predictions.len(),
        });
    }
    if predictions.is_empty() {
        return Err(KinnError::EmptyInput("mse of nothing".into()));
    }
    Ok(predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / predictions.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_cell(weights: [f64; 8], bias: [f64; 4], head: (f64, f64), act: Activation) -> Network {
        let config = NetworkConfig {
            input_channels: 1,
            layer_widths: vec![1],
            activations: vec![act],
            seed: 0,
        };
        let mut params = NetworkParams::zeros(&config);
        params.layers[0].weights.copy_from_slice(&weights);
        params.layers[0].bias.copy_from_slice(&bias);
        params.head_weights[0] = head.0;
        params.head_bias[0] = head.1;
        Network::from_parts(config, params).unwrap()
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 4.0]).unwrap(), 2.0);
        assert_eq!(mse_loss(&[1.5, -2.0], &[1.5, -2.0]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[0.0], &[3.0]).unwrap(), 9.0);
        assert!(matches!(mse_loss(&[1.0], &[1.0, 2.0]), Err(KinnError::Misaligned { .. })));
        assert!(matches!(mse_loss(&[], &[]), Err(KinnError::EmptyInput(_))));
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let cfg = NetworkConfig::with_widths(2, &[5, 3], 17);
        let a = init_params(&cfg).unwrap();
        let b = init_params(&cfg).unwrap();
        assert_eq!(a.to_flat(), b.to_flat());
        let c = init_params(&NetworkConfig { seed: 18, ..cfg.clone() }).unwrap();
        assert_ne!(a.to_flat(), c.to_flat());

        for layer in &a.layers {
            let bound = (6.0 / (layer.input_size + 2 * layer.hidden) as f64).sqrt();
            assert!(layer.weights.iter().all(|w| w.abs() <= bound));
            let h = layer.hidden;
            assert!(layer.bias[h..2 * h].iter().all(|&b| b == 1.0));
            assert!(layer.bias[..h].iter().chain(&layer.bias[2 * h..]).all(|&b| b == 0.0));
        }
        let bound = (6.0 / 4.0f64).sqrt();
        assert!(a.head_weights.iter().all(|w| w.abs() <= bound));
        assert_eq!(a.head_bias, vec![0.0]);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = NetworkConfig::with_widths(1, &[4, 4], 0);
        cfg.activations.pop();
        assert!(init_params(&cfg).is_err());
        assert!(init_params(&NetworkConfig::with_widths(1, &[4, 0], 0)).is_err());
        assert!(init_params(&NetworkConfig::with_widths(0, &[4], 0)).is_err());
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let cfg = NetworkConfig::with_widths(2, &[3, 3], 1);
        let mut params = NetworkParams::zeros(&cfg);
        for layer in &mut params.layers {
            let h = layer.hidden;
            layer.bias[h..2 * h].fill(1.0);
        }
        let net = Network::from_parts(cfg, params).unwrap();
        let inputs = [0.3, -1.0, 2.0, 0.5, 1.0, 1.0];
        let out = net.forward(&Batch::new(&inputs, 3, 2).unwrap()).unwrap();
        assert_eq!(out, vec![0.0]);
    }

    #[test]
    fn hand_evaluated_cell() {
        // Gate rows (input, forget, output, candidate) x columns (x, h_prev).
        // With a length-1 sequence h_prev = 0, so only the x column matters:
        //   z_i = 0.5*2 + 0.1 = 1.1      i = sigmoid(1.1) = 0.7502601055951177
        //   z_f = irrelevant (c_prev = 0)
        //   z_o = -0.25*2 + 0.0 = -0.5   o = sigmoid(-0.5) = 0.3775406687981454
        //   z_g = 0.3*2 - 0.2 = 0.4      g = tanh(0.4)     = 0.3799489622552249
        //   c = i*g = 0.2850605485423604
        //   h = o * tanh(c) = 0.3775406687981454 * 0.2775822343991906 = 0.10479858242155399
        //   y = 2*h - 0.5 = -0.290402835156892 with identity activation.
        let net = single_cell(
            [0.5, 9.0, 0.7, 9.0, -0.25, 9.0, 0.3, 9.0],
            [0.1, 1.0, 0.0, -0.2],
            (2.0, -0.5),
            Activation::Identity,
        );
        let i = 1.0 / (1.0 + (-1.1f64).exp());
        let o = 1.0 / (1.0 + (0.5f64).exp());
        let g = 0.4f64.tanh();
        let h = o * (i * g).tanh();
        assert!((i - 0.7502601055951177).abs() < 1e-15);
        assert!((o - 0.3775406687981454).abs() < 1e-15);
        assert!((g - 0.3799489622552249).abs() < 1e-15);
        assert!((h - 0.10479858242155399).abs() < 1e-15);
        let expected = -0.290402835156892;
        let out = net.forward(&Batch::new(&[2.0], 1, 1).unwrap()).unwrap();
        assert!((out[0] - expected).abs() < 1e-15, "{} vs {expected}", out[0]);
    }

    #[test]
    fn identical_rows_identical_predictions() {
        let net = Network::new(NetworkConfig::with_widths(1, &[4, 4], 3)).unwrap();
        let inputs = [0.1, 0.2, 0.3, 0.1, 0.2, 0.3];
        let out = net.forward(&Batch::new(&inputs, 3, 1).unwrap()).unwrap();
        assert_eq!(out[0], out[1]);
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let net = Network::new(NetworkConfig::with_widths(2, &[4], 3)).unwrap();
        let inputs = [0.1, 0.2, 0.3];
        assert!(matches!(
            net.forward(&Batch::new(&inputs, 3, 1).unwrap()),
            Err(KinnError::ShapeMismatch(_))
        ));
        assert!(Batch::new(&inputs, 2, 1).is_err());
    }

    #[test]
    fn head_bias_gradient_closed_form() {
        let net = Network::new(NetworkConfig::with_widths(1, &[3], 5)).unwrap();
        let inputs = [0.4, -0.2, 0.9];
        let batch = Batch::new(&inputs, 3, 1).unwrap();
        let pred = net.forward(&batch).unwrap()[0];
        let (_, grads) = net.backward(&batch, &[1.5]).unwrap();
        assert!((grads.head_bias[0] - 2.0 * (pred - 1.5)).abs() < 1e-14);
    }

    #[test]
    fn zero_input_zero_weights_give_zero_input_gate_gradients() {
        let cfg = NetworkConfig::with_widths(1, &[3], 2);
        let mut params = NetworkParams::zeros(&cfg);
        params.head_weights.fill(0.0);
        let net = Network::from_parts(cfg, params).unwrap();
        let inputs = [0.0; 3];
        let (_, grads) = net.backward(&Batch::new(&inputs, 3, 1).unwrap(), &[2.0]).unwrap();
        let h = 3;
        let cols = 1 + h;
        let gate_rows = &grads.layers[0].weights[GATE_INPUT * h * cols..(GATE_INPUT + 1) * h * cols];
        assert!(gate_rows.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn flat_round_trip() {
        let p = init_params(&NetworkConfig::with_widths(2, &[3, 2], 8)).unwrap();
        let mut q = p.zeros_like();
        q.set_flat(&p.to_flat()).unwrap();
        assert_eq!(p, q);
        assert!(q.set_flat(&[1.0]).is_err());
    }
}
