use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adam_step, mse_loss, AdamHyper, AdamState, Network, NetworkConfig, Workspace};
use crate::error::{KinnError, Result};
use crate::timeseries::WindowedDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Seed of the per-epoch shuffle.
    pub seed: u64,
    /// Stop once this many epochs pass without a new best validation loss.
    /// `None` always runs every epoch.
    pub patience: Option<usize>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        let hyper = AdamHyper::default();
        Self {
            epochs: 600,
            batch_size: 32,
            learning_rate: hyper.learning_rate,
            beta1: hyper.beta1,
            beta2: hyper.beta2,
            epsilon: hyper.epsilon,
            seed: 0,
            patience: None,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(KinnError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(KinnError::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(KinnError::InvalidConfig("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }

    fn hyper(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// Loss history of a training run. Epochs are numbered from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// First epoch attaining `best_val_loss`; 0 when no epoch ran.
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Mean squared error of `net` over every row of `ds`.
pub fn evaluate_loss(net: &Network, ds: &WindowedDataset) -> Result<f64> {
    mse_loss(&net.predict(ds)?, &ds.targets)
}

/// Mini-batch Adam on MSE with a seeded shuffle per epoch. The parameters
/// of the epoch with the lowest validation loss are returned.
pub fn train(
    config: &NetworkConfig,
    train_ds: &WindowedDataset,
    val_ds: &WindowedDataset,
    opts: &TrainOptions,
) -> Result<(Network, TrainReport)> {
    opts.validate()?;
    if train_ds.is_empty() || val_ds.is_empty() {
        return Err(KinnError::EmptyInput("training and validation data must be non-empty".into()));
    }
    for ds in [train_ds, val_ds] {
        if ds.channels != config.input_channels {
            return Err(KinnError::ShapeMismatch(format!(
                "dataset has {} channels, network expects {}",
                ds.channels, config.input_channels
            )));
        }
    }
    if train_ds.seq_len != val_ds.seq_len || train_ds.layout != val_ds.layout {
        return Err(KinnError::ShapeMismatch(
            "training and validation windows use different layouts".into(),
        ));
    }

    let mut net = Network::new(config.clone())?;
    let mut report = TrainReport {
        train_loss: Vec::with_capacity(opts.epochs),
        val_loss: Vec::with_capacity(opts.epochs),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
    };
    if opts.epochs == 0 {
        report.best_val_loss = evaluate_loss(&net, val_ds)?;
        return Ok((net, report));
    }

    let mut state = AdamState::new(&net.params, opts.hyper());
    let mut grads = net.params.zeros_like();
    let mut ws = Workspace::default();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..train_ds.len()).collect();
    let mut best = net.params.clone();

    for epoch in 1..=opts.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for rows in order.chunks(opts.batch_size) {
            let loss = net
                .loss_and_gradient_rows(train_ds, rows, &mut ws, &mut grads)
                .map_err(|e| match e {
                    KinnError::NonFinite { .. } => KinnError::Divergence {
                        epoch,
                        loss: f64::NAN,
                    },
                    other => other,
                })?;
            total += loss * rows.len() as f64;
            adam_step(&mut net.params, &grads, &mut state)?;
        }
        let train_loss = total / train_ds.len() as f64;
        let val_loss = match evaluate_loss(&net, val_ds) {
            Ok(v) if v.is_finite() => v,
            Ok(v) => return Err(KinnError::Divergence { epoch, loss: v }),
            Err(KinnError::NonFinite { .. }) => {
                return Err(KinnError::Divergence {
                    epoch,
                    loss: f64::NAN,
                })
            }
            Err(e) => return Err(e),
        };
        report.train_loss.push(train_loss);
        report.val_loss.push(val_loss);
        if val_loss < report.best_val_loss {
            report.best_val_loss = val_loss;
            report.best_epoch = epoch;
            best.clone_from(&net.params);
        }
        if let Some(patience) = opts.patience {
            if epoch - report.best_epoch >= patience {
                break;
            }
        }
    }
    net.params = best;
    Ok((net, report))
}
