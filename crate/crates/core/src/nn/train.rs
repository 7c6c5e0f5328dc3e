//! Seeded minibatch SGD over whole trajectories.

use super::data::Trajectory;
use super::loss::{batch_grad, dataset_loss};
use super::network::NetworkParams;
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            lr: 1e-2,
            batch_size: 8,
            seed: 0,
        }
    }
}

/// Trains a copy of `net`. The step uses the mean gradient over the minibatch.
pub fn sgd_train(
    net: &NetworkParams,
    dataset: &[Trajectory],
    epochs: usize,
    lr: f64,
    batch_size: usize,
    seed: u64,
) -> Result<NetworkParams> {
    let cfg = TrainConfig {
        epochs,
        lr,
        batch_size,
        seed,
    };
    sgd_train_logged(net, dataset, &cfg).map(|(n, _)| n)
}

/// Like [`sgd_train`], also returning the training loss at the end of each epoch.
pub fn sgd_train_logged(
    net: &NetworkParams,
    dataset: &[Trajectory],
    cfg: &TrainConfig,
) -> Result<(NetworkParams, Vec<f64>)> {
    if dataset.is_empty() {
        return Err(Error::Precondition("training dataset is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Invalid("batch_size must be positive".into()));
    }
    net.validate()?;
    for t in dataset {
        t.check_dims(net.input_dim(), net.output_dim())?;
    }
    let mut net = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Trajectory> = chunk.iter().map(|&i| &dataset[i]).collect();
            let (loss, grad) = batch_grad(&net, &batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss diverged at epoch {epoch} (lr = {})",
                    cfg.lr
                )));
            }
            net.axpy(-cfg.lr / batch.len() as f64, &grad);
        }
        let loss = dataset_loss(&net, dataset)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "training loss diverged after epoch {epoch} (lr = {})",
                cfg.lr
            )));
        }
        log::debug!("epoch {epoch}: loss {loss:.6e}");
        history.push(loss);
    }
    Ok((net, history))
}
