//! Mini-batch Adam training with best-validation restore.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Model;
use crate::error::{Error, Result};
use crate::line_graph::LineGraphSample;
use crate::tensor::{AdamState, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Drives the per-epoch shuffles.
    pub seed: u64,
}

impl TrainOptions {
    pub fn new(seed: u64) -> Self {
        TrainOptions {
            epochs: 250,
            batch_size: 16,
            lr: 1e-3,
            seed,
        }
    }

    /// Defaults for training on several grids at once.
    pub fn multi_grid(seed: u64) -> Self {
        TrainOptions {
            batch_size: 32,
            ..Self::new(seed)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Zero-based epoch whose parameters were restored.
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Element-weighted MSE over `samples`, evaluated in batches.
pub fn evaluate_loss(model: &Model, samples: &[&LineGraphSample], batch_size: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in samples.chunks(batch_size.max(1)) {
        let batch = model.batch(chunk)?;
        let n = batch.targets.as_ref().map_or(0, Tensor::len);
        total += model.loss(&batch)? * n as f64;
        count += n;
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// Predictions for each sample, in order.
pub fn predict_all(model: &Model, samples: &[&LineGraphSample], batch_size: usize) -> Result<Vec<Tensor>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let batch = model.batch(chunk)?;
        let pred = model.predict(&batch)?;
        for w in batch.offsets.windows(2) {
            let rows: Vec<&[f64]> = (w[0]..w[1]).map(|r| pred.row(r)).collect();
            out.push(if rows.is_empty() {
                Tensor::zeros(0, pred.cols())
            } else {
                Tensor::from_rows(&rows)
            });
        }
    }
    Ok(out)
}

pub fn train(
    model: &mut Model,
    train_set: &[&LineGraphSample],
    val_set: &[&LineGraphSample],
    options: &TrainOptions,
) -> Result<History> {
    train_with(model, train_set, val_set, options, |_| {})
}

/// As [`train`], reporting each finished epoch to `on_epoch`.
pub fn train_with(
    model: &mut Model,
    train_set: &[&LineGraphSample],
    val_set: &[&LineGraphSample],
    options: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<History> {
    if train_set.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if val_set.is_empty() {
        return Err(Error::EmptySplit("val"));
    }
    if options.batch_size == 0 || options.epochs == 0 || options.lr <= 0.0 {
        return Err(Error::Config("epochs, batch size and learning rate must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut adam = AdamState::new(model.params().iter().map(Tensor::shape), options.lr);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = History {
        train_loss: Vec::with_capacity(options.epochs),
        val_loss: Vec::with_capacity(options.epochs),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
    };
    let mut best = model.params().to_vec();

    for epoch in 0..options.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0usize;
        for chunk in order.chunks(options.batch_size) {
            let samples: Vec<&LineGraphSample> = chunk.iter().map(|&i| train_set[i]).collect();
            let batch = model.batch(&samples)?;
            let (loss, grads) = model.loss_and_gradients(&batch)?;
            let n = batch.targets.as_ref().map_or(0, Tensor::len);
            total += loss * n as f64;
            count += n;
            let mut params: Vec<&mut Tensor> = model.params_mut().iter_mut().collect();
            adam.update(&mut params, &grads)?;
        }
        let train_loss = total / count.max(1) as f64;
        let val_loss = evaluate_loss(model, val_set, options.batch_size)?;
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
        if val_loss < history.best_val_loss {
            history.best_val_loss = val_loss;
            history.best_epoch = epoch;
            best.clone_from_slice(model.params());
        }
        on_epoch(&EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
    }
    model.params_mut().clone_from_slice(&best);
    Ok(history)
}
