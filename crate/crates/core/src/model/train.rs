use super::{Autoencoder, DaeModel};
use crate::datasets::FactorDataset;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{AdamState, Tape};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Adam on the model's training loss with a fresh shuffle every epoch.
/// A trailing batch with a single row is dropped. `on_epoch` sees the epoch
/// index and its mean loss.
pub fn train<M: Autoencoder + ?Sized>(
    model: &mut M,
    data: &FactorDataset,
    config: &TrainConfig,
    rng: &mut Rng,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainingLog> {
    if config.batch_size < 2 {
        return Err(Error::Argument(format!(
            "batch size must be at least 2, got {}",
            config.batch_size
        )));
    }
    if data.len() < 2 {
        return Err(Error::Argument(format!(
            "training needs at least 2 rows, got {}",
            data.len()
        )));
    }
    if data.image_dim() != model.input_dim() {
        return Err(Error::dim(
            "train",
            &[data.image_dim()],
            &[model.input_dim()],
        ));
    }
    let mut adam = AdamState::new(config.learning_rate);
    let mut log = TrainingLog::default();
    for epoch in 0..config.epochs {
        let order = rng.permutation(data.len());
        let mut total = 0.0;
        let mut batches = 0usize;
        for rows in order.chunks(config.batch_size) {
            if rows.len() < 2 {
                continue;
            }
            let x = data.batch(rows);
            let mut tape = Tape::new();
            let loss = model.training_loss(&mut tape, &x, rng)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Numerical(format!(
                    "loss became {value} in epoch {epoch}"
                )));
            }
            tape.backward(loss)?;
            tape.write_grads(model.params_mut())?;
            adam.step(model.params_mut())?;
            total += value;
            batches += 1;
        }
        let mean = total / batches as f64;
        on_epoch(epoch, mean);
        log.epoch_losses.push(mean);
    }
    Ok(log)
}

pub fn train_dae(
    model: &mut DaeModel,
    data: &FactorDataset,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<TrainingLog> {
    train(model, data, config, rng, |_, _| {})
}
