use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{PixelBlock, DEFAULT_BANDWIDTH};
use crate::neural::layers::LayerSpec;
use crate::neural::net::{AeMode, AeModel, EncoderNet};
use crate::optim::Adam;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub mode: AeMode,
    pub bandwidth: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            learning_rate: 5e-5,
            batch_size: 32,
            mode: AeMode::SmoeAe,
            bandwidth: DEFAULT_BANDWIDTH,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::config(format!(
                "bandwidth must be positive, got {}",
                self.bandwidth
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: AeModel,
    /// Mean training loss of every epoch.
    pub history: Vec<f64>,
}

/// Trains an encoder with layer stack `layers` to reconstruct `dataset`.
///
/// Blocks are reshuffled every epoch from the seeded generator; gradients of
/// a mini-batch are summed in batch order and averaged.
pub fn train(
    dataset: &[PixelBlock],
    config: &TrainConfig,
    layers: Vec<LayerSpec>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let first = dataset
        .first()
        .ok_or_else(|| Error::input("training dataset is empty"))?;
    let block_size = first.size();
    if dataset.iter().any(|b| b.size() != block_size) {
        return Err(Error::input("training blocks have mixed sizes"));
    }
    let encoder = EncoderNet::new(block_size, layers, config.seed)?;
    let model = AeModel::new(config.mode, encoder, config.bandwidth)?;
    train_model(dataset, config, model)
}

/// Continues training an existing model.
pub fn train_model(
    dataset: &[PixelBlock],
    config: &TrainConfig,
    model: AeModel,
) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::input("training dataset is empty"));
    }
    if let Some(b) = dataset
        .iter()
        .find(|b| b.size() != model.encoder().block_size())
    {
        return Err(Error::input(format!(
            "block of size {} does not match network input {}",
            b.size(),
            model.encoder().block_size()
        )));
    }
    let mut params = model.params();
    let mut adam = Adam::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut grad_sum = vec![0.0; params.len()];
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            grad_sum.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let block = &dataset[i];
                let (loss, grad) = model.loss_and_gradient(&params, block, block);
                epoch_loss += loss;
                for (acc, g) in grad_sum.iter_mut().zip(&grad) {
                    *acc += g;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grad_sum.iter_mut().for_each(|g| *g *= scale);
            adam.step(&mut params, &grad_sum, config.learning_rate);
        }
        let mean = epoch_loss / dataset.len() as f64;
        log::info!(
            "epoch {}/{}: mean loss {mean:.6e}",
            epoch + 1,
            config.epochs
        );
        history.push(mean);
    }
    Ok(TrainOutcome {
        model: model.with_params(&params)?,
        history,
    })
}
