use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Gradients, Model};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Anything that can hand out labeled input patches by index.
pub trait PatchSource: Sync {
    fn len(&self) -> usize;
    fn patch(&self, index: usize) -> Tensor<f32>;
    fn label(&self, index: usize) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl PatchSource for [(Tensor<f32>, usize)] {
    fn len(&self) -> usize {
        <[_]>::len(self)
    }

    fn patch(&self, index: usize) -> Tensor<f32> {
        self[index].0.clone()
    }

    fn label(&self, index: usize) -> usize {
        self[index].1
    }
}

impl PatchSource for Vec<(Tensor<f32>, usize)> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn patch(&self, index: usize) -> Tensor<f32> {
        self[index].0.clone()
    }

    fn label(&self, index: usize) -> usize {
        self[index].1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 32,
            epochs: 20,
            weight_decay: 1e-4,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model<f32>,
    /// Mean cross-entropy of each epoch, in order.
    pub loss_curve: Vec<f64>,
}

/// Mini-batch SGD with momentum on softmax cross-entropy.
///
/// Single-threaded: the shuffle order comes from `cfg.seed` and gradients
/// accumulate in batch order, so identical inputs give identical weights.
pub fn train_sgd<S: PatchSource + ?Sized>(model: Model<f32>, data: &S, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_sgd_with(model, data, cfg, |_, _| {})
}

/// [`train_sgd`] with a callback invoked after each epoch with
/// `(epoch, mean_loss)`.
pub fn train_sgd_with<S: PatchSource + ?Sized>(
    mut model: Model<f32>,
    data: &S,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n = data.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let classes = *model.shapes().last().expect("schedule").first().unwrap_or(&0);
    if let Some(i) = (0..n).find(|&i| data.label(i) >= classes) {
        return Err(Error::InvalidArgument(format!(
            "patch {i} has label {} but the model has {classes} classes",
            data.label(i)
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut velocity: Gradients<f32> = model.zero_gradients();
    let lr = f32::of(cfg.learning_rate);
    let momentum = f32::of(cfg.momentum);
    let decay = f32::of(cfg.weight_decay);
    let mut loss_curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0f64;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = model.zero_gradients();
            for &i in batch {
                let acts = model.forward(&data.patch(i))?;
                let loss = model.backward(&acts, data.label(i), &mut grads)?;
                total += loss as f64;
            }
            let scale = 1.0 / batch.len() as f32;
            model.sgd_step(&grads, &mut velocity, scale, lr, momentum, decay);
        }
        let mean = total / n as f64;
        if !mean.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        log::debug!("epoch {epoch}: mean loss {mean:.5}");
        on_epoch(epoch, mean);
        loss_curve.push(mean);
    }
    Ok(TrainOutcome { model, loss_curve })
}

/// Fraction of patches whose argmax class matches the label.
pub fn model_accuracy<S: PatchSource + ?Sized>(
    model: &Model<f32>,
    data: &S,
    exec: crate::parallel::Execution,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let hits = crate::parallel::try_map_range(exec, data.len(), |i| {
        model
            .forward(&data.patch(i))
            .map(|a| (a.predicted_class() == data.label(i)) as usize)
    })?;
    Ok(hits.iter().sum::<usize>() as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layer::LayerSpec;

    fn tiny() -> Model<f32> {
        Model::new(
            "tiny",
            [1, 4, 4],
            vec![
                LayerSpec::conv(2, 3, 1, 1),
                LayerSpec::relu(),
                LayerSpec::flatten(),
                LayerSpec::fc(2),
                LayerSpec::softmax(),
            ],
            5,
        )
        .unwrap()
    }

    #[test]
    fn empty_dataset_errors() {
        let data: Vec<(Tensor<f32>, usize)> = vec![];
        assert!(matches!(
            train_sgd(tiny(), &data, &TrainConfig::default()),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn diverging_run_names_the_epoch() {
        let data = vec![
            (Tensor::filled(vec![1, 4, 4], 1.0e3), 0usize),
            (Tensor::filled(vec![1, 4, 4], -1.0e3), 1usize),
        ];
        let cfg = TrainConfig {
            learning_rate: 1.0e6,
            momentum: 0.9,
            batch_size: 1,
            epochs: 20,
            weight_decay: 0.0,
            seed: 1,
        };
        match train_sgd(tiny(), &data, &cfg) {
            Err(Error::NonFiniteLoss { epoch }) => assert!(epoch < 20),
            other => panic!("expected divergence, got {:?}", other.map(|o| o.loss_curve)),
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let data = vec![(Tensor::zeros(vec![1, 4, 4]), 0usize)];
        let cfg = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(train_sgd(tiny(), &data, &cfg).is_err());
    }
}
