//! Mini-batch SGD with momentum for the network, and the fine-tune transfer
//! procedure (replace the output layer, retrain with an elevated last-layer
//! learning rate).

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::image::ImageTensor;
use crate::learners::convnet::{
    batch_gradients, init_std, mix_seed, ConvNet, Gradients, LayerParams,
};
use crate::rng::Rng;
use crate::scalar::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrStage {
    pub rate: f64,
    pub epochs: usize,
}

/// Training hyperparameters shared by the network and the linear model.
/// Defaults follow common practice for this architecture family: momentum
/// 0.9, weight decay 5e-4, learning rate starting at 0.01, dropout active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub schedule: Vec<LrStage>,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub dropout: bool,
    pub seed: u64,
    pub last_layer_lr_multiplier: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            schedule: vec![LrStage { rate: 0.01, epochs: 10 }],
            batch_size: 16,
            momentum: 0.9,
            weight_decay: 5e-4,
            dropout: true,
            seed: 0,
            last_layer_lr_multiplier: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(CoreError::InvalidInput("batch_size must be positive".into()));
        }
        for s in &self.schedule {
            if !(s.rate > 0.0) {
                return Err(CoreError::InvalidInput(format!("learning rate {} not positive", s.rate)));
            }
            if s.epochs == 0 {
                return Err(CoreError::InvalidInput("schedule stage with zero epochs".into()));
            }
        }
        if self.weight_decay < 0.0 || self.momentum < 0.0 || self.momentum >= 1.0 {
            return Err(CoreError::InvalidInput("bad momentum or weight decay".into()));
        }
        if !(self.last_layer_lr_multiplier > 0.0) {
            return Err(CoreError::InvalidInput("last_layer_lr_multiplier must be positive".into()));
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.schedule.iter().map(|s| s.epochs).sum()
    }
}

/// Mini-batch SGD with momentum on the weighted loss. Weight decay is scaled
/// by the batch's instance-weight mass, so all-zero weights give exactly zero
/// updates. The final parameterized layer trains at
/// `rate * last_layer_lr_multiplier`. Deterministic given the config seed.
pub fn sgd_train<F: Real>(
    net: &ConvNet<F>,
    images: &[ImageTensor<F>],
    labels: &[u8],
    weights: &[F],
    cfg: &TrainConfig,
) -> Result<ConvNet<F>> {
    let (trained, _) = sgd_train_traced(net, images, labels, weights, cfg)?;
    Ok(trained)
}

/// As `sgd_train`, returning the epoch-mean weighted loss trajectory.
pub fn sgd_train_traced<F: Real>(
    net: &ConvNet<F>,
    images: &[ImageTensor<F>],
    labels: &[u8],
    weights: &[F],
    cfg: &TrainConfig,
) -> Result<(ConvNet<F>, Vec<f64>)> {
    cfg.validate()?;
    if images.len() != labels.len() || labels.len() != weights.len() {
        return Err(CoreError::ShapeMismatch {
            expected: format!("{} images/labels/weights", images.len()),
            found: format!("{} labels, {} weights", labels.len(), weights.len()),
        });
    }
    let mut net = net.clone();
    if images.is_empty() {
        return Ok((net, Vec::new()));
    }
    let last_param_layer = net
        .params
        .iter()
        .rposition(|p| p.is_some())
        .expect("network has parameters");
    let mut velocity: Vec<Option<LayerParams<F>>> = Gradients::zeros_like(&net).layers;
    let mut epoch_losses = Vec::new();
    let mut global_epoch = 0usize;
    for stage in &cfg.schedule {
        for _ in 0..stage.epochs {
            let mut order: Vec<usize> = (0..images.len()).collect();
            Rng::stream(cfg.seed, 0x5aff_0000 ^ global_epoch as u64).shuffle(&mut order);
            let mut epoch_loss = 0.0f64;
            for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
                let batch_images: Vec<&ImageTensor<F>> = batch.iter().map(|&i| &images[i]).collect();
                let batch_labels: Vec<u8> = batch.iter().map(|&i| labels[i]).collect();
                let batch_weights: Vec<F> = batch.iter().map(|&i| weights[i]).collect();
                let dropout_seed = mix_seed(cfg.seed, ((global_epoch as u64) << 24) | batch_idx as u64);
                let (loss, grads) = batch_gradients(
                    &net,
                    &batch_images,
                    &batch_labels,
                    &batch_weights,
                    cfg.dropout,
                    dropout_seed,
                )?;
                if !loss.is_finite() || !grads.all_finite() {
                    return Err(CoreError::TrainDiverged { epoch: global_epoch, batch: batch_idx });
                }
                epoch_loss += loss.as_f64();
                let mass: F = batch_weights.iter().copied().sum();
                apply_update(
                    &mut net,
                    &mut velocity,
                    &grads,
                    stage.rate,
                    cfg,
                    mass,
                    last_param_layer,
                );
            }
            epoch_losses.push(epoch_loss);
            global_epoch += 1;
        }
    }
    Ok((net, epoch_losses))
}

fn apply_update<F: Real>(
    net: &mut ConvNet<F>,
    velocity: &mut [Option<LayerParams<F>>],
    grads: &Gradients<F>,
    rate: f64,
    cfg: &TrainConfig,
    batch_mass: F,
    last_param_layer: usize,
) {
    let momentum = F::of(cfg.momentum);
    let decay = F::of(cfg.weight_decay) * batch_mass;
    for (k, slot) in net.params.iter_mut().enumerate() {
        let Some(p) = slot.as_mut() else { continue };
        let g = grads.layers[k].as_ref().expect("gradient slot");
        let v = velocity[k].as_mut().expect("velocity slot");
        let lr = if k == last_param_layer {
            F::of(rate * cfg.last_layer_lr_multiplier)
        } else {
            F::of(rate)
        };
        step(&mut p.weights, &mut v.weights, &g.weights, lr, momentum, decay);
        // Biases are conventionally left out of weight decay.
        step(&mut p.bias, &mut v.bias, &g.bias, lr, momentum, F::zero());
    }
}

fn step<F: Real>(
    param: &mut Tensor<F>,
    velocity: &mut Tensor<F>,
    grad: &Tensor<F>,
    lr: F,
    momentum: F,
    decay: F,
) {
    for ((p, v), g) in param
        .data_mut()
        .iter_mut()
        .zip(velocity.data_mut())
        .zip(grad.data())
    {
        *v = momentum * *v - lr * (*g + decay * *p);
        *p += *v;
    }
}

/// Model transfer: copy every layer, re-initialize the output layer from a
/// seeded fan-in-scaled Gaussian (zero bias) and retrain with the last-layer
/// learning rate set 10x higher than the rest.
pub fn fine_tune<F: Real>(
    source: &ConvNet<F>,
    images: &[ImageTensor<F>],
    labels: &[u8],
    weights: &[F],
    cfg: &TrainConfig,
) -> Result<ConvNet<F>> {
    let mut net = source.clone();
    let last = net
        .params
        .iter()
        .rposition(|p| p.is_some())
        .expect("network has parameters");
    if let Some(p) = net.params[last].as_mut() {
        let mut rng = Rng::stream(cfg.seed, 0xf17e);
        let std = init_std(p.weights.shape()[1]);
        for v in p.weights.data_mut() {
            *v = F::of(rng.next_gaussian() * std);
        }
        p.bias.fill(F::zero());
    }
    let mut ft_cfg = cfg.clone();
    ft_cfg.last_layer_lr_multiplier = 10.0;
    if ft_cfg.schedule.is_empty() {
        return Ok(net);
    }
    sgd_train(&net, images, labels, weights, &ft_cfg)
}
