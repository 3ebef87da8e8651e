//! Instance-weighted base learners: the convolutional network and logistic
//! regression, both trained on the negated weighted log likelihood.

pub mod activations;
pub mod convnet;
pub mod logreg;
pub mod loss;
pub mod train;

pub use activations::{relu, sigmoid, softmax};
pub use convnet::{
    batch_gradients, extract_features, feature_layer_index, Activation, ConvNet, ConvNetSpec,
    FeatureLayer, ForwardPass, Gradients, LayerParams, LayerShape, LayerSpec,
};
pub use logreg::{train_weighted_logreg, train_weighted_logreg_from, LogRegModel};
pub use loss::{clamp_prob, weighted_loss, PROB_CLAMP};
pub use train::{fine_tune, sgd_train, sgd_train_traced, LrStage, TrainConfig};

use crate::scalar::Real;

/// Binary decision with its fake-class probability. Label 1 iff
/// prob_fake >= 0.5 (ties go to fake).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction<F> {
    pub label: u8,
    pub prob_fake: F,
}

impl<F: Real> Prediction<F> {
    pub fn from_prob_fake(prob_fake: F) -> Self {
        Prediction {
            label: u8::from(prob_fake >= F::of(0.5)),
            prob_fake,
        }
    }
}
