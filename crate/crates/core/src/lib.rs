//! Image credibility analysis toolkit: weak-label pattern mining, instance-
//! weighted base learners (logistic regression and a small convolutional
//! network), iterative transfer boosting, the classic baselines (text
//! features, bag-of-visual-words, data / feature / model transfer), LSH
//! near-duplicate removal, and an evaluation harness with a synthetic
//! domain-shift benchmark.
//!
//! The numeric core is generic over the scalar type through [`scalar::Real`]
//! (implemented for `f32` and `f64`); concrete aliases for both widths live
//! at the crate root. File formats and the CLI work in `f64`.
//!
//! ```
//! use imcred_core::boost::{init_weights, run_boost, BoostConfig, InitStrategy};
//! use imcred_core::eval::compare::LogRegBoostLearner;
//! use imcred_core::eval::synth::{synth_shift, ShiftSpec};
//! use imcred_core::learners::TrainConfig;
//!
//! // A small shifted benchmark: noisy auxiliary block first, then target.
//! let mut spec = ShiftSpec::default_benchmark();
//! spec.aux_size = 40;
//! spec.target_train_size = 10;
//! spec.test_size = 10;
//! let data = synth_shift(&spec).unwrap();
//!
//! let labels: Vec<u8> = data.instances.iter().filter_map(|i| i.label).collect();
//! let rows: Vec<Vec<f64>> = data
//!     .instances
//!     .iter()
//!     .map(|i| i.features.clone().unwrap())
//!     .collect();
//! let (n, m) = (40, 10);
//! let mut learner = LogRegBoostLearner {
//!     rows: rows[..n + m].to_vec(),
//!     labels: labels[..n + m].to_vec(),
//!     cfg: TrainConfig::default(),
//! };
//! let cfg = BoostConfig::default();
//! let init = init_weights(n, m, InitStrategy::Average, None).unwrap();
//! let run = run_boost(&mut learner, &labels[..n + m], n, m, init, &cfg).unwrap();
//! assert!(!run.ensemble.members.is_empty());
//!
//! // Vote on a held-out instance.
//! let vote = run
//!     .ensemble
//!     .predict_with::<imcred_core::CoreError>(|model| {
//!         model.predict(&rows[n + m]).map(|p| p.label)
//!     })
//!     .unwrap();
//! assert!(vote == 0 || vote == 1);
//! ```

pub mod boost;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod image;
pub mod learners;
pub mod lsh;
pub mod model_io;
pub mod patterns;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use error::{CoreError, Result};
pub use scalar::Real;

// Concrete type aliases for the two supported scalar widths.
pub type TensorF32 = tensor::Tensor<f32>;
pub type TensorF64 = tensor::Tensor<f64>;
pub type ImageTensorF32 = image::ImageTensor<f32>;
pub type ImageTensorF64 = image::ImageTensor<f64>;
pub type DescriptorF32 = features::Descriptor<f32>;
pub type DescriptorF64 = features::Descriptor<f64>;
pub type VocabularyF32 = features::Vocabulary<f32>;
pub type VocabularyF64 = features::Vocabulary<f64>;
pub type ConvNetF32 = learners::ConvNet<f32>;
pub type ConvNetF64 = learners::ConvNet<f64>;
pub type LogRegF32 = learners::LogRegModel<f32>;
pub type LogRegF64 = learners::LogRegModel<f64>;
pub type PredictionF32 = learners::Prediction<f32>;
pub type PredictionF64 = learners::Prediction<f64>;
