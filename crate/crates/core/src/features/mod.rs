//! Hand-crafted baseline features: the 16 text features and a
//! bag-of-visual-words pipeline over dense gradient-orientation descriptors.

pub mod bovw;
pub mod descriptor;
pub mod text;

pub use bovw::{bovw_histogram, build_vocabulary, build_vocabulary_traced, Vocabulary};
pub use descriptor::{extract_descriptors, Descriptor, DESCRIPTOR_DIM};
pub use text::{text_features, Lexicons, TextFeatureVector, TEXT_FEATURE_NAMES};
