//! The multi-task attribute classifier.
//!
//! Architecture: `input -> dense+BN+ReLU+dropout (trunk)`, then per attribute
//! `dense+BN+ReLU+dropout -> dense -> softmax`. The softmax layer carries neither
//! batch normalization nor dropout. Class 0 of every branch means "true".

mod adam;
mod config;
mod format;
mod network;
mod reliability;
mod train;

pub use adam::{Adam, AdamConfig};
pub use config::{MacConfig, ReliabilityConfig, TrainingConfig};
pub use network::{ForwardMode, MacModel, Predictions};
pub use reliability::{
    pairwise_abs_sum, pairwise_abs_sum_reference, predict_with_reliability, reliability,
    reliability_reference, stochastic_outputs, StochasticOutputs,
};
pub use train::{loss_and_gradients, train, EpochLog, TrainingLog};
