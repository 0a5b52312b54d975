//! Associative autoencoder filter banks.
//!
//! One small autoencoder per class is trained to reproduce samples of its
//! own class and to map samples of every other class onto fixed uniform
//! noise. A bank of such autoencoders classifies a sample by the smallest
//! reconstruction distance.

pub mod data;
pub mod error;
pub mod experiments;
pub mod filterbank;
pub mod linalg;
pub mod nn;

pub use data::{load_scenario, DatasetKind, LabeledDataset, ScenarioSplit};
pub use error::{Error, Result};
pub use filterbank::{
    accuracy, classify, distances, load_bank, save_bank, train_bank, DistanceMatrix, FilterBank, TrainConfig,
};
pub use linalg::{matmul, rowwise_l2, uniform_matrix, Matrix, Rng};
pub use nn::{AutoencoderParams, ForwardTrace, Gradients};
