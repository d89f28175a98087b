//! Datasets and training loops for WGSEF-regularized models.

pub mod data;
pub mod error;
pub mod train;

pub use data::{Dataset, SyntheticGroupSpec};
pub use error::{Result, TrainError};
pub use train::{evaluate, hspg_train, train, EpochRecord, HspgConfig, TrainConfig, TrainOutcome};
