//! Singletask, block multitask and hierarchical multitask CTC models, their
//! training loop, frame-stacking augmentation, parameter-parity sizing and
//! checkpoints.

mod augment;
mod checkpoint;
mod config;
mod graph;
mod parity;
mod train;

pub use augment::{stack_frames, subsample_augment};
pub use config::{RunConfig, TopologyConfig, TopologyKind, TrainingConfig};
pub use graph::{build_model, count_params, Head, ModelGraph, UtteranceLoss};
pub use parity::{stl_parity, ParityReport};
pub use train::{
    encode_targets, length_sorted_batches, model_inputs, prepare_examples, train, train_step,
    EpochStats, MultitaskLoss, TrainingExample,
};
