//! Dense multi-level supervised autoencoder: architecture, composite
//! objective, training loop, collapse detection and latent export.
//!
//! Every dense encoder layer contributes its activations to the multi-level
//! latent `Ψ`, which feeds the supervised head, the representation loss and
//! the 2-D projection head. Only the bottleneck `z` is ever exported.

pub mod artifact;
mod model;
mod objective;
mod spec;
mod train;

pub use artifact::{load_model, read_header, save_model, ArtifactHeader, OPERATOR_WHITELIST};
pub use model::{encode_batch, forward_multilevel, EncoderModel, ForwardPass, LatentBatch, TrainMeta};
pub use objective::{composite_loss, Batch, Components, CompositeLoss, PredLoss, ReprLoss, TrainConfig};
pub use spec::{EncoderSpec, Head};
pub use train::{detect_collapse, train, CollapseReport, EpochLog, TrainingLog};
