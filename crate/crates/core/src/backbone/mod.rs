//! In-context outlier detector: context-standardized token embedding,
//! masked pre-norm transformer encoder and a two-logit outlier head.

mod config;
pub(crate) mod container;
mod mc;
mod model;
mod pretrain;

pub use config::{BackboneConfig, PretrainSchedule};
pub use mc::{mc_dropout_std, sample_std};
pub use model::{encode_calls, normalize, outlier_probability, Backbone, Dropout, NormStats, OdOutput, CHECKPOINT_MAGIC, STD_FLOOR};
pub use pretrain::{pretrain, task_loss, write_loss_log, EpochLog, Pretrainer};

#[cfg(test)]
mod gradcheck;
