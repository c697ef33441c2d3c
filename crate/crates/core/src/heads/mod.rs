//! Diagnostic readouts on frozen query embeddings, selected by name from a
//! registry of [`DiagnosticHead`] strategies.

mod diagnose;
mod params;
mod registry;
mod targets;
mod train;

pub use diagnose::{check_heads, diagnose, DatasetDiagnosis, Diagnosis, QueryDiagnosis};
pub use params::{HeadParams, HEAD_MAGIC};
pub use registry::{
    DatasetHead, DatasetQuantity, DiagnosticHead, HeadRegistry, HeadSpec, LossKind, SeverityHead, TargetKind,
    Targets, TeacherNeeds, UncertaintyHead,
};
pub use targets::{
    dataset_estimate, dataset_head_targets, dataset_targets_from_scores, severity_loss, uncertainty_loss,
    uncertainty_target, Teacher,
};
pub use train::{
    is_holdout, prepare_task, train_head, write_head_log, HeadEpochLog, HeadTrainConfig, PreparedTask,
    HOLDOUT_MODULUS,
};
