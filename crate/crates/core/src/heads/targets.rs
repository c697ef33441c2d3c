use crate::backbone::{mc_dropout_std, Backbone, Dropout};
use crate::error::Result;
use crate::metrics::{auroc, f1_optimal_threshold};
use crate::numerics::{RandomSource, Tensor};
use crate::simulator::{Scorer, Task, TeacherTargets, Tier};

/// `-log softmax(logits)[tier]`.
pub fn severity_loss(logits: &[f64; 4], tier: Tier) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    lse - logits[tier.index()]
}

/// `ln(u + ε)`.
pub fn uncertainty_target(u: f64, eps: f64) -> f64 {
    (u + eps).ln()
}

pub fn uncertainty_loss(pred: f64, target: f64) -> f64 {
    (pred - target).abs()
}

/// AUROC and F1-optimal threshold of `scores`; `None` for single-class tasks.
///
/// An infinite optimal threshold is clamped into the probability range.
pub fn dataset_targets_from_scores(scores: &[f64], labels: &[u8]) -> Option<(f64, f64)> {
    let a = auroc(scores, labels).ok()?;
    let (tau, _) = f1_optimal_threshold(scores, labels).ok()?;
    Some((a, tau.clamp(0.0, 1.0)))
}

/// Dataset targets of a task under the frozen detector.
pub fn dataset_head_targets(backbone: &Backbone, task: &Task) -> Result<Option<(f64, f64)>> {
    let out = backbone.score(&task.context, &task.queries, Dropout::Off)?;
    Ok(dataset_targets_from_scores(&out.p_outlier, &task.labels))
}

/// Dataset-level estimate of a per-query head: the mean output.
pub fn dataset_estimate(outputs: &Tensor) -> f64 {
    outputs.data().iter().sum::<f64>() / outputs.len() as f64
}

/// Computes teacher targets for freshly generated tasks.
pub struct Teacher<'a> {
    pub backbone: &'a Backbone,
    pub passes: usize,
    pub dropout_p: f64,
    pub eps: f64,
    pub uncertainty: bool,
    pub dataset: bool,
}

impl Scorer for Teacher<'_> {
    fn teacher_targets(
        &self,
        context: &Tensor,
        queries: &Tensor,
        labels: &[u8],
        rng: &mut RandomSource,
    ) -> Result<TeacherTargets> {
        let mut t = TeacherTargets::default();
        if self.uncertainty {
            let u = mc_dropout_std(self.backbone, context, queries, self.passes, self.dropout_p, rng)?;
            t.u_teacher = Some(u.into_iter().map(|u| uncertainty_target(u, self.eps)).collect());
        }
        if self.dataset {
            let out = self.backbone.score(context, queries, Dropout::Off)?;
            if let Some((a, tau)) = dataset_targets_from_scores(&out.p_outlier, labels) {
                t.auroc_target = Some(a);
                t.threshold_target = Some(tau);
            }
        }
        Ok(t)
    }
}
