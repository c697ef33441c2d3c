use serde::{Deserialize, Serialize};

use super::targets::dataset_estimate;
use crate::error::{Error, Result};
use crate::metrics::{balanced_accuracy_present, spearman};
use crate::numerics::{median, Graph, Tensor, Var};
use crate::simulator::{Task, Tier};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Class4,
    Scalar,
    DatasetScalar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    Mae,
}

/// Identity of a head: its name, output width, target and loss.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub name: String,
    pub output_dim: usize,
    pub target: TargetKind,
    pub loss: LossKind,
}

/// Teacher quantities a head needs attached to its training tasks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TeacherNeeds {
    pub uncertainty: bool,
    pub dataset: bool,
}

impl TeacherNeeds {
    pub fn any(self) -> bool {
        self.uncertainty || self.dataset
    }
}

/// Per-query supervision for one task.
#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    Values(Vec<f64>),
}

/// A readout trained on frozen embeddings.
pub trait DiagnosticHead: Send + Sync {
    fn spec(&self) -> HeadSpec;

    fn teacher_needs(&self) -> TeacherNeeds {
        TeacherNeeds::default()
    }

    /// Per-query targets, or `None` when the task cannot supervise this head.
    fn targets(&self, task: &Task) -> Option<Targets>;

    /// Mean loss of `output` (one row per query) against `targets`.
    fn loss(&self, g: &mut Graph, output: Var, targets: &Targets) -> Result<Var> {
        match (self.spec().loss, targets) {
            (LossKind::CrossEntropy, Targets::Classes(c)) => g.cross_entropy(output, c),
            (LossKind::Mae, Targets::Values(v)) => g.mae(output, v),
            (kind, _) => Err(Error::Contract(format!(
                "head `{}` with {kind:?} loss got mismatched targets",
                self.spec().name
            ))),
        }
    }

    /// Validation metric over held-out tasks (outputs and targets per task).
    fn validation_metric(&self, outputs: &[Tensor], targets: &[Targets]) -> Option<f64>;
}

fn values(t: &Targets) -> &[f64] {
    match t {
        Targets::Values(v) => v,
        Targets::Classes(_) => &[],
    }
}

/// Four-way tier classifier.
pub struct SeverityHead;

impl DiagnosticHead for SeverityHead {
    fn spec(&self) -> HeadSpec {
        HeadSpec {
            name: "severity".into(),
            output_dim: 4,
            target: TargetKind::Class4,
            loss: LossKind::CrossEntropy,
        }
    }

    fn targets(&self, task: &Task) -> Option<Targets> {
        Some(Targets::Classes(task.tiers.iter().map(|t| t.index()).collect()))
    }

    /// Balanced accuracy over all held-out queries.
    fn validation_metric(&self, outputs: &[Tensor], targets: &[Targets]) -> Option<f64> {
        let (mut pred, mut truth) = (Vec::new(), Vec::new());
        for (out, t) in outputs.iter().zip(targets) {
            let Targets::Classes(c) = t else { return None };
            pred.extend((0..out.rows()).map(|i| argmax(out.row(i))));
            truth.extend_from_slice(c);
        }
        balanced_accuracy_present(&pred, &truth, Tier::ALL.len()).ok().map(|r| r.0)
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Regresses the log MC-dropout spread of the outlier probability.
pub struct UncertaintyHead;

impl DiagnosticHead for UncertaintyHead {
    fn spec(&self) -> HeadSpec {
        HeadSpec {
            name: "uncertainty".into(),
            output_dim: 1,
            target: TargetKind::Scalar,
            loss: LossKind::Mae,
        }
    }

    fn teacher_needs(&self) -> TeacherNeeds {
        TeacherNeeds {
            uncertainty: true,
            dataset: false,
        }
    }

    fn targets(&self, task: &Task) -> Option<Targets> {
        task.teacher.u_teacher.clone().map(Targets::Values)
    }

    /// Median per-task Spearman between prediction and teacher.
    fn validation_metric(&self, outputs: &[Tensor], targets: &[Targets]) -> Option<f64> {
        let per_task: Vec<f64> = outputs
            .iter()
            .zip(targets)
            .filter_map(|(o, t)| spearman(o.data(), values(t)).ok())
            .collect();
        median(&per_task)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetQuantity {
    Auroc,
    Threshold,
}

/// Per-query regression toward a dataset-level quantity; the dataset
/// estimate is the mean over queries.
pub struct DatasetHead(pub DatasetQuantity);

impl DiagnosticHead for DatasetHead {
    fn spec(&self) -> HeadSpec {
        HeadSpec {
            name: match self.0 {
                DatasetQuantity::Auroc => "auroc",
                DatasetQuantity::Threshold => "threshold",
            }
            .into(),
            output_dim: 1,
            target: TargetKind::DatasetScalar,
            loss: LossKind::Mae,
        }
    }

    fn teacher_needs(&self) -> TeacherNeeds {
        TeacherNeeds {
            uncertainty: false,
            dataset: true,
        }
    }

    fn targets(&self, task: &Task) -> Option<Targets> {
        let v = match self.0 {
            DatasetQuantity::Auroc => task.teacher.auroc_target,
            DatasetQuantity::Threshold => task.teacher.threshold_target,
        }?;
        Some(Targets::Values(vec![v; task.n_query()]))
    }

    /// Spearman across held-out tasks between estimate and target.
    fn validation_metric(&self, outputs: &[Tensor], targets: &[Targets]) -> Option<f64> {
        let est: Vec<f64> = outputs.iter().map(dataset_estimate).collect();
        let truth: Vec<f64> = targets.iter().map(|t| values(t).first().copied().unwrap_or(f64::NAN)).collect();
        spearman(&est, &truth).ok()
    }
}

/// Heads available by name.
pub struct HeadRegistry {
    heads: Vec<Box<dyn DiagnosticHead>>,
}

impl HeadRegistry {
    pub fn empty() -> Self {
        Self { heads: Vec::new() }
    }

    /// Severity, uncertainty, AUROC and threshold heads.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        for h in [
            Box::new(SeverityHead) as Box<dyn DiagnosticHead>,
            Box::new(UncertaintyHead),
            Box::new(DatasetHead(DatasetQuantity::Auroc)),
            Box::new(DatasetHead(DatasetQuantity::Threshold)),
        ] {
            r.register(h).expect("builtin names are distinct");
        }
        r
    }

    pub fn register(&mut self, head: Box<dyn DiagnosticHead>) -> Result<()> {
        let name = head.spec().name;
        if self.get(&name).is_some() {
            return Err(Error::Config(format!("head `{name}` already registered")));
        }
        self.heads.push(head);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&dyn DiagnosticHead> {
        self.heads.iter().find(|h| h.spec().name == name).map(|h| h.as_ref())
    }

    pub fn names(&self) -> Vec<String> {
        self.heads.iter().map(|h| h.spec().name).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_specs_are_fixed() {
        let r = HeadRegistry::builtin();
        assert_eq!(r.names(), ["severity", "uncertainty", "auroc", "threshold"]);
        let table: Vec<(String, usize, LossKind)> = r
            .names()
            .iter()
            .map(|n| {
                let s = r.get(n).unwrap().spec();
                (s.name, s.output_dim, s.loss)
            })
            .collect();
        assert_eq!(table[0], ("severity".into(), 4, LossKind::CrossEntropy));
        assert_eq!(table[1], ("uncertainty".into(), 1, LossKind::Mae));
        assert_eq!(table[2].1, 1);
        assert_eq!(table[3].2, LossKind::Mae);
        assert!(r.get("attribution").is_none());
    }

    #[test]
    fn duplicate_registration_rejected() {
        let mut r = HeadRegistry::builtin();
        assert!(r.register(Box::new(SeverityHead)).is_err());
    }

    #[test]
    fn severity_validation_is_balanced_accuracy() {
        let out = Tensor::matrix(2, 4, vec![5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 5.0]).unwrap();
        let m = SeverityHead.validation_metric(&[out], &[Targets::Classes(vec![0, 2])]);
        assert_eq!(m, Some(0.5));
    }
}
