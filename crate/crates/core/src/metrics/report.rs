use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{render, TierRow};
use crate::error::{Error, Result};

/// Severity-head section of a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeverityReport {
    /// Over the tiers present in the truth; `None` without ground-truth tiers.
    pub balanced_accuracy: Option<f64>,
    pub tier_table: Vec<TierRow>,
    pub outlier_fraction_by_tier: [Option<f64>; 4],
}

/// Wall-clock cost of diagnosis per query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub reps: usize,
    pub backbone_ns_per_sample: f64,
    pub with_heads_ns_per_sample: f64,
    /// `(with_heads - backbone) / backbone`.
    pub relative_overhead: f64,
    /// Median absolute deviation of the backbone-only timings.
    pub backbone_mad_ns: f64,
}

/// Per-dataset row of a report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub dataset: String,
    pub n_query: usize,
    pub auroc: Option<f64>,
    pub balanced_accuracy: Option<f64>,
    pub uncertainty_spearman: Option<f64>,
    pub auroc_estimate: Option<f64>,
    pub threshold_estimate: Option<f64>,
    pub threshold_true: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_datasets: usize,
    pub n_queries: usize,
    /// Mean per-dataset AUROC of the outlier score.
    pub auroc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<SeverityReport>,
    /// Named rank correlations; `None` where undefined.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub spearman: BTreeMap<String, Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
    pub datasets: Vec<DatasetRow>,
}

impl EvalReport {
    pub fn balanced_accuracy(&self) -> Option<f64> {
        self.severity.as_ref().and_then(|s| s.balanced_accuracy)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// One row per dataset; undefined values render as "—".
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "dataset",
            "n_query",
            "auroc",
            "balanced_accuracy",
            "uncertainty_spearman",
            "auroc_estimate",
            "threshold_estimate",
            "threshold_true",
        ])?;
        for r in &self.datasets {
            w.write_record([
                r.dataset.clone(),
                r.n_query.to_string(),
                render(r.auroc),
                render(r.balanced_accuracy),
                render(r.uncertainty_spearman),
                render(r.auroc_estimate),
                render(r.threshold_estimate),
                render(r.threshold_true),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Contract(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Contract(e.to_string()))
    }

    pub fn write(&self, json_path: &Path, csv_path: &Path) -> Result<()> {
        std::fs::write(json_path, self.to_json()?).map_err(|e| Error::io(json_path, e))?;
        std::fs::write(csv_path, self.to_csv()?).map_err(|e| Error::io(csv_path, e))
    }
}
