use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backbone::{BackboneConfig, PretrainSchedule};
use crate::dataio::DEFAULT_CONTEXT_FRACTION;
use crate::error::{Error, Result};
use crate::heads::HeadTrainConfig;
use crate::simulator::SimulatorConfig;

/// Evaluation, validation and benchmark settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Share of a CSV dataset's inliers used as context.
    pub context_fraction: f64,
    /// Held-out tasks scored after pretraining.
    pub validation_tasks: usize,
    pub bench_reps: usize,
    pub bench_context: usize,
    pub bench_tasks: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            context_fraction: DEFAULT_CONTEXT_FRACTION,
            validation_tasks: 20,
            bench_reps: 100,
            bench_context: 256,
            bench_tasks: 4,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.context_fraction > 0.0 && self.context_fraction < 1.0) {
            return Err(Error::Config("eval: context_fraction must lie in (0,1)".into()));
        }
        if self.bench_reps < 10 {
            return Err(Error::Config("eval: bench_reps must be at least 10".into()));
        }
        if self.bench_context == 0 || self.bench_tasks == 0 {
            return Err(Error::Config("eval: bench_context and bench_tasks must be positive".into()));
        }
        Ok(())
    }
}

/// Every section and field is optional; missing values take the defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub simulator: SimulatorConfig,
    pub backbone: BackboneConfig,
    pub pretrain: PretrainSchedule,
    pub head_training: HeadTrainConfig,
    pub eval: EvalConfig,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.simulator.validate()?;
        self.backbone.validate()?;
        self.pretrain.validate()?;
        self.head_training.validate()?;
        self.eval.validate()?;
        if self.simulator.d_max != self.backbone.d_max {
            return Err(Error::Config(format!(
                "simulator.d_max {} differs from backbone.d_max {}",
                self.simulator.d_max, self.backbone.d_max
            )));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Hex SHA-256 of the resolved configuration's compact JSON.
    pub fn sha256(&self) -> Result<String> {
        let json = serde_json::to_string(self)?;
        Ok(hex::encode(Sha256::digest(json.as_bytes())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        assert_eq!(RunConfig::parse("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_sections_fill_defaults() {
        let c = RunConfig::parse(r#"{"pretrain": {"epochs": 2}, "seed": 7}"#).unwrap();
        assert_eq!(c.pretrain.epochs, 2);
        assert_eq!(c.pretrain.lr, PretrainSchedule::default().lr);
        assert_eq!(c.seed, Some(7));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::parse(r#"{"simulatr": {}}"#), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse(r#"{"backbone": {"width": 3}}"#), Err(Error::Config(_))));
    }

    #[test]
    fn nested_constraints_enforced() {
        let e = RunConfig::parse(r#"{"simulator": {"d_max": 8, "d_range": [2, 8]}}"#).unwrap_err();
        assert!(e.to_string().contains("d_max"), "{e}");
        assert!(RunConfig::parse(r#"{"head_training": {"mc_passes": 1}}"#).is_err());
        assert!(RunConfig::parse(r#"{"eval": {"bench_reps": 5}}"#).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.sha256().unwrap(), b.sha256().unwrap());
        b.seed = Some(1);
        assert_ne!(a.sha256().unwrap(), b.sha256().unwrap());
    }
}
