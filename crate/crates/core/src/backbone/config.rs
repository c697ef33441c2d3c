use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture of the in-context detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneConfig {
    pub d_max: usize,
    pub token_dim: usize,
    pub n_layers: usize,
    pub n_attn_heads: usize,
    pub mlp_ratio: usize,
    pub dropout_p: f64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            d_max: 16,
            token_dim: 64,
            n_layers: 2,
            n_attn_heads: 4,
            mlp_ratio: 4,
            dropout_p: 0.1,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("backbone: {msg}")));
        if self.d_max == 0 || self.token_dim == 0 || self.mlp_ratio == 0 {
            return bad("d_max, token_dim and mlp_ratio must be positive".into());
        }
        if self.n_attn_heads == 0 || !self.token_dim.is_multiple_of(self.n_attn_heads) {
            return bad(format!(
                "token_dim {} is not divisible by n_attn_heads {}",
                self.token_dim, self.n_attn_heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad(format!("dropout_p {} must lie in [0,1)", self.dropout_p));
        }
        Ok(())
    }
}

/// Pretraining loop settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSchedule {
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub tasks_per_batch: usize,
    pub lr: f64,
    /// Multiplier applied every `decay_every` epochs.
    pub lr_decay: f64,
    pub decay_every: usize,
    /// Train with dropout at the configured probability.
    pub dropout: bool,
}

impl Default for PretrainSchedule {
    fn default() -> Self {
        Self {
            epochs: 20,
            batches_per_epoch: 25,
            tasks_per_batch: 8,
            lr: 1e-3,
            lr_decay: 0.8,
            decay_every: 10,
            dropout: true,
        }
    }
}

impl PretrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.batches_per_epoch == 0 || self.tasks_per_batch == 0 || self.decay_every == 0 {
            return Err(Error::Config("pretrain: batch, task and decay counts must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite() && self.lr_decay > 0.0) {
            return Err(Error::Config("pretrain: lr and lr_decay must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (zero-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi((epoch / self.decay_every) as i32)
    }
}
