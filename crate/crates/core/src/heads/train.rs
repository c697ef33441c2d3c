use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DiagnosticHead, HeadParams, Targets, Teacher};
use crate::backbone::Backbone;
use crate::error::{Error, Result};
use crate::metrics::render;
use crate::numerics::{AdamState, Graph, RandomSource, Tensor};
use crate::simulator::{generate_task, task_stream, Scorer, SimulatorConfig, Task};
use crate::streams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadTrainConfig {
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub datasets_per_batch: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub decay_every: usize,
    /// Stochastic passes for the uncertainty teacher.
    pub mc_passes: usize,
    pub mc_dropout_p: f64,
    pub epsilon: f64,
}

impl Default for HeadTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batches_per_epoch: 25,
            datasets_per_batch: 4,
            lr: 1e-3,
            lr_decay: 0.8,
            decay_every: 10,
            mc_passes: 10,
            mc_dropout_p: 0.1,
            epsilon: 1e-6,
        }
    }
}

impl HeadTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("head_training: {m}")));
        if self.batches_per_epoch == 0 || self.datasets_per_batch == 0 || self.decay_every == 0 {
            return bad("batch, dataset and decay counts must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite() && self.lr_decay > 0.0) {
            return bad("lr and lr_decay must be positive");
        }
        if self.mc_passes < 2 {
            return bad("mc_passes must be at least 2");
        }
        if !(self.mc_dropout_p > 0.0 && self.mc_dropout_p < 1.0) {
            return bad("mc_dropout_p must lie in (0,1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi((epoch / self.decay_every) as i32)
    }

    /// Teacher for the quantities `head` needs, if any.
    pub fn teacher<'a>(&self, backbone: &'a Backbone, head: &dyn DiagnosticHead) -> Option<Teacher<'a>> {
        let needs = head.teacher_needs();
        needs.any().then_some(Teacher {
            backbone,
            passes: self.mc_passes,
            dropout_p: self.mc_dropout_p,
            eps: self.epsilon,
            uncertainty: needs.uncertainty,
            dataset: needs.dataset,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadEpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub val_metric: Option<f64>,
    pub lr: f64,
}

/// Writes `epoch,loss,val_metric,lr` rows; undefined metrics render "—".
pub fn write_head_log(path: &Path, log: &[HeadEpochLog]) -> Result<()> {
    let mut s = String::from("epoch,loss,val_metric,lr\n");
    for e in log {
        s.push_str(&format!("{},{:.16e},{},{:.16e}\n", e.epoch, e.loss, render(e.val_metric), e.lr));
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Tasks with `id % HOLDOUT_MODULUS == HOLDOUT_MODULUS - 1` are held out.
pub const HOLDOUT_MODULUS: u64 = 20;

pub fn is_holdout(task_id: u64) -> bool {
    task_id % HOLDOUT_MODULUS == HOLDOUT_MODULUS - 1
}

/// A generated task with frozen embeddings and this head's targets.
pub struct PreparedTask {
    pub task: Task,
    pub z: Tensor,
    pub targets: Option<Targets>,
}

pub fn prepare_task(
    head: &dyn DiagnosticHead,
    backbone: &Backbone,
    sim: &SimulatorConfig,
    teacher: Option<&dyn Scorer>,
    rng: &RandomSource,
) -> Result<PreparedTask> {
    let (_, task) = generate_task(sim, rng, teacher)?;
    let z = backbone.embed(&task.context, &task.queries)?;
    let targets = head.targets(&task);
    Ok(PreparedTask { task, z, targets })
}

/// Trains one head on frozen embeddings of freshly generated tasks.
///
/// The backbone fingerprint is checked before and after training.
pub fn train_head(
    head: &dyn DiagnosticHead,
    backbone: &Backbone,
    sim: &SimulatorConfig,
    cfg: &HeadTrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&HeadEpochLog),
) -> Result<(HeadParams, Vec<HeadEpochLog>)> {
    sim.validate()?;
    cfg.validate()?;
    if sim.d_max != backbone.config.d_max {
        return Err(Error::Config(format!(
            "simulator d_max {} differs from checkpoint d_max {}",
            sim.d_max, backbone.config.d_max
        )));
    }
    let before = backbone.fingerprint()?;
    let spec = head.spec();
    let mut hp = HeadParams::init(spec.clone(), backbone.config.token_dim, &mut RandomSource::new(seed, streams::HEAD_INIT))?;
    let teacher = cfg.teacher(backbone, head);
    let teacher = teacher.as_ref().map(|t| t as &dyn Scorer);
    let mut adam = AdamState::new(cfg.lr);
    let per_epoch = (cfg.batches_per_epoch * cfg.datasets_per_batch) as u64;
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        adam.lr = lr;
        let (mut val_out, mut val_targets) = (Vec::new(), Vec::new());
        let (mut loss_sum, mut steps) = (0.0, 0usize);
        for batch in 0..cfg.batches_per_epoch {
            let first = epoch as u64 * per_epoch + (batch * cfg.datasets_per_batch) as u64;
            let mut train = Vec::new();
            for id in first..first + cfg.datasets_per_batch as u64 {
                let p = prepare_task(head, backbone, sim, teacher, &task_stream(seed, streams::HEAD_TASKS, id))?;
                let Some(targets) = p.targets else { continue };
                if is_holdout(id) {
                    val_out.push(p.z);
                    val_targets.push(targets);
                } else {
                    train.push((p.z, targets));
                }
            }
            if train.is_empty() {
                continue;
            }
            hp.set_trainable(true);
            let weight = 1.0 / train.len() as f64;
            let mut batch_loss = 0.0;
            for (z, targets) in &train {
                let mut g = Graph::new();
                let zv = g.constant(z.clone());
                let out = hp.forward_on(&mut g, zv)?;
                let loss = head.loss(&mut g, out, targets)?;
                let value = g.value(loss).data()[0];
                if !value.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "head `{}` loss {value} in epoch {epoch}, batch {batch} (seed {seed})",
                        spec.name
                    )));
                }
                batch_loss += value * weight;
                let scaled = g.scale(loss, weight);
                g.backward_into(scaled, &mut hp.params)?;
            }
            adam.step(&mut hp.params)?;
            loss_sum += batch_loss;
            steps += 1;
        }
        hp.set_trainable(false);
        let outputs = val_out.iter().map(|z| hp.forward(z)).collect::<Result<Vec<_>>>()?;
        let entry = HeadEpochLog {
            epoch,
            loss: if steps > 0 { loss_sum / steps as f64 } else { f64::NAN },
            val_metric: head.validation_metric(&outputs, &val_targets),
            lr,
        };
        on_epoch(&entry);
        log.push(entry);
    }
    hp.set_trainable(false);
    if backbone.fingerprint()? != before {
        return Err(Error::Contract("backbone parameters changed during head training".into()));
    }
    Ok((hp, log))
}
