use std::io::Write;
use std::path::Path;

use super::{Backbone, BackboneConfig, Dropout, PretrainSchedule};
use crate::error::{Error, Result};
use crate::numerics::{AdamState, Graph, RandomSource, Var};
use crate::simulator::{generate_task, task_stream, SimulatorConfig, Task};
use crate::streams;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
}

/// Writes `epoch,mean_loss,lr` rows.
pub fn write_loss_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut s = String::from("epoch,mean_loss,lr\n");
    for e in log {
        s.push_str(&format!("{},{:.16e},{:.16e}\n", e.epoch, e.mean_loss, e.lr));
    }
    f.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Mean per-query cross-entropy of the outlier head on one task.
pub fn task_loss(backbone: &Backbone, g: &mut Graph, task: &Task, dropout: Dropout) -> Result<Var> {
    let z = backbone.encode_on(g, &task.context, &task.queries, dropout)?;
    let logits = backbone.od_logits_on(g, z)?;
    let targets: Vec<usize> = task.labels.iter().map(|&y| y as usize).collect();
    g.cross_entropy(logits, &targets)
}

/// Adam on the full backbone, one step per batch of tasks.
pub struct Pretrainer {
    pub backbone: Backbone,
    adam: AdamState,
}

impl Pretrainer {
    pub fn new(mut backbone: Backbone, lr: f64) -> Self {
        backbone.set_trainable(true);
        Self {
            backbone,
            adam: AdamState::new(lr),
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.adam.lr = lr;
    }

    /// One optimizer step on the mean loss over `tasks`. Task `i` draws its
    /// dropout masks from `masks[i]` when dropout is on.
    pub fn step(&mut self, tasks: &[Task], dropout_p: Option<f64>, masks: &mut [RandomSource]) -> Result<f64> {
        let weight = 1.0 / tasks.len() as f64;
        let mut total = 0.0;
        for (task, rng) in tasks.iter().zip(masks.iter_mut()) {
            let mut g = Graph::new();
            let dropout = match dropout_p {
                Some(p) if p > 0.0 => Dropout::On(p, rng),
                _ => Dropout::Off,
            };
            let loss = task_loss(&self.backbone, &mut g, task, dropout)?;
            let value = g.value(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("loss {value}")));
            }
            total += value * weight;
            let scaled = g.scale(loss, weight);
            g.backward_into(scaled, &mut self.backbone.params)?;
        }
        self.adam.step(&mut self.backbone.params)?;
        Ok(total)
    }

    pub fn finish(mut self) -> Backbone {
        self.backbone.set_trainable(false);
        self.backbone
    }
}

/// Pretrains a fresh backbone on simulator tasks drawn from `seed`.
/// `on_epoch` sees each epoch's log entry as it completes.
pub fn pretrain(
    cfg: &BackboneConfig,
    sim: &SimulatorConfig,
    schedule: &PretrainSchedule,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(Backbone, Vec<EpochLog>)> {
    cfg.validate()?;
    sim.validate()?;
    schedule.validate()?;
    if sim.d_max != cfg.d_max {
        return Err(Error::Config(format!(
            "simulator d_max {} differs from backbone d_max {}",
            sim.d_max, cfg.d_max
        )));
    }
    let init = Backbone::init(cfg.clone(), &mut RandomSource::new(seed, streams::INIT))?;
    let mut trainer = Pretrainer::new(init, schedule.lr);
    let dropout_p = schedule.dropout.then_some(cfg.dropout_p);
    let per_epoch = (schedule.batches_per_epoch * schedule.tasks_per_batch) as u64;
    let mut log = Vec::with_capacity(schedule.epochs);
    for epoch in 0..schedule.epochs {
        let lr = schedule.lr_at(epoch);
        trainer.set_lr(lr);
        let mut sum = 0.0;
        for batch in 0..schedule.batches_per_epoch {
            let first = epoch as u64 * per_epoch + (batch * schedule.tasks_per_batch) as u64;
            let ids: Vec<u64> = (first..first + schedule.tasks_per_batch as u64).collect();
            let tasks = ids
                .iter()
                .map(|&id| generate_task(sim, &task_stream(seed, streams::PRETRAIN_TASKS, id), None).map(|(_, t)| t))
                .collect::<Result<Vec<_>>>()?;
            let mut masks: Vec<RandomSource> =
                ids.iter().map(|&id| task_stream(seed, streams::PRETRAIN_DROPOUT, id)).collect();
            let loss = trainer.step(&tasks, dropout_p, &mut masks).map_err(|e| match e {
                Error::NonFinite(m) => Error::NonFinite(format!(
                    "{m} in epoch {epoch}, batch {batch} (seed {seed}, task ids {}..={})",
                    ids[0],
                    ids[ids.len() - 1]
                )),
                other => other,
            })?;
            sum += loss;
        }
        let entry = EpochLog {
            epoch,
            mean_loss: sum / schedule.batches_per_epoch as f64,
            lr,
        };
        on_epoch(&entry);
        log.push(entry);
    }
    Ok((trainer.finish(), log))
}
