use serde::{Deserialize, Serialize};

use super::{sample_hypothesis, Hypothesis, SimulatorConfig};
use crate::error::{Error, Result};
use crate::numerics::{median, RandomSource, Tensor};

/// Severity tier; the discriminant is the class index used everywhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tier {
    SN = 0,
    LN = 1,
    LO = 2,
    SO = 3,
}

impl Tier {
    pub const ALL: [Tier; 4] = [Tier::SN, Tier::LN, Tier::LO, Tier::SO];

    /// Four-way split of each class at its within-class median of `r`.
    /// Ties with the median fall into the "likely normal"/"surely outlier" side.
    pub fn assign(label: u8, r: f64, m0: f64, m1: f64) -> Tier {
        match (label, r) {
            (0, r) if r > m0 => Tier::SN,
            (0, _) => Tier::LN,
            (_, r) if r > m1 => Tier::LO,
            _ => Tier::SO,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Tier> {
        Tier::ALL.get(i).copied()
    }

    pub fn is_normal(self) -> bool {
        matches!(self, Tier::SN | Tier::LN)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::SN => "SN",
            Tier::LN => "LN",
            Tier::LO => "LO",
            Tier::SO => "SO",
        }
    }

    pub fn parse(s: &str) -> Option<Tier> {
        Tier::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

/// Targets that need a trained detector to compute.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TeacherTargets {
    /// `ln(u + ε)` per query, `u` the MC-dropout standard deviation.
    pub u_teacher: Option<Vec<f64>>,
    pub auroc_target: Option<f64>,
    pub threshold_target: Option<f64>,
}

/// Read-only handle that derives teacher targets for a materialized task.
pub trait Scorer: Sync {
    fn teacher_targets(
        &self,
        context: &Tensor,
        queries: &Tensor,
        labels: &[u8],
        rng: &mut RandomSource,
    ) -> Result<TeacherTargets>;
}

/// Query pool of a task with its density scores and tiers.
#[derive(Clone, Debug)]
pub struct QueryPool {
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub r: Vec<f64>,
    pub tiers: Vec<Tier>,
    pub m0: f64,
    pub m1: f64,
}

/// Context inliers plus the query pool, in active coordinates.
#[derive(Clone, Debug)]
pub struct TaskDraw {
    pub context: Vec<Vec<f64>>,
    pub pool: QueryPool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    /// `n_context × d_max`, inliers only, zero in inactive columns.
    pub context: Tensor,
    /// `n_query × d_max`.
    pub queries: Tensor,
    pub labels: Vec<u8>,
    pub tiers: Vec<Tier>,
    pub r: Vec<f64>,
    pub m0: f64,
    pub m1: f64,
    pub teacher: TeacherTargets,
}

impl Task {
    pub fn n_query(&self) -> usize {
        self.labels.len()
    }
}

/// Samples the inlier/outlier pools, splits off the context and scores the
/// remaining pool. Medians are taken over the whole pool.
pub fn draw_pool(h: &Hypothesis, cfg: &SimulatorConfig, rng: &mut RandomSource) -> Result<TaskDraw> {
    let mut inliers = h.sample_inliers(cfg.n_inlier_pool, &mut rng.derive(0))?;
    let outliers = h.sample_outliers(cfg.n_outlier_pool, &mut rng.derive(1))?;
    let pool_inliers = inliers.split_off(cfg.n_context);
    let context = inliers;

    let mut points = pool_inliers;
    let n_in = points.len();
    points.extend(outliers);
    let labels: Vec<u8> = (0..points.len()).map(|i| u8::from(i >= n_in)).collect();
    let r: Vec<f64> = points.iter().map(|x| h.log_density_max(x)).collect();
    let m0 = median(&r[..n_in]).ok_or_else(|| Error::Simulator("empty inlier pool".into()))?;
    let m1 = median(&r[n_in..]).ok_or_else(|| Error::Simulator("empty outlier pool".into()))?;
    let tiers = labels
        .iter()
        .zip(&r)
        .map(|(&y, &rv)| Tier::assign(y, rv, m0, m1))
        .collect();
    Ok(TaskDraw {
        context,
        pool: QueryPool {
            points,
            labels,
            r,
            tiers,
            m0,
            m1,
        },
    })
}

/// Materializes a task from a hypothesis.
pub fn make_task(
    h: &Hypothesis,
    cfg: &SimulatorConfig,
    rng: &mut RandomSource,
    scorer: Option<&dyn Scorer>,
) -> Result<Task> {
    let draw = draw_pool(h, cfg, &mut rng.derive(10))?;
    let pool = &draw.pool;
    let n_in_pool = pool.labels.iter().filter(|&&y| y == 0).count();
    let n_out_pool = pool.labels.len() - n_in_pool;

    let mut pick = rng.derive(11);
    let mut chosen: Vec<usize> = pick.subset(cfg.n_query_inliers(), n_in_pool)?;
    chosen.extend(pick.subset(cfg.n_query_outliers(), n_out_pool)?.into_iter().map(|i| i + n_in_pool));
    let order = pick.permutation(chosen.len());
    let chosen: Vec<usize> = order.into_iter().map(|i| chosen[i]).collect();

    let pad_rows = |rows: &mut dyn Iterator<Item = &Vec<f64>>| -> Vec<f64> {
        rows.flat_map(|x| h.pad(x)).collect()
    };
    let context = Tensor::matrix(
        draw.context.len(),
        h.d_max,
        pad_rows(&mut draw.context.iter()),
    )?;
    let queries = Tensor::matrix(
        chosen.len(),
        h.d_max,
        pad_rows(&mut chosen.iter().map(|&i| &pool.points[i])),
    )?;
    let labels: Vec<u8> = chosen.iter().map(|&i| pool.labels[i]).collect();
    let teacher = match scorer {
        Some(s) => s.teacher_targets(&context, &queries, &labels, &mut rng.derive(12))?,
        None => TeacherTargets::default(),
    };
    Ok(Task {
        context,
        queries,
        tiers: chosen.iter().map(|&i| pool.tiers[i]).collect(),
        r: chosen.iter().map(|&i| pool.r[i]).collect(),
        labels,
        m0: pool.m0,
        m1: pool.m1,
        teacher,
    })
}

const MAX_HYPOTHESIS_ATTEMPTS: u64 = 64;

/// Samples a hypothesis and task on the given stream, resampling the
/// hypothesis whenever rejection sampling runs out of budget.
pub fn generate_task(
    cfg: &SimulatorConfig,
    rng: &RandomSource,
    scorer: Option<&dyn Scorer>,
) -> Result<(Hypothesis, Task)> {
    let mut last = None;
    for attempt in 0..MAX_HYPOTHESIS_ATTEMPTS {
        let stream = rng.derive(attempt);
        let h = sample_hypothesis(cfg, &mut stream.derive(0))?;
        match make_task(&h, cfg, &mut stream.derive(1), scorer) {
            Ok(task) => return Ok((h, task)),
            Err(e @ Error::Simulator(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::Simulator("no hypothesis attempts".into())))
}

/// Stream for task `task_id` of a named purpose under `seed`.
pub fn task_stream(seed: u64, purpose: u64, task_id: u64) -> RandomSource {
    RandomSource::new(seed, purpose).derive(task_id)
}
