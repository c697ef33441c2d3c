//! Gaussian-mixture task prior: hypotheses, rejection-sampled pools,
//! severity tiers and task export.

mod config;
pub mod export;
mod hypothesis;
mod task;

pub use config::SimulatorConfig;
pub use hypothesis::{sample_covariance, sample_hypothesis, GaussianComponent, Hypothesis, Inflation};
pub use task::{draw_pool, generate_task, make_task, task_stream, QueryPool, Scorer, Task, TaskDraw, TeacherTargets, Tier};
