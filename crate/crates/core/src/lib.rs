//! Simulator-pretrained in-context outlier detection with diagnostic
//! heads read from frozen query embeddings.

#![allow(clippy::needless_range_loop)]

pub mod backbone;
pub mod cli;
pub mod dataio;
pub mod error;
pub mod heads;
pub mod metrics;
pub mod numerics;
pub mod simulator;

pub use error::{Error, Result};

/// Stream ids for the seeded random source, one per purpose.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const PRETRAIN_TASKS: u64 = 2;
    pub const PRETRAIN_DROPOUT: u64 = 3;
    pub const HEAD_INIT: u64 = 4;
    pub const HEAD_TASKS: u64 = 5;
    pub const TEACHER: u64 = 6;
    pub const EVAL_TASKS: u64 = 7;
    pub const SIMULATE: u64 = 8;
    pub const SPLIT: u64 = 9;
}
