//! Batched, synchronous value iteration.
//!
//! Each sweep reads only the previous value vector and writes a fresh one, so
//! states are independent within a sweep. States are processed in fixed-size
//! batches (the final batch padded with copies of state 0, whose outputs are
//! discarded) and the states of a batch are backed up in parallel on the
//! current rayon pool. Within a backup, actions and outcomes are summed in a
//! fixed order, which makes results bitwise independent of batch size and
//! thread count.

mod checkpoint;
mod convergence;
mod engine;

pub use checkpoint::{
    checkpoint_path, list_checkpoints, load_checkpoint, load_checkpoint_for, save_checkpoint,
    ValueFunction, MAGIC,
};
pub use convergence::check_convergence;
pub use engine::{
    backup_state, bellman_backup_batch, extract_policy, Policy, StopReason, ValueIteration,
    ViConfig, ViResult,
};

use std::fmt::Debug;

/// Floating-point type used to store and accumulate values.
pub trait Real: num_traits::Float + Default + Debug + Send + Sync + 'static {
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

impl Real for f32 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f32" | "32" => Ok(Precision::F32),
            "f64" | "64" => Ok(Precision::F64),
            other => Err(format!("unknown precision {other:?}, expected f32 or f64")),
        }
    }
}
