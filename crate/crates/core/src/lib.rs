//! Rank-aware factorization machines.
//!
//! Every feature owns embeddings at levels `1..=k_i` of a shared rank
//! ladder, and a pair of features interacts through the largest level both
//! own. Evaluation runs in time linear in the stored parameters, and
//! training alternates task updates with updates that tie each level to
//! the one above it.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod instrument;
pub mod metrics;
pub mod model;
pub mod snapshot;
pub mod synth;
pub mod train;
pub mod verify;

pub use error::{RafmError, Result};
pub use eval::{evaluate, interaction_naive, predict, LevelScores};
pub use model::{LevelAssignment, RaFMModel, RankLadder, SparseInstance, Task};
