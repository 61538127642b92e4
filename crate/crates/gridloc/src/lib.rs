//! Gridworld deep Q-learning for lesion localization on 2D images.
//!
//! An image plus binary lesion mask becomes a small deterministic MDP: the
//! agent is a block-sized window starting at the top-left, with stay/down/
//! right actions and a reward that pays off for overlapping the lesion. A
//! from-scratch convolutional Q network learns the task from a replay buffer
//! of transitions; exact tabular solvers provide ground truth, and a
//! supervised keypoint regressor with the same backbone serves as the
//! comparison baseline.

pub mod agent_dqn;
pub mod baseline;
pub mod config;
pub mod data_io;
pub mod error;
pub mod experiment;
pub mod grid_env;
pub mod metrics;
pub mod neuro;
pub mod oracle;
pub mod plot;
pub mod replay;
pub mod stats;

pub use error::{Error, Result};
