//! Anchor-point based camera relocalization.
//!
//! A shared feature trunk feeds three heads: a classifier scoring every
//! anchor, a regressor for the horizontal offset of the camera from every
//! anchor, and an absolute regressor for height and orientation. Training
//! weights each anchor's offset residual by its softmax confidence, so the
//! network picks the anchor it can regress from best without being told
//! which one that is.
//!
//! Modules:
//!
//! - [`geometry`]: poses, quaternions, anchor maps and offset tables
//! - [`model`]: the three-head network with exact reverse-mode gradients
//! - [`loss`]: the multi-task loss and its gradient
//! - [`optim`]: Adam, learning-rate schedule, training loop
//! - [`simworld`]: synthetic landmark world with occlusion
//! - [`data`]: dataset files and assembly
//! - [`eval`]: pose reconstruction and metrics
//! - [`experiment`]: train/evaluate pipelines and the anchor-interval sweep
//! - [`checkpoint`]: binary parameter/optimizer snapshots
//! - [`config`]: TOML run configuration and snapshots

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod geometry;
pub mod loss;
pub mod model;
pub mod optim;
pub mod simworld;

pub use error::{Error, Result};
pub use geometry::{AnchorMap, OffsetTable, Pose, Quat};
pub use loss::{LossBreakdown, LossWeights};
pub use model::{Activation, NetworkSpec, Parameters, PosePrediction};
pub use optim::{TrainConfig, TrainReport};
