//! Synthetic driving-scene generation.
//!
//! The pipeline warps vectorized lane maps with smooth single/double turns,
//! plans pseudo-expert speed profiles along reference paths with a
//! uniform-cost A* search, smooths them with an equality-constrained
//! jerk-penalized quadratic program, and writes fixed-length 10 Hz scenes.
//! Scenes are then vectorized and masked into reconstruction samples for
//! self-supervised pre-training, and compared against other datasets with
//! distribution and forecasting metrics.

pub mod analysis;
pub mod config;
pub mod map_augment;
pub mod map_model;
pub mod planner;
pub mod pretrain_prep;
pub mod refine;
pub mod rng;
pub mod synthesis;

mod fsutil;

pub use map_model::{Point2, Polyline, ReferencePath, SceneMap};
