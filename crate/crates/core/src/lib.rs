//! Synthetic-data auto-configuration of a geometric 6D pose-estimation pipeline.

pub mod bayes;
pub mod discrete;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod scene;
pub mod scheduler;
pub mod seed;

pub use error::{Error, Result};
pub use geometry::{CameraIntrinsics, DepthImage, ObjectModel, PointCloud, Pose, Symmetry};
pub use par::Parallelism;
