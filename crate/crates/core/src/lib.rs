//! Sparse LiDAR depth enrichment and NDT odometry.
//!
//! The crate covers the whole chain: reading KITTI-style scans and depth
//! maps, simulating low-channel sensors, a small reverse-mode tensor
//! framework with sparsity-invariant convolution, the completion networks
//! built on it, ICP/NDT registration, and an odometry pipeline with
//! trajectory evaluation.

pub mod cli;
pub mod completion;
pub mod error;
pub mod grid;
pub mod micrograd;
pub mod pointcloud_io;
pub mod registration;
pub mod slam;
pub mod sparsity;

pub use error::{Error, Result};
pub use grid::Grid;
pub use pointcloud_io::{CameraIntrinsics, DepthImage, PointCloud, ScanSequence};
pub use registration::Pose6;
