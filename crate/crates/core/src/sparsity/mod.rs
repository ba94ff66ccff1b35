//! Compressibility of depth maps and where their structure lives: DCT
//! best-k-term reconstruction, depth discontinuities versus image edges,
//! and the segmentation prior fed to the fusion network.

mod compress;
mod dct;
mod edges;

pub use compress::{compress_depth, CompressionReport};
pub use dct::{dct2, idct2, Dct2};
pub use edges::{depth_discontinuity, image_edges, segmentation_prior, DiscontinuityMap, PRIOR_CHANNELS};
