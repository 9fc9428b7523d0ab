//! Geometric core for piecewise planar 3D reconstruction from RGB-D frames.
//!
//! The crate covers the full offline pipeline around plane-based scene
//! models: camera geometry and depth/coordinate maps ([`geometry`]),
//! plane parameterization, fitting and the mask-weighted offset estimate
//! ([`plane`]), anchor-normal clustering and residual encoding
//! ([`anchors`]), a differentiable two-view warping consistency loss
//! ([`warp`]), ground-truth benchmark construction — RANSAC plane
//! extraction, pose-failure filtering, mask rasterization and layout
//! occlusion completion ([`benchmark`]), soft-mask segmentation assembly
//! ([`segmentation`]), detection and segmentation quality metrics
//! ([`metrics`]), and the on-disk formats tying it together ([`io`]).
//!
//! Everything is deterministic: randomized algorithms take explicit
//! seeds, and no global state is consulted.

pub mod anchors;
pub mod benchmark;
pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod plane;
pub mod segmentation;
pub mod warp;

pub use error::{PlanarError, Result};
pub use geometry::{CameraIntrinsics, CoordinateMap, DepthMap, PixelCoord, Pose};
pub use plane::{InstanceMask, Plane};
