//! Loop-closing engine for visual SLAM maps.
//!
//! The crate detects revisited regions in a keyframe map, estimates the
//! Sim(3) correction between the current keyframe and the matched region,
//! fuses duplicate landmarks across the loop, and propagates the correction
//! through an essential-graph pose optimization. A synthetic-world harness
//! generates drifting trajectories with ground-truth loop labels and
//! measures per-stage timings and trajectory error.
//!
//! Pose convention: all stored poses are world-to-camera (`T_cw` / `S_cw`).
//! A pose maps world points into the camera frame; camera centers are
//! recovered with [`geometry::Se3::camera_center`].
//!
//! Parallel stages (projection search, triple verification, fusion
//! planning, pose-graph edge evaluation) run on the worker pool in
//! [`runtime`] and are bit-deterministic across worker counts.

pub mod correct;
pub mod detect;
pub mod geometry;
pub mod harness;
pub mod map;
pub mod matching;
pub mod posegraph;
pub mod runtime;

pub use geometry::{CameraIntrinsics, Se3, Sim3, Sim3Tangent, Vec3};
pub use map::{Descriptor, KeyFrame, KeyFrameId, Map, MapPoint, MapPointId};
pub use runtime::Runtime;
