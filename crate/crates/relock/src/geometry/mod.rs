//! Lie-group primitives and pinhole projection.
//!
//! All stored poses are world-to-camera (`T_cw` for SE(3), `S_cw` for
//! Sim(3)): applying a pose to a world point yields camera-frame
//! coordinates. Every operation here is a pure function over immutable
//! values and is safe to call concurrently.
//!
//! The core transforms are generic over [`scalar::Real`] so the same
//! formulas run on `f64` and on forward-mode dual numbers; the exported
//! type aliases default to `f64`.

pub mod camera;
pub mod quat;
pub mod scalar;
pub mod se3;
pub mod sim3;
pub mod vec;

pub use camera::{CameraIntrinsics, DEPTH_EPSILON};
pub use quat::Quat;
pub use scalar::Real;
pub use se3::Se3;
pub use sim3::{Sim3, Sim3Tangent};
pub use vec::{Mat3, Vec3};

/// Angle magnitudes below this switch exp/log to second-order Taylor
/// branches; also applied to the log-scale component of Sim(3) tangents.
pub const SMALL_ANGLE: f64 = 1e-5;

/// Errors from geometry operations with restricted domains.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    /// Logarithm requested for a rotation too close to the π branch cut.
    #[error("rotation angle {angle} is within {margin} of pi; log is ambiguous")]
    RotationNearPi { angle: f64, margin: f64 },
}
