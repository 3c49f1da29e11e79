//! Rigid-body transforms, stored world-to-camera.

use serde::{Deserialize, Serialize};

use super::quat::Quat;
use super::vec::Vec3;

/// SE(3) pose `T_cw`: maps world points into the camera frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Se3 {
    pub rotation: Quat,
    pub translation: Vec3,
}

impl Se3 {
    pub fn identity() -> Self {
        Self {
            rotation: Quat::identity(),
            translation: Vec3::zero(),
        }
    }

    pub fn new(rotation: Quat, translation: Vec3) -> Self {
        Self {
            rotation: rotation.normalized(),
            translation,
        }
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    /// `self * rhs`: apply `rhs` first, then `self`.
    pub fn compose(&self, rhs: &Se3) -> Se3 {
        Se3 {
            rotation: self.rotation.compose(rhs.rotation),
            translation: self.rotation.rotate(rhs.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Se3 {
        let rot_inv = self.rotation.conjugate();
        Se3 {
            rotation: rot_inv,
            translation: -rot_inv.rotate(self.translation),
        }
    }

    /// Camera center in world coordinates: `-R^T t`.
    pub fn camera_center(&self) -> Vec3 {
        -self.rotation.conjugate().rotate(self.translation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compose_inverse_is_identity() {
        let pose = Se3::new(
            Quat::exp_so3(Vec3::new(0.4, -0.2, 0.9)),
            Vec3::new(1.0, -2.0, 0.5),
        );
        let e = pose.compose(&pose.inverse());
        assert!((e.translation).norm() < 1e-12);
        assert!((e.rotation.w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn camera_center_maps_to_origin() {
        let pose = Se3::new(
            Quat::exp_so3(Vec3::new(-0.1, 0.8, 0.3)),
            Vec3::new(0.7, 0.1, -1.4),
        );
        let c = pose.camera_center();
        assert!(pose.apply(c).norm() < 1e-12);
    }
}
