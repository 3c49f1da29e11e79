//! Pinhole camera model.

use serde::{Deserialize, Serialize};

use super::scalar::Real;
use super::vec::Vec3;

/// Points closer to the image plane than this are treated as out of view.
pub const DEPTH_EPSILON: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Self {
        assert!(fx > 0.0 && fy > 0.0, "focal lengths must be positive");
        assert!(width > 0 && height > 0, "image size must be positive");
        Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        }
    }

    /// Project a camera-frame point. Returns `None` when the point is
    /// behind the camera (or closer than [`DEPTH_EPSILON`]) or the pixel
    /// falls outside `[0, width) x [0, height)`.
    pub fn project(&self, p_cam: Vec3) -> Option<[f64; 2]> {
        if p_cam.z <= DEPTH_EPSILON {
            return None;
        }
        let u = self.fx * p_cam.x / p_cam.z + self.cx;
        let v = self.fy * p_cam.y / p_cam.z + self.cy;
        if u < 0.0 || u >= self.width as f64 || v < 0.0 || v >= self.height as f64 {
            return None;
        }
        Some([u, v])
    }

    /// Pinhole formula without the visibility checks, generic over the
    /// scalar so residuals can be differentiated. The caller is
    /// responsible for depth sanity.
    pub fn project_unchecked<T: Real>(&self, p_cam: Vec3<T>) -> [T; 2] {
        let u = T::from_f64(self.fx) * p_cam.x / p_cam.z + T::from_f64(self.cx);
        let v = T::from_f64(self.fy) * p_cam.y / p_cam.z + T::from_f64(self.cy);
        [u, v]
    }

    /// Back-project a pixel at the given depth into the camera frame.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        Vec3::new(
            (u - self.cx) / self.fx * depth,
            (v - self.cy) / self.fy * depth,
            depth,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480)
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let px = intr().project(Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(px, [320.0, 240.0]);
    }

    #[test]
    fn hand_evaluated_projection() {
        // fx=fy=500, cx=320, cy=240: (1,0,2) -> (500*0.5+320, 240)
        let px = intr().project(Vec3::new(1.0, 0.0, 2.0)).unwrap();
        assert_eq!(px, [570.0, 240.0]);
    }

    #[test]
    fn behind_camera_is_out_of_view() {
        assert!(intr().project(Vec3::new(0.0, 0.0, -1.0)).is_none());
        assert!(intr().project(Vec3::new(0.0, 0.0, 0.0)).is_none());
    }

    #[test]
    fn outside_bounds_is_out_of_view() {
        assert!(intr().project(Vec3::new(10.0, 0.0, 1.0)).is_none());
    }

    #[test]
    fn project_unproject_is_identity() {
        let intr = intr();
        for &(u, v) in &[(12.5, 400.0), (320.0, 240.0), (639.0, 0.5)] {
            let p = intr.unproject(u, v, 3.7);
            let px = intr.project(p).unwrap();
            assert!((px[0] - u).abs() < 1e-9 && (px[1] - v).abs() < 1e-9);
        }
    }
}
