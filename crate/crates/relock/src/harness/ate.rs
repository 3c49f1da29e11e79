//! Absolute trajectory error with closed-form SE(3) alignment.
//!
//! Alignment is rigid (no scale): rotation from the SVD of the centered
//! cross-covariance with the determinant sign fix, translation from the
//! centroids. Trajectories associate by index.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::Se3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AteResult {
    /// Root mean square of the per-pose translation errors (meters).
    pub rmse: f64,
    pub aligned: bool,
    pub per_pose_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AteError {
    #[error("trajectory lengths differ: estimated {estimated}, ground truth {ground_truth}")]
    LengthMismatch {
        estimated: usize,
        ground_truth: usize,
    },
    #[error("trajectories are empty")]
    Empty,
}

/// ATE RMSE between index-matched trajectories of world-to-camera poses.
pub fn compute_ate(
    estimated: &[Se3],
    ground_truth: &[Se3],
    align: bool,
) -> Result<AteResult, AteError> {
    if estimated.len() != ground_truth.len() {
        return Err(AteError::LengthMismatch {
            estimated: estimated.len(),
            ground_truth: ground_truth.len(),
        });
    }
    if estimated.is_empty() {
        return Err(AteError::Empty);
    }
    let est: Vec<Vector3<f64>> = estimated
        .iter()
        .map(|p| {
            let c = p.camera_center();
            Vector3::new(c.x, c.y, c.z)
        })
        .collect();
    let gt: Vec<Vector3<f64>> = ground_truth
        .iter()
        .map(|p| {
            let c = p.camera_center();
            Vector3::new(c.x, c.y, c.z)
        })
        .collect();

    let (rot, trans) = if align {
        rigid_alignment(&est, &gt)
    } else {
        (Matrix3::identity(), Vector3::zeros())
    };

    let per_pose_errors: Vec<f64> = est
        .iter()
        .zip(&gt)
        .map(|(e, g)| ((rot * e + trans) - g).norm())
        .collect();
    let rmse = (per_pose_errors.iter().map(|e| e * e).sum::<f64>()
        / per_pose_errors.len() as f64)
        .sqrt();
    Ok(AteResult {
        rmse,
        aligned: align,
        per_pose_errors,
    })
}

/// Least-squares rigid transform taking `est` onto `gt`.
fn rigid_alignment(est: &[Vector3<f64>], gt: &[Vector3<f64>]) -> (Matrix3<f64>, Vector3<f64>) {
    let n = est.len() as f64;
    let mu_e: Vector3<f64> = est.iter().sum::<Vector3<f64>>() / n;
    let mu_g: Vector3<f64> = gt.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::<f64>::zeros();
    for (e, g) in est.iter().zip(gt) {
        h += (e - mu_e) * (g - mu_g).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("svd with u");
    let v_t = svd.v_t.expect("svd with v_t");
    let mut d = Matrix3::identity();
    if (v_t.transpose() * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rot = v_t.transpose() * d * u.transpose();
    let trans = mu_g - rot * mu_e;
    (rot, trans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Quat, Vec3};

    fn trajectory(n: usize) -> Vec<Se3> {
        (0..n)
            .map(|i| {
                let a = i as f64 * 0.2;
                Se3::new(
                    Quat::exp_so3(Vec3::new(0.0, 0.05 * a, 0.0)),
                    Vec3::new(a.cos(), a.sin(), 0.1 * a),
                )
            })
            .collect()
    }

    fn shift(poses: &[Se3], offset: Vec3) -> Vec<Se3> {
        // world-frame shift of camera centers: T_cw' = T_cw o translate(-offset)
        poses
            .iter()
            .map(|p| {
                let center = p.camera_center() + offset;
                Se3::new(p.rotation, -p.rotation.rotate(center))
            })
            .collect()
    }

    #[test]
    fn identical_trajectories_have_zero_rmse() {
        let t = trajectory(25);
        let r = compute_ate(&t, &t, true).unwrap();
        assert!(r.rmse < 1e-12);
        let r = compute_ate(&t, &t, false).unwrap();
        assert!(r.rmse < 1e-12);
    }

    #[test]
    fn rigid_offset_absorbed_only_when_aligned() {
        let gt = trajectory(25);
        let est = shift(&gt, Vec3::new(1.0, 0.0, 0.0));
        let aligned = compute_ate(&est, &gt, true).unwrap();
        assert!(aligned.rmse < 1e-9, "aligned rmse {}", aligned.rmse);
        let raw = compute_ate(&est, &gt, false).unwrap();
        assert!((raw.rmse - 1.0).abs() < 1e-9, "raw rmse {}", raw.rmse);
    }

    #[test]
    fn mismatched_lengths_error() {
        let t = trajectory(10);
        assert!(matches!(
            compute_ate(&t[..9], &t, true),
            Err(AteError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn matches_independent_per_pose_evaluation() {
        // perturb each pose and compare against a direct evaluation that
        // never goes through the alignment code path (align = false)
        let gt = trajectory(30);
        let mut est = gt.clone();
        for (i, pose) in est.iter_mut().enumerate() {
            let center = pose.camera_center()
                + Vec3::new(
                    0.01 * (i as f64).sin(),
                    0.02 * (i as f64).cos(),
                    0.005 * i as f64,
                );
            *pose = Se3::new(pose.rotation, -pose.rotation.rotate(center));
        }
        let result = compute_ate(&est, &gt, false).unwrap();
        let direct: f64 = est
            .iter()
            .zip(&gt)
            .map(|(e, g)| (e.camera_center() - g.camera_center()).norm_squared())
            .sum::<f64>()
            / gt.len() as f64;
        assert!((result.rmse - direct.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn alignment_is_invariant_to_rigid_transforms_of_the_estimate() {
        let gt = trajectory(40);
        let mut est = gt.clone();
        for (i, pose) in est.iter_mut().enumerate() {
            let center = pose.camera_center() + Vec3::new(0.0, 0.01 * i as f64, 0.0);
            *pose = Se3::new(pose.rotation, -pose.rotation.rotate(center));
        }
        let base = compute_ate(&est, &gt, true).unwrap();
        // apply an arbitrary rigid motion to the whole estimate
        let g = Se3::new(
            Quat::exp_so3(Vec3::new(0.3, -0.2, 0.5)),
            Vec3::new(4.0, -1.0, 2.0),
        );
        let moved: Vec<Se3> = est.iter().map(|p| p.compose(&g.inverse())).collect();
        let transformed = compute_ate(&moved, &gt, true).unwrap();
        assert!(
            (base.rmse - transformed.rmse).abs() < 1e-9,
            "{} vs {}",
            base.rmse,
            transformed.rmse
        );
    }
}
