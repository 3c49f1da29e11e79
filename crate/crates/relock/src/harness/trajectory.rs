//! Trajectory text I/O (TUM convention).
//!
//! One pose per line: `timestamp tx ty tz qx qy qz qw`, space separated,
//! `#` comments. Positions and quaternions are camera-to-world; stored
//! poses are world-to-camera, so reading and writing invert.

use crate::geometry::{Quat, Se3, Vec3};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrajectoryError {
    #[error("line {line}: expected 8 fields, got {got}")]
    FieldCount { line: usize, got: usize },
    #[error("line {line}: bad number: {message}")]
    BadNumber { line: usize, message: String },
    #[error("io: {0}")]
    Io(String),
}

/// Serialize world-to-camera poses as TUM lines (camera-to-world form).
pub fn to_tum(poses: &[Se3]) -> String {
    let mut out = String::from("# timestamp tx ty tz qx qy qz qw\n");
    for (i, pose) in poses.iter().enumerate() {
        let inv = pose.inverse(); // camera-to-world
        let t = inv.translation;
        let q = inv.rotation;
        out.push_str(&format!(
            "{} {} {} {} {} {} {} {}\n",
            i as f64, t.x, t.y, t.z, q.x, q.y, q.z, q.w
        ));
    }
    out
}

/// Parse TUM lines back into world-to-camera poses (timestamps dropped;
/// association is by line order).
pub fn from_tum(text: &str) -> Result<Vec<Se3>, TrajectoryError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(TrajectoryError::FieldCount {
                line,
                got: fields.len(),
            });
        }
        let nums: Vec<f64> = fields
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|e| TrajectoryError::BadNumber {
                    line,
                    message: format!("{f:?}: {e}"),
                })
            })
            .collect::<Result<_, _>>()?;
        let t_wc = Se3::new(
            Quat::new(nums[7], nums[4], nums[5], nums[6]),
            Vec3::new(nums[1], nums[2], nums[3]),
        );
        out.push(t_wc.inverse());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_poses() {
        let poses = vec![
            Se3::identity(),
            Se3::new(
                Quat::exp_so3(Vec3::new(0.1, -0.4, 0.2)),
                Vec3::new(1.5, -2.0, 0.25),
            ),
        ];
        let text = to_tum(&poses);
        let back = from_tum(&text).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in poses.iter().zip(&back) {
            assert!((a.translation - b.translation).norm() < 1e-12);
            let dot = a.rotation.w * b.rotation.w
                + a.rotation.x * b.rotation.x
                + a.rotation.y * b.rotation.y
                + a.rotation.z * b.rotation.z;
            assert!(dot.abs() > 1.0 - 1e-12);
        }
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let text = "# header\n\n0 0 0 0 0 0 0 1\n";
        assert_eq!(from_tum(text).unwrap().len(), 1);
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(matches!(
            from_tum("0 1 2 3\n"),
            Err(TrajectoryError::FieldCount { .. })
        ));
        assert!(matches!(
            from_tum("0 a b c 0 0 0 1\n"),
            Err(TrajectoryError::BadNumber { .. })
        ));
    }
}
