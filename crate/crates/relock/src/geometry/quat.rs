//! Unit quaternions and the SO(3) exponential / logarithm.

use serde::{Deserialize, Serialize};

use super::scalar::Real;
use super::vec::{Mat3, Vec3};
use super::SMALL_ANGLE;

/// Unit quaternion (w, x, y, z). Constructors and composition normalize so
/// the norm stays within 1e-9 of 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quat<T = f64> {
    pub w: T,
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Quat<T> {
    pub fn identity() -> Self {
        Self {
            w: T::one(),
            x: T::zero(),
            y: T::zero(),
            z: T::zero(),
        }
    }

    /// Build from raw coefficients, normalizing.
    pub fn new(w: T, x: T, y: T, z: T) -> Self {
        Self { w, x, y, z }.normalized()
    }

    pub fn lift(q: Quat<f64>) -> Self {
        Self {
            w: T::from_f64(q.w),
            x: T::from_f64(q.x),
            y: T::from_f64(q.y),
            z: T::from_f64(q.z),
        }
    }

    pub fn re(self) -> Quat<f64> {
        Quat {
            w: self.w.re(),
            x: self.x.re(),
            y: self.y.re(),
            z: self.z.re(),
        }
    }

    pub fn norm(self) -> T {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(self) -> Self {
        let inv = T::one() / self.norm();
        Self {
            w: self.w * inv,
            x: self.x * inv,
            y: self.y * inv,
            z: self.z * inv,
        }
    }

    pub fn conjugate(self) -> Self {
        Self {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Hamilton product, renormalized.
    pub fn compose(self, rhs: Self) -> Self {
        let w = self.w * rhs.w - self.x * rhs.x - self.y * rhs.y - self.z * rhs.z;
        let x = self.w * rhs.x + self.x * rhs.w + self.y * rhs.z - self.z * rhs.y;
        let y = self.w * rhs.y - self.x * rhs.z + self.y * rhs.w + self.z * rhs.x;
        let z = self.w * rhs.z + self.x * rhs.y - self.y * rhs.x + self.z * rhs.w;
        Self { w, x, y, z }.normalized()
    }

    /// Rotate a vector: `v' = v + 2w(u x v) + 2 u x (u x v)`.
    pub fn rotate(self, v: Vec3<T>) -> Vec3<T> {
        let u = Vec3::new(self.x, self.y, self.z);
        let uv = u.cross(v);
        let uuv = u.cross(uv);
        let two = T::from_f64(2.0);
        v + uv.scaled(two * self.w) + uuv.scaled(two)
    }

    pub fn to_mat3(self) -> Mat3<T> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        let two = T::from_f64(2.0);
        let one = T::one();
        Mat3 {
            m: [
                [
                    one - two * (y * y + z * z),
                    two * (x * y - w * z),
                    two * (x * z + w * y),
                ],
                [
                    two * (x * y + w * z),
                    one - two * (x * x + z * z),
                    two * (y * z - w * x),
                ],
                [
                    two * (x * z - w * y),
                    two * (y * z + w * x),
                    one - two * (x * x + y * y),
                ],
            ],
        }
    }

    /// SO(3) exponential map: axis-angle vector to unit quaternion.
    pub fn exp_so3(phi: Vec3<T>) -> Self {
        let theta_sq = phi.norm_squared();
        let (w, k) = if theta_sq.re() < SMALL_ANGLE * SMALL_ANGLE {
            // cos(t/2) and sin(t/2)/t expanded to second order in t^2
            let one = T::one();
            let w = one - theta_sq * T::from_f64(1.0 / 8.0)
                + theta_sq * theta_sq * T::from_f64(1.0 / 384.0);
            let k = T::from_f64(0.5) - theta_sq * T::from_f64(1.0 / 48.0)
                + theta_sq * theta_sq * T::from_f64(1.0 / 3840.0);
            (w, k)
        } else {
            let theta = theta_sq.sqrt();
            let half = theta * T::from_f64(0.5);
            (half.cos(), half.sin() / theta)
        };
        Self {
            w,
            x: phi.x * k,
            y: phi.y * k,
            z: phi.z * k,
        }
        .normalized()
    }

    /// SO(3) logarithm on the principal branch (angle in [0, pi]).
    pub fn log_so3(self) -> Vec3<T> {
        // q and -q encode the same rotation; pick the w >= 0 representative.
        let q = if self.w.re() < 0.0 {
            Self {
                w: -self.w,
                x: -self.x,
                y: -self.y,
                z: -self.z,
            }
        } else {
            self
        };
        let v = Vec3::new(q.x, q.y, q.z);
        let vn_sq = v.norm_squared();
        if vn_sq.re() < SMALL_ANGLE * SMALL_ANGLE {
            // 2 atan2(n, w)/n expanded in n^2; avoids sqrt'(0) in duals.
            let two = T::from_f64(2.0);
            let w_sq = q.w * q.w;
            let factor = two / q.w - (two * vn_sq) / (T::from_f64(3.0) * w_sq * q.w);
            v.scaled(factor)
        } else {
            let vn = vn_sq.sqrt();
            let angle = T::from_f64(2.0) * vn.atan2(q.w);
            v.scaled(angle / vn)
        }
    }

    /// Rotation angle in radians (real part), in [0, pi].
    pub fn angle(self) -> f64 {
        let q = self.re();
        let vn = (q.x * q.x + q.y * q.y + q.z * q.z).sqrt();
        2.0 * vn.atan2(q.w.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_quat(seed: u64) -> Quat {
        // xorshift-ish deterministic values, good enough for unit coverage
        let mut s = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
        let mut next = || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s as f64 / u64::MAX as f64) * 2.0 - 1.0
        };
        Quat::new(next(), next(), next(), next())
    }

    #[test]
    fn compose_with_conjugate_is_identity() {
        for seed in 1..50u64 {
            let q = rand_quat(seed);
            let e = q.compose(q.conjugate());
            assert!((e.w - 1.0).abs() < 1e-12);
            assert!(e.x.abs() < 1e-12 && e.y.abs() < 1e-12 && e.z.abs() < 1e-12);
        }
    }

    #[test]
    fn rotate_matches_matrix() {
        for seed in 1..50u64 {
            let q = rand_quat(seed);
            let v = Vec3::new(0.3 * seed as f64, -0.7, 1.9);
            let a = q.rotate(v);
            let b = q.to_mat3().mul_vec(v);
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn exp_log_round_trip() {
        for seed in 1..200u64 {
            let q = rand_quat(seed);
            let phi = q.log_so3();
            let back = Quat::exp_so3(phi);
            // compare as rotations (sign-insensitive)
            let dot = (q.w * back.w + q.x * back.x + q.y * back.y + q.z * back.z).abs();
            assert!(dot > 1.0 - 1e-12, "seed {seed}: dot {dot}");
        }
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let q: Quat = Quat::exp_so3(Vec3::zero());
        assert_eq!(q, Quat::identity());
    }

    #[test]
    fn small_angle_branch_is_continuous() {
        for &theta in &[0.9e-5, 1.1e-5] {
            let phi = Vec3::new(theta, 0.0, 0.0);
            let q = Quat::exp_so3(phi);
            let back = q.log_so3();
            assert!((back - phi).norm() < 1e-15);
        }
    }
}
