//! Similarity transforms and their exponential map.

use serde::{Deserialize, Serialize};

use super::quat::Quat;
use super::scalar::Real;
use super::se3::Se3;
use super::vec::{Mat3, Vec3};
use super::{GeometryError, SMALL_ANGLE};

/// Sim(3) transform `S_cw`: `p' = s * R * p + t`.
///
/// The scale is strictly positive; composition and inversion keep it so.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sim3<T = f64> {
    pub scale: T,
    pub rotation: Quat<T>,
    pub translation: Vec3<T>,
}

/// Tangent vector of Sim(3): translational part, rotational part
/// (axis-angle), and log-scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sim3Tangent<T = f64> {
    pub rho: Vec3<T>,
    pub phi: Vec3<T>,
    pub sigma: T,
}

impl<T: Real> Sim3Tangent<T> {
    pub fn zero() -> Self {
        Self {
            rho: Vec3::zero(),
            phi: Vec3::zero(),
            sigma: T::zero(),
        }
    }

    pub fn new(rho: Vec3<T>, phi: Vec3<T>, sigma: T) -> Self {
        Self { rho, phi, sigma }
    }

    pub fn from_array(a: [T; 7]) -> Self {
        Self {
            rho: Vec3::new(a[0], a[1], a[2]),
            phi: Vec3::new(a[3], a[4], a[5]),
            sigma: a[6],
        }
    }

    pub fn as_array(&self) -> [T; 7] {
        [
            self.rho.x, self.rho.y, self.rho.z, self.phi.x, self.phi.y, self.phi.z, self.sigma,
        ]
    }

    pub fn norm(&self) -> T {
        (self.rho.norm_squared() + self.phi.norm_squared() + self.sigma * self.sigma).sqrt()
    }
}

impl Sim3Tangent<f64> {
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            rho: self.rho.scaled(s),
            phi: self.phi.scaled(s),
            sigma: self.sigma * s,
        }
    }
}

impl<T: Real> Sim3<T> {
    pub fn identity() -> Self {
        Self {
            scale: T::one(),
            rotation: Quat::identity(),
            translation: Vec3::zero(),
        }
    }

    pub fn new(scale: T, rotation: Quat<T>, translation: Vec3<T>) -> Self {
        debug_assert!(scale.re() > 0.0, "Sim3 scale must be positive");
        Self {
            scale,
            rotation: rotation.normalized(),
            translation,
        }
    }

    pub fn lift(s: Sim3<f64>) -> Self {
        Self {
            scale: T::from_f64(s.scale),
            rotation: Quat::lift(s.rotation),
            translation: Vec3::lift(s.translation),
        }
    }

    pub fn re(self) -> Sim3<f64> {
        Sim3 {
            scale: self.scale.re(),
            rotation: self.rotation.re(),
            translation: self.translation.re(),
        }
    }

    /// `p' = s * R * p + t`.
    pub fn apply(&self, p: Vec3<T>) -> Vec3<T> {
        self.rotation.rotate(p).scaled(self.scale) + self.translation
    }

    /// `self * rhs`: `(s_a s_b, R_a R_b, s_a R_a t_b + t_a)`.
    pub fn compose(&self, rhs: &Sim3<T>) -> Sim3<T> {
        Sim3 {
            scale: self.scale * rhs.scale,
            rotation: self.rotation.compose(rhs.rotation),
            translation: self.rotation.rotate(rhs.translation).scaled(self.scale)
                + self.translation,
        }
    }

    /// `(1/s, R^T, -(1/s) R^T t)`.
    pub fn inverse(&self) -> Sim3<T> {
        let inv_scale = T::one() / self.scale;
        let rot_inv = self.rotation.conjugate();
        Sim3 {
            scale: inv_scale,
            rotation: rot_inv,
            translation: -rot_inv.rotate(self.translation).scaled(inv_scale),
        }
    }

    /// Exponential map: `scale = e^sigma`, rotation from axis-angle `phi`,
    /// translation `W(phi, sigma) * rho`.
    pub fn exp(v: &Sim3Tangent<T>) -> Sim3<T> {
        let rotation = Quat::exp_so3(v.phi);
        let scale = v.sigma.exp();
        let w = calc_w(v.phi, v.sigma);
        Sim3 {
            scale,
            rotation,
            translation: w.mul_vec(v.rho),
        }
    }

    /// Logarithm on the principal branch; rejects rotations within 1e-6 of
    /// the pi branch cut.
    pub fn log(&self) -> Result<Sim3Tangent<T>, GeometryError> {
        let angle = self.rotation.angle();
        let margin = 1e-6;
        if angle > std::f64::consts::PI - margin {
            return Err(GeometryError::RotationNearPi { angle, margin });
        }
        let phi = self.rotation.log_so3();
        let sigma = self.scale.ln();
        let w = calc_w(phi, sigma);
        let rho = w.inverse().mul_vec(self.translation);
        Ok(Sim3Tangent { rho, phi, sigma })
    }

    /// Camera center in world coordinates for an `S_cw` transform.
    pub fn camera_center(&self) -> Vec3<T> {
        let inv = self.inverse();
        inv.translation
    }
}

impl Sim3<f64> {
    /// Scale-1 embedding of an SE(3) pose.
    pub fn from_se3(pose: &Se3) -> Self {
        Self {
            scale: 1.0,
            rotation: pose.rotation,
            translation: pose.translation,
        }
    }

    /// SE(3) recovery: keep the rotation, divide the translation by the
    /// scale. This is how corrected Sim3 poses are written back as
    /// keyframe poses.
    pub fn to_se3(&self) -> Se3 {
        Se3 {
            rotation: self.rotation,
            translation: self.translation.scaled(1.0 / self.scale),
        }
    }
}

/// The Sim(3) translation mixing matrix `W = A*Omega + B*Omega^2 + C*I`.
///
/// Coefficients follow the closed forms in terms of `theta = |phi|` and
/// `sigma`, with second-order Taylor branches below [`SMALL_ANGLE`]. The
/// same function serves `exp` (multiply) and `log` (solve), so round trips
/// are consistent across branch boundaries.
fn calc_w<T: Real>(phi: Vec3<T>, sigma: T) -> Mat3<T> {
    let theta_sq = phi.norm_squared();
    let omega = Mat3::skew(phi);
    let omega_sq = omega.mul_mat(omega);
    let scale = sigma.exp();
    let one = T::one();

    let small_theta = theta_sq.re() < SMALL_ANGLE * SMALL_ANGLE;
    let small_sigma = sigma.re().abs() < SMALL_ANGLE;

    let (a, b, c);
    if small_sigma {
        // (e^sigma - 1)/sigma to second order
        c = one + sigma * T::from_f64(0.5) + sigma * sigma * T::from_f64(1.0 / 6.0);
        if small_theta {
            a = T::from_f64(0.5) + sigma * T::from_f64(1.0 / 3.0)
                + sigma * sigma * T::from_f64(1.0 / 8.0)
                - theta_sq * T::from_f64(1.0 / 24.0);
            b = T::from_f64(1.0 / 6.0) + sigma * T::from_f64(1.0 / 8.0)
                + sigma * sigma * T::from_f64(1.0 / 20.0)
                - theta_sq * T::from_f64(1.0 / 120.0);
        } else {
            let theta = theta_sq.sqrt();
            let sin_t = theta.sin();
            let cos_t = theta.cos();
            let a0 = (one - cos_t) / theta_sq;
            let da = (sin_t - theta * cos_t) / (theta_sq * theta);
            a = a0 + sigma * da;
            let b0 = (theta - sin_t) / (theta_sq * theta);
            let db = (T::from_f64(0.5) - (cos_t - one + theta * sin_t) / theta_sq) / theta_sq;
            b = b0 + sigma * db;
        }
    } else {
        c = (scale - one) / sigma;
        if small_theta {
            let sigma_sq = sigma * sigma;
            a = ((sigma - one) * scale + one) / sigma_sq;
            b = ((sigma_sq * T::from_f64(0.5) - sigma + one) * scale - one) / (sigma_sq * sigma);
        } else {
            let theta = theta_sq.sqrt();
            let sa = scale * theta.sin();
            let sb = scale * theta.cos();
            let denom = sigma * sigma + theta_sq;
            a = (sa * sigma + (one - sb) * theta) / (theta * denom);
            b = (c - ((sb - one) * sigma + sa * theta) / denom) / theta_sq;
        }
    }

    omega
        .scaled(a)
        .add_mat(omega_sq.scaled(b))
        .add_mat(Mat3::identity().scaled(c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn rand_sim3(rng: &mut StdRng) -> Sim3 {
        let phi = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        Sim3::new(
            rng.gen_range(0.4..2.5),
            Quat::exp_so3(phi),
            Vec3::new(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            ),
        )
    }

    fn rand_point(rng: &mut StdRng) -> Vec3 {
        Vec3::new(
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
        )
    }

    #[test]
    fn compose_identity_is_noop() {
        let mut rng = StdRng::seed_from_u64(7);
        let s = rand_sim3(&mut rng);
        let c = Sim3::identity().compose(&s);
        assert!((c.scale - s.scale).abs() < 1e-15);
        assert!((c.translation - s.translation).norm() < 1e-15);
    }

    #[test]
    fn compose_matches_sequential_action() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..20 {
            let a = rand_sim3(&mut rng);
            let b = rand_sim3(&mut rng);
            let ab = a.compose(&b);
            for _ in 0..20 {
                let p = rand_point(&mut rng);
                let two_step = a.apply(b.apply(p));
                let one_step = ab.apply(p);
                assert!((two_step - one_step).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn inverse_round_trips_points() {
        let mut rng = StdRng::seed_from_u64(13);
        let s = rand_sim3(&mut rng);
        let inv = s.inverse();
        for _ in 0..20 {
            let p = rand_point(&mut rng);
            assert!((inv.apply(s.apply(p)) - p).norm() < 1e-12);
        }
    }

    #[test]
    fn inverse_of_pure_scale() {
        let s = Sim3::new(2.0, Quat::identity(), Vec3::zero());
        let inv = s.inverse();
        assert!((inv.scale - 0.5).abs() < 1e-15);
        assert!(inv.translation.norm() < 1e-15);
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let s: Sim3 = Sim3::exp(&Sim3Tangent::zero());
        assert_eq!(s.scale, 1.0);
        assert_eq!(s.translation, Vec3::zero());
        assert_eq!(s.rotation, Quat::identity());
    }

    #[test]
    fn exp_of_pure_log_scale() {
        let v = Sim3Tangent::new(Vec3::zero(), Vec3::zero(), 2.0f64.ln());
        let s = Sim3::exp(&v);
        assert!((s.scale - 2.0).abs() < 1e-15);
        assert!(s.translation.norm() < 1e-15);
        assert!((s.rotation.w - 1.0).abs() < 1e-15);
    }

    #[test]
    fn log_of_pure_scale() {
        let s = Sim3::new(2.0, Quat::identity(), Vec3::zero());
        let v = s.log().unwrap();
        assert!(v.rho.norm() < 1e-15);
        assert!(v.phi.norm() < 1e-15);
        assert!((v.sigma - 2.0f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn exp_log_round_trip_tangent() {
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..100 {
            let v = Sim3Tangent::new(
                Vec3::new(
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                ),
                Vec3::new(
                    rng.gen_range(-0.57..0.57),
                    rng.gen_range(-0.57..0.57),
                    rng.gen_range(-0.57..0.57),
                ),
                rng.gen_range(-2.0..2.0),
            );
            let back = Sim3::exp(&v).log().unwrap();
            assert!((back.rho - v.rho).norm() < 1e-9, "{v:?} -> {back:?}");
            assert!((back.phi - v.phi).norm() < 1e-9);
            assert!((back.sigma - v.sigma).abs() < 1e-9);
        }
    }

    #[test]
    fn log_exp_round_trip_group() {
        let mut rng = StdRng::seed_from_u64(19);
        for _ in 0..100 {
            let s = rand_sim3(&mut rng);
            let back = Sim3::exp(&s.log().unwrap());
            assert!((back.scale - s.scale).abs() < 1e-9);
            assert!((back.translation - s.translation).norm() < 1e-9);
            let dot = back.rotation.w * s.rotation.w
                + back.rotation.x * s.rotation.x
                + back.rotation.y * s.rotation.y
                + back.rotation.z * s.rotation.z;
            assert!(dot.abs() > 1.0 - 1e-9);
        }
    }

    #[test]
    fn log_rejects_near_pi() {
        let s = Sim3::new(
            1.0,
            Quat::exp_so3(Vec3::new(std::f64::consts::PI - 1e-9, 0.0, 0.0)),
            Vec3::zero(),
        );
        assert!(matches!(
            s.log(),
            Err(GeometryError::RotationNearPi { .. })
        ));
    }

    #[test]
    fn taylor_branches_are_continuous() {
        // straddle the small-angle and small-sigma thresholds
        for &eps in &[0.9e-5, 1.1e-5] {
            let v = Sim3Tangent::new(Vec3::new(1.0, -2.0, 0.5), Vec3::new(eps, 0.0, 0.0), eps);
            let back = Sim3::exp(&v).log().unwrap();
            assert!((back.rho - v.rho).norm() < 1e-10);
            assert!((back.phi - v.phi).norm() < 1e-10);
            assert!((back.sigma - v.sigma).abs() < 1e-12);
        }
    }

    #[test]
    fn se3_round_trip_through_sim3() {
        let pose = Se3::new(
            Quat::exp_so3(Vec3::new(0.2, 0.3, -0.4)),
            Vec3::new(1.0, 2.0, 3.0),
        );
        let s = Sim3::from_se3(&pose);
        assert_eq!(s.scale, 1.0);
        let back = s.to_se3();
        assert!((back.translation - pose.translation).norm() < 1e-15);
    }
}
