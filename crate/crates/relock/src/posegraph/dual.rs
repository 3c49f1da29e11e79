//! Forward-mode dual numbers with seven partials.
//!
//! One evaluation of a residual with `Dual7` scalars yields the value and
//! its full gradient with respect to one vertex's seven tangent
//! coordinates. Arithmetic satisfies the product and chain rules exactly,
//! so the Jacobians are exact to machine precision for the composed
//! elementary operations.

use crate::geometry::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual7 {
    pub re: f64,
    pub eps: [f64; 7],
}

impl Dual7 {
    pub const fn constant(re: f64) -> Self {
        Self { re, eps: [0.0; 7] }
    }

    /// Variable seeded in direction `k`: value `re`, unit partial there.
    pub fn seeded(re: f64, k: usize) -> Self {
        let mut eps = [0.0; 7];
        eps[k] = 1.0;
        Self { re, eps }
    }

    fn map(self, value: f64, dvalue: f64) -> Self {
        let mut eps = self.eps;
        for e in &mut eps {
            *e *= dvalue;
        }
        Self { re: value, eps }
    }
}

impl std::ops::Add for Dual7 {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut eps = self.eps;
        for (e, r) in eps.iter_mut().zip(rhs.eps) {
            *e += r;
        }
        Self {
            re: self.re + rhs.re,
            eps,
        }
    }
}

impl std::ops::Sub for Dual7 {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let mut eps = self.eps;
        for (e, r) in eps.iter_mut().zip(rhs.eps) {
            *e -= r;
        }
        Self {
            re: self.re - rhs.re,
            eps,
        }
    }
}

impl std::ops::Mul for Dual7 {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut eps = [0.0; 7];
        for k in 0..7 {
            eps[k] = self.eps[k] * rhs.re + self.re * rhs.eps[k];
        }
        Self {
            re: self.re * rhs.re,
            eps,
        }
    }
}

impl std::ops::Div for Dual7 {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.re;
        let inv_sq = inv * inv;
        let mut eps = [0.0; 7];
        for k in 0..7 {
            eps[k] = (self.eps[k] * rhs.re - self.re * rhs.eps[k]) * inv_sq;
        }
        Self {
            re: self.re * inv,
            eps,
        }
    }
}

impl std::ops::Neg for Dual7 {
    type Output = Self;
    fn neg(self) -> Self {
        let mut eps = self.eps;
        for e in &mut eps {
            *e = -*e;
        }
        Self { re: -self.re, eps }
    }
}

impl Real for Dual7 {
    fn from_f64(value: f64) -> Self {
        Self::constant(value)
    }

    fn re(self) -> f64 {
        self.re
    }

    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.map(s, 0.5 / s)
    }

    fn sin(self) -> Self {
        self.map(self.re.sin(), self.re.cos())
    }

    fn cos(self) -> Self {
        self.map(self.re.cos(), -self.re.sin())
    }

    fn atan2(self, x: Self) -> Self {
        let y = self;
        let denom = x.re * x.re + y.re * y.re;
        let mut eps = [0.0; 7];
        for k in 0..7 {
            eps[k] = (x.re * y.eps[k] - y.re * x.eps[k]) / denom;
        }
        Self {
            re: y.re.atan2(x.re),
            eps,
        }
    }

    fn exp(self) -> Self {
        let e = self.re.exp();
        self.map(e, e)
    }

    fn ln(self) -> Self {
        self.map(self.re.ln(), 1.0 / self.re)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(x: f64, k: usize) -> Dual7 {
        Dual7::seeded(x, k)
    }

    #[test]
    fn product_rule() {
        // f(x) = x * x at x=3: f' = 6
        let x = d(3.0, 0);
        let f = x * x;
        assert_eq!(f.re, 9.0);
        assert_eq!(f.eps[0], 6.0);
    }

    #[test]
    fn chain_rule_through_transcendentals() {
        // f(x) = sin(x^2) at x=0.7: f' = 2x cos(x^2)
        let x = d(0.7, 2);
        let f = (x * x).sin();
        assert!((f.re - (0.49f64).sin()).abs() < 1e-15);
        assert!((f.eps[2] - 1.4 * (0.49f64).cos()).abs() < 1e-15);
        assert_eq!(f.eps[0], 0.0);
    }

    #[test]
    fn quotient_and_log() {
        // f(x) = ln(1/x) = -ln(x); f' = -1/x
        let x = d(2.0, 6);
        let f = (Dual7::constant(1.0) / x).ln();
        assert!((f.re + 2.0f64.ln()).abs() < 1e-15);
        assert!((f.eps[6] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn atan2_gradient_matches_symbolic() {
        // d/dy atan2(y, x) = x / (x^2 + y^2); d/dx = -y / (x^2 + y^2)
        let y = d(0.3, 0);
        let x = d(1.1, 1);
        let f = y.atan2(x);
        let denom = 1.1 * 1.1 + 0.3 * 0.3;
        assert!((f.eps[0] - 1.1 / denom).abs() < 1e-15);
        assert!((f.eps[1] + 0.3 / denom).abs() < 1e-15);
    }

    #[test]
    fn sqrt_and_exp_derivatives() {
        let x = d(4.0, 3);
        let f = x.sqrt();
        assert_eq!(f.re, 2.0);
        assert_eq!(f.eps[3], 0.25);
        let g = x.exp();
        assert!((g.eps[3] - 4.0f64.exp()).abs() < 1e-10);
    }
}
