//! Gaussian mollifier pair.
//!
//! `zeta` is the Gaussian with variance `2 eps^2` per coordinate and `phi` is
//! its self-convolution (variance `4 eps^2`):
//!
//! ```text
//! zeta_eps(x) = (4 pi eps^2)^(-d/2) exp(-|x|^2 / (4 eps^2))
//! phi_eps(x)  = (8 pi eps^2)^(-d/2) exp(-|x|^2 / (8 eps^2))
//! ```
//!
//! Both kernels are truncated to exactly zero once the exponent exceeds
//! [`EXPONENT_CUTOFF`] (`|x|^2 > 400 eps^2` for `phi`, `> 200 eps^2` for
//! `zeta`). The discarded tail is below `2e-22` of the peak value. Pairwise
//! loops use the cutoff to skip the exponential for distant pairs; it does not
//! change any floating-point sum because the skipped terms are exact zeros.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::point::Point;

/// Kernel values are exactly zero once `|x|^2 / (c eps^2)` exceeds this.
pub const EXPONENT_CUTOFF: f64 = 50.0;

/// Spatial dimension of a problem. Only lines and planes are supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Dimension {
    One,
    Two,
}

impl Dimension {
    pub fn get(self) -> usize {
        match self {
            Dimension::One => 1,
            Dimension::Two => 2,
        }
    }

    pub fn as_f64(self) -> f64 {
        self.get() as f64
    }
}

impl TryFrom<u8> for Dimension {
    type Error = String;
    fn try_from(d: u8) -> std::result::Result<Self, String> {
        match d {
            1 => Ok(Dimension::One),
            2 => Ok(Dimension::Two),
            other => Err(format!("dimension must be 1 or 2, got {other}")),
        }
    }
}

impl From<Dimension> for u8 {
    fn from(d: Dimension) -> u8 {
        d.get() as u8
    }
}

/// The Gaussian mollifier pair at bandwidth `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mollifier {
    epsilon: f64,
    dim: Dimension,
    zeta_norm: f64,
    phi_norm: f64,
    inv_4eps2: f64,
    inv_8eps2: f64,
}

impl Mollifier {
    pub fn new(epsilon: f64, dim: Dimension) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "mollifier epsilon must be positive and finite, got {epsilon}"
            )));
        }
        let d = dim.as_f64();
        let eps2 = epsilon * epsilon;
        Ok(Mollifier {
            epsilon,
            dim,
            zeta_norm: (4.0 * PI * eps2).powf(-d / 2.0),
            phi_norm: (8.0 * PI * eps2).powf(-d / 2.0),
            inv_4eps2: 1.0 / (4.0 * eps2),
            inv_8eps2: 1.0 / (8.0 * eps2),
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn dimension(&self) -> Dimension {
        self.dim
    }

    /// Squared radius beyond which `phi` is exactly zero.
    pub fn phi_cutoff_sq(&self) -> f64 {
        EXPONENT_CUTOFF / self.inv_8eps2
    }

    /// Squared radius beyond which `zeta` is exactly zero.
    pub fn zeta_cutoff_sq(&self) -> f64 {
        EXPONENT_CUTOFF / self.inv_4eps2
    }

    #[inline]
    pub fn zeta_r2(&self, r2: f64) -> f64 {
        let a = r2 * self.inv_4eps2;
        if a > EXPONENT_CUTOFF {
            0.0
        } else {
            self.zeta_norm * (-a).exp()
        }
    }

    #[inline]
    pub fn phi_r2(&self, r2: f64) -> f64 {
        let a = r2 * self.inv_8eps2;
        if a > EXPONENT_CUTOFF {
            0.0
        } else {
            self.phi_norm * (-a).exp()
        }
    }

    pub fn zeta(&self, x: Point) -> f64 {
        self.zeta_r2(x.norm_sq())
    }

    pub fn phi(&self, x: Point) -> f64 {
        self.phi_r2(x.norm_sq())
    }

    /// `grad zeta(x) = -x / (2 eps^2) * zeta(x)`.
    pub fn zeta_grad(&self, x: Point) -> Point {
        x * self.zeta_grad_coeff(x.norm_sq())
    }

    /// `grad phi(x) = -x / (4 eps^2) * phi(x)`.
    pub fn phi_grad(&self, x: Point) -> Point {
        x * self.phi_grad_coeff(x.norm_sq())
    }

    /// Scalar `c(r^2)` with `grad zeta(x) = c * x`; even in `x`, so the
    /// gradient is exactly antisymmetric.
    #[inline]
    pub fn zeta_grad_coeff(&self, r2: f64) -> f64 {
        -2.0 * self.inv_4eps2 * self.zeta_r2(r2)
    }

    /// Scalar `c(r^2)` with `grad phi(x) = c * x`.
    #[inline]
    pub fn phi_grad_coeff(&self, r2: f64) -> f64 {
        -2.0 * self.inv_8eps2 * self.phi_r2(r2)
    }

    /// `phi` and its gradient coefficient from one exponential.
    #[inline]
    pub fn phi_and_grad_coeff(&self, r2: f64) -> (f64, f64) {
        let p = self.phi_r2(r2);
        (p, -2.0 * self.inv_8eps2 * p)
    }

    /// Peak value `phi(0) = (8 pi eps^2)^(-d/2)`.
    pub fn phi_at_zero(&self) -> f64 {
        self.phi_norm
    }

    pub fn zeta_at_zero(&self) -> f64 {
        self.zeta_norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m1(eps: f64) -> Mollifier {
        Mollifier::new(eps, Dimension::One).unwrap()
    }

    /// Composite Simpson on [a, b] with n (even) panels; test-only oracle.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + k as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn closed_form_values() {
        let m = m1(0.5);
        assert_relative_eq!(m.zeta(Point::ZERO), 0.564_189_583_547_756_3, max_relative = 1e-12);
        assert_relative_eq!(m.phi(Point::ZERO), 0.398_942_280_401_432_7, max_relative = 1e-12);
        // phi(0.5) = phi(0) e^{-1/8}
        assert_relative_eq!(m.phi(Point::on_line(0.5)), 0.352_065_326_764_299_5, max_relative = 1e-12);
        // zeta'(0.5) = -0.5/(2*0.25) zeta(0.5) = -zeta(0) e^{-1/4}
        assert_relative_eq!(
            m.zeta_grad(Point::on_line(0.5)).x,
            -0.564_189_583_547_756_3 * (-0.25f64).exp(),
            max_relative = 1e-12
        );
        assert_relative_eq!(m.zeta_grad(Point::on_line(0.5)).x, -0.439_391_289_467_722_4, max_relative = 1e-9);
    }

    #[test]
    fn gradients_vanish_at_origin() {
        for d in [Dimension::One, Dimension::Two] {
            let m = Mollifier::new(0.3, d).unwrap();
            assert_eq!(m.zeta_grad(Point::ZERO).norm(), 0.0);
            assert_eq!(m.phi_grad(Point::ZERO).norm(), 0.0);
        }
    }

    #[test]
    fn rejects_nonpositive_epsilon() {
        assert!(Mollifier::new(0.0, Dimension::One).is_err());
        assert!(Mollifier::new(-1.0, Dimension::Two).is_err());
        assert!(Mollifier::new(f64::NAN, Dimension::Two).is_err());
    }

    #[test]
    fn unit_mass_1d() {
        let m = m1(0.5);
        let z = simpson(|x| m.zeta(Point::on_line(x)), -10.0, 10.0, 4000);
        assert!((z - 1.0).abs() < 1e-8, "zeta mass {z}");
        let p = simpson(|x| m.phi(Point::on_line(x)), -5.0, 5.0, 4000);
        assert!((p - 1.0).abs() < 1e-6, "phi mass {p}");
    }

    #[test]
    fn unit_mass_2d() {
        let eps = 0.3;
        let m = Mollifier::new(eps, Dimension::Two).unwrap();
        let half = 20.0 * eps;
        let inner = |y: f64| simpson(|x| m.phi(Point::new(x, y)), -half, half, 400);
        let p = simpson(inner, -half, half, 400);
        assert!((p - 1.0).abs() < 1e-6, "phi mass {p}");
    }

    #[test]
    fn self_convolution_matches_phi() {
        let m = m1(0.4);
        for &x in &[0.0, 0.3, 0.8, 1.5] {
            let conv = simpson(
                |y| m.zeta(Point::on_line(x - y)) * m.zeta(Point::on_line(y)),
                -8.0,
                8.0,
                8000,
            );
            assert!((conv - m.phi(Point::on_line(x))).abs() < 1e-5);
        }
    }

    #[test]
    fn finite_difference_gradients() {
        let step = 1e-5;
        for d in [Dimension::One, Dimension::Two] {
            let m = Mollifier::new(0.37, d).unwrap();
            let pts = [Point::new(0.21, 0.0), Point::new(-0.4, 0.33), Point::new(0.05, -0.6)];
            for p in pts {
                let p = if d == Dimension::One { Point::on_line(p.x) } else { p };
                for k in 0..d.get() {
                    let mut hi = p;
                    let mut lo = p;
                    *hi.coord_mut(k) += step;
                    *lo.coord_mut(k) -= step;
                    let fd_z = (m.zeta(hi) - m.zeta(lo)) / (2.0 * step);
                    let fd_p = (m.phi(hi) - m.phi(lo)) / (2.0 * step);
                    assert_relative_eq!(m.zeta_grad(p).coord(k), fd_z, max_relative = 1e-6);
                    assert_relative_eq!(m.phi_grad(p).coord(k), fd_p, max_relative = 1e-6);
                }
            }
        }
    }

    #[test]
    fn decays_monotonically() {
        let m = m1(0.5);
        let mut last = f64::INFINITY;
        for k in 0..200 {
            let v = m.zeta(Point::on_line(k as f64 * 0.05));
            assert!(v <= last);
            last = v;
        }
        assert_eq!(m.phi(Point::on_line(100.0)), 0.0);
    }

    proptest::proptest! {
        #[test]
        fn even_kernels_odd_gradients(x in -5.0f64..5.0, y in -5.0f64..5.0, eps in 0.01f64..2.0) {
            let m = Mollifier::new(eps, Dimension::Two).unwrap();
            let p = Point::new(x, y);
            proptest::prop_assert_eq!(m.zeta(p), m.zeta(-p));
            proptest::prop_assert_eq!(m.phi(p), m.phi(-p));
            proptest::prop_assert_eq!(m.phi_grad(p) + m.phi_grad(-p), Point::ZERO);
            proptest::prop_assert_eq!(m.zeta_grad(p) + m.zeta_grad(-p), Point::ZERO);
            proptest::prop_assert!(m.zeta(p) >= 0.0);
        }
    }
}
